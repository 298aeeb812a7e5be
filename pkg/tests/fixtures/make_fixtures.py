"""Regenerate the committed oracle fixtures.

Run from the repository root::

    python3 tests/fixtures/make_fixtures.py

Nothing here imports ``covadj``.  The reference values come from statsmodels
(GLM fit, hat values, model covariance, average marginal effects) and from
deliberately naive loop implementations of the sandwich, semi-parametric and
influence-function formulas, written against the formulas rather than
against the package code.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from pathlib import Path

import numpy as np
import statsmodels.api as sm

HERE = Path(__file__).parent
N = 200
SEED = 20240917
COVARIATES = ("x_cont", "x_cat", "x_age")


def make_dataset():
    rng = np.random.default_rng(SEED)
    x_cont = rng.standard_normal(N)
    x_cat = (rng.random(N) < 0.5).astype(int)
    x_age = np.round(rng.uniform(20.0, 80.0, N), 1)
    z = np.zeros(N, dtype=int)
    z[rng.permutation(N)[: N // 2]] = 1
    eta = -1.0 + 0.8 * z + 1.1 * x_cont - 0.7 * x_cat + 0.02 * (x_age - 50.0) + 0.3 * x_cont * z
    y = (rng.random(N) < 1.0 / (1.0 + np.exp(-eta))).astype(int)
    return y, z, np.column_stack([x_cont, x_cat, x_age])


def write_dataset(path, y, z, w):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["y", "z", *COVARIATES])
        for yi, zi, wi in zip(y, z, w):
            out.writerow([int(yi), int(zi), repr(float(wi[0])), int(wi[1]), repr(float(wi[2]))])


def read_dataset(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    y = np.array([float(r["y"]) for r in rows])
    z = np.array([float(r["z"]) for r in rows])
    w = np.array([[float(r[c]) for c in COVARIATES] for r in rows])
    return y, z, w


def glm_reference(X, y):
    res = sm.GLM(y, X, family=sm.families.Binomial()).fit(tol=1e-14, maxiter=200)
    hat = res.get_influence().hat_matrix_diag
    return res, hat


def sandwich_reference(X, resid, hat, V):
    """Bread-meat-bread with per-observation weights, one loop per subject."""
    n, p = X.shape
    hmax = max(hat)
    out = {}
    for kind in ("const", "HC0", "HC1", "HC2", "HC3", "HC4", "HC4m", "HC5"):
        meat = np.zeros((p, p))
        ss = sum(e * e for e in resid)
        for i in range(n):
            e2, h = resid[i] ** 2, hat[i]
            r = n * h / p
            if kind == "const":
                om = ss / (n - p)
            elif kind == "HC0":
                om = e2
            elif kind == "HC1":
                om = e2 * n / (n - p)
            elif kind == "HC2":
                om = e2 / (1 - h)
            elif kind == "HC3":
                om = e2 / (1 - h) ** 2
            elif kind == "HC4":
                om = e2 / (1 - h) ** min(4.0, r)
            elif kind == "HC4m":
                om = e2 / (1 - h) ** (min(1.0, r) + min(1.5, r))
            else:
                om = e2 / (1 - h) ** (0.5 * min(r, max(4.0, 0.7 * n * hmax / p)))
            meat += om * np.outer(X[i], X[i])
        out[kind] = (V @ meat @ V).tolist()
    return out


def expit(t):
    return 1.0 / (1.0 + math.exp(-t))


def semiparametric_reference(y, z, pi1, pi0):
    """2x2 asymptotic covariance of the two arm means, then the contrast."""
    n = len(y)
    arm = {j: [i for i in range(n) if z[i] == j] for j in (0, 1)}
    pred = {0: list(pi0), 1: list(pi1)}
    cov = statistics.covariance
    S = [[0.0, 0.0], [0.0, 0.0]]
    for j in (0, 1):
        idx = arm[j]
        theta = len(idx) / n
        res = [y[i] - pred[j][i] for i in idx]
        S[j][j] = (
            statistics.variance(res) / theta
            + 2 * cov([y[i] for i in idx], [pred[j][i] for i in idx])
            - statistics.variance(pred[j])
        )
    S[0][1] = S[1][0] = (
        cov([y[i] for i in arm[0]], [pred[1][i] for i in arm[0]])
        + cov([y[i] for i in arm[1]], [pred[0][i] for i in arm[1]])
        - cov(pred[0], pred[1])
    )
    c = (-1.0, 1.0)
    return sum(c[a] * S[a][b] * c[b] for a in (0, 1) for b in (0, 1)) / n


def eif_reference(X, y, b):
    n, p = X.shape
    X1, X0 = X.copy(), X.copy()
    X1[:, 1], X0[:, 1] = 1.0, 0.0
    pi = [expit(float(X[i] @ b)) for i in range(n)]
    pi1 = [expit(float(X1[i] @ b)) for i in range(n)]
    pi0 = [expit(float(X0[i] @ b)) for i in range(n)]
    M = np.zeros((p, p))
    for i in range(n):
        M += pi[i] * (1 - pi[i]) * np.outer(X[i], X[i])
    M /= n
    d1 = sum(pi1[i] * (1 - pi1[i]) * X1[i] for i in range(n)) / n
    d0 = sum(pi0[i] * (1 - pi0[i]) * X0[i] for i in range(n)) / n
    m1, m0 = statistics.fmean(pi1), statistics.fmean(pi0)
    lam = []
    for i in range(n):
        lb = np.linalg.solve(M, X[i] * (y[i] - pi[i]))
        lam.append((pi1[i] - m1 + float(d1 @ lb)) - (pi0[i] - m0 + float(d0 @ lb)))
    return lam, statistics.variance(lam) / n


def main():
    csv_path = HERE / "trial200.csv"
    if not csv_path.exists():
        write_dataset(csv_path, *make_dataset())
    y, z, w = read_dataset(csv_path)
    X = np.column_stack([np.ones(N), z, w])

    res, hat = glm_reference(X, y)
    b = np.asarray(res.params)
    mu = np.asarray(res.fittedvalues)
    V = np.asarray(res.cov_params())
    resid = y - mu

    # statsmodels' own HC0 must agree with the loop version
    hc0_sm = np.asarray(sm.GLM(y, X, family=sm.families.Binomial()).fit(tol=1e-14, maxiter=200, cov_type="HC0").cov_params())
    sandwich = sandwich_reference(X, list(resid), list(hat), V)
    assert np.allclose(hc0_sm, sandwich["HC0"], rtol=0, atol=1e-12), "HC0 disagrees with statsmodels"

    logit = sm.Logit(y, X).fit(disp=0, method="newton", tol=1e-14, maxiter=200)
    me = logit.get_margeff(at="overall", method="dydx", dummy=True)

    X1, X0 = X.copy(), X.copy()
    X1[:, 1], X0[:, 1] = 1.0, 0.0
    pi1 = 1.0 / (1.0 + np.exp(-X1 @ b))
    pi0 = 1.0 / (1.0 + np.exp(-X0 @ b))
    lam, eif_var = eif_reference(X, list(y), b)

    fixtures = {
        "glm.json": {
            "columns": ["(intercept)", "z", *COVARIATES],
            "coef": b.tolist(),
            "fitted": mu.tolist(),
            "hat": hat.tolist(),
            "cov_model": V.tolist(),
            "loglik": float(res.llf),
        },
        "sandwich.json": sandwich,
        "margeff.json": {
            "rd": float(me.margeff[0]),
            "se": float(me.margeff_se[0]),
            "note": "statsmodels Logit.get_margeff(at='overall', dummy=True), treatment column",
        },
        "semiparametric.json": {"variance": semiparametric_reference(list(y), list(z), pi1, pi0)},
        "eif.json": {"values": lam, "variance": eif_var},
    }
    for name, payload in fixtures.items():
        (HERE / name).write_text(json.dumps(payload, indent=1) + "\n")
        print("wrote", name)


if __name__ == "__main__":
    main()
