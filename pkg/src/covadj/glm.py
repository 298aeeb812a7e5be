"""Logistic regression by iteratively reweighted least squares.

Only the canonical logit link with unit prior weights is supported.  The fit
object carries everything the variance estimators need: fitted
probabilities, response residuals, leverages and the model-based covariance
``(X'WX)^{-1}``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from covadj.data import DesignMatrix, TrialDataset, build_design, dependent_columns


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 25
    coef_tolerance: float = 1e-8
    divergence_bound: float = 1e4
    separation_eta_bound: float = 30.0
    max_halvings: int = 10
    criterion: str = "coefficient"
    deviance_tolerance: float = 1e-8

    def __post_init__(self):
        for name in ("max_iterations", "coef_tolerance", "divergence_bound", "separation_eta_bound", "deviance_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.criterion not in ("coefficient", "deviance"):
            raise ValueError("criterion must be 'coefficient' or 'deviance'")

    @classmethod
    def glm_compatible(cls) -> "FitConfig":
        """Settings that mirror R's ``glm.fit``.

        Iterations start from ``mu = (y + 0.5) / 2`` and stop once the
        relative deviance change drops below 1e-8.  Nearly separated data
        therefore yield a "converged" fit with very large coefficients
        instead of an error; only running out of iterations counts as
        non-convergence.
        """
        return cls(criterion="deviance", separation_eta_bound=math.inf, divergence_bound=math.inf)


class NonConvergence(RuntimeError):
    """The IRLS iterations did not settle on a finite maximum likelihood estimate.

    ``reason`` is one of ``"max_iterations"``, ``"divergence"`` or ``"separation"``.
    """

    def __init__(self, reason: str, iterations: int, detail: str = ""):
        self.reason = reason
        self.iterations = iterations
        msg = f"logistic fit did not converge ({reason}) after {iterations} iterations"
        super().__init__(f"{msg}: {detail}" if detail else msg)


@dataclass(frozen=True, eq=False)
class LogisticFit:
    design: DesignMatrix
    y: np.ndarray
    coef: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    hat: np.ndarray
    cov_model: np.ndarray
    iterations: int
    loglik: float
    fallback_steps: int = 0

    @property
    def retained_covariates(self) -> tuple[str, ...]:
        return self.design.covariates

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def p(self) -> int:
        return self.design.p

    @property
    def weights(self) -> np.ndarray:
        return self.fitted * (1.0 - self.fitted)

    def score(self) -> np.ndarray:
        return self.design.X.T @ self.residuals


def _loglik(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(y, eta) - np.logaddexp(0.0, eta).sum())


def fit_irls(design: DesignMatrix, y: np.ndarray, config: FitConfig | None = None) -> LogisticFit:
    """Maximum likelihood logistic fit by Newton-Raphson (IRLS).

    With the default ``criterion="coefficient"`` iterations start at
    ``b = 0`` and stop when the largest coefficient change is below
    ``coef_tolerance``.  Steps that lower the log-likelihood are halved up
    to ``max_halvings`` times.  Raises :class:`NonConvergence` when the
    iteration limit is hit, when any ``|b_k|`` exceeds ``divergence_bound``,
    or when any ``|x_i'b|`` exceeds ``separation_eta_bound``.

    ``criterion="deviance"`` follows R's ``glm.fit`` instead, see
    :meth:`FitConfig.glm_compatible`.
    """
    cfg = config or FitConfig()
    X = design.X
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise ValueError("outcome length does not match the design")
    by_deviance = cfg.criterion == "deviance"

    b = np.zeros(X.shape[1])
    if by_deviance:
        mu0 = (y + 0.5) / 2.0
        eta = np.log(mu0 / (1.0 - mu0))
        ll = float(np.sum(y * np.log(mu0) + (1.0 - y) * np.log1p(-mu0)))
    else:
        eta = np.zeros(X.shape[0])
        ll = _loglik(eta, y)
    for it in range(1, cfg.max_iterations + 1):
        pi = expit(eta)
        w = pi * (1.0 - pi)
        info = (X.T * w) @ X
        try:
            chol = np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            raise NonConvergence("separation", it, "information matrix not positive definite") from None
        # weighted least squares on the working response eta + (y - pi) / w
        rhs = X.T @ (w * eta + (y - pi)) if (by_deviance and it == 1) else X.T @ (y - pi)
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))

        new_b = step if (by_deviance and it == 1) else b + step
        new_eta = X @ new_b
        new_ll = _loglik(new_eta, y)
        halvings = 0
        while it > 1 and new_ll < ll - 1e-10 * (1.0 + abs(ll)) and halvings < cfg.max_halvings:
            step = step / 2.0
            new_b = b + step
            new_eta = X @ new_b
            new_ll = _loglik(new_eta, y)
            halvings += 1
        dev_change = abs(new_ll - ll) / (abs(2.0 * new_ll) / 2.0 + 0.05)
        b, eta, ll = new_b, new_eta, new_ll

        if not np.all(np.isfinite(b)) or np.max(np.abs(b)) > cfg.divergence_bound:
            raise NonConvergence("divergence", it, f"max |b| = {np.max(np.abs(b)):.3g}")
        if np.max(np.abs(eta)) > cfg.separation_eta_bound:
            raise NonConvergence("separation", it, f"max |x'b| = {np.max(np.abs(eta)):.3g}")
        if by_deviance:
            if dev_change < cfg.deviance_tolerance:
                break
        elif np.max(np.abs(step)) < cfg.coef_tolerance:
            break
    else:
        raise NonConvergence("max_iterations", cfg.max_iterations)

    return _finalize(design, y, b, eta, it, ll)


def _finalize(design: DesignMatrix, y: np.ndarray, b: np.ndarray, eta: np.ndarray, iterations: int, ll: float) -> LogisticFit:
    X = design.X
    pi = expit(eta)
    w = pi * (1.0 - pi)
    info = (X.T * w) @ X
    chol = np.linalg.cholesky(info)
    chol_inv = np.linalg.solve(chol, np.eye(len(b)))
    V = chol_inv.T @ chol_inv
    V = 0.5 * (V + V.T)
    hat = w * np.einsum("ij,jk,ik->i", X, V, X)
    for arr in (b, pi, V, hat):
        arr.flags.writeable = False
    resid = y - pi
    resid.flags.writeable = False
    return LogisticFit(
        design=design,
        y=y,
        coef=b,
        fitted=pi,
        residuals=resid,
        hat=hat,
        cov_model=V,
        iterations=iterations,
        loglik=ll,
    )


def fit_with_fallback(data: TrialDataset, config: FitConfig | None = None) -> LogisticFit:
    """Fit the full covariate model, dropping covariates until a fit converges.

    Covariates that are linearly dependent on earlier design columns are
    removed before fitting.  After each failed fit the last retained
    covariate (in declared order) is dropped.  Every removal counts as one
    fallback step.  The treatment-only model is the last resort; if it too
    fails, its :class:`NonConvergence` propagates.
    """
    retained = list(data.covariate_names)
    steps = 0
    while True:
        design = build_design(data, retained)
        dep = [j for j in dependent_columns(design.X) if j >= 2]
        if dep:
            drop = {design.covariates[j - 2] for j in dep}
            retained = [c for c in retained if c not in drop]
            steps += len(drop)
            continue
        try:
            fit = fit_irls(design, data.y, config)
        except NonConvergence:
            if not retained:
                raise
            retained.pop()
            steps += 1
            continue
        return dataclasses.replace(fit, fallback_steps=steps)


def fit_unadjusted(data: TrialDataset, config: FitConfig | None = None) -> LogisticFit:
    """Treatment-only logistic fit."""
    return fit_irls(build_design(data, ()), data.y, config)
