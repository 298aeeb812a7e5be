"""Variance estimators for the standardized risk difference.

Nine methods are named ``M1``..``M9``:

=====  ===========================  =========================================
code   label                        estimator
=====  ===========================  =========================================
M1     Delta (model)                g' V_model g
M2     Delta (HC2)                  g' V_HC2 g
M3     Delta (HC3)                  g' V_HC3 g
M4     EIF                          var(influence values) / n
M5     Semi-parametric              arm-wise moment formula
M6     Proposed (HC2)               g' V_HC2 g + s^2 / n
M7     Proposed (HC3)               g' V_HC3 g + s^2 / n
M8     Unadjusted (HC2)             M6 on the treatment-only model
M9     Unadjusted (HC3)             M7 on the treatment-only model
=====  ===========================  =========================================

where ``g`` is the gradient of the risk difference in the coefficients and
``s^2`` the sample variance of the per-subject counterfactual contrasts.
Any :class:`HcType` (or the model covariance) can be plugged into the delta,
proposed and unadjusted families via :class:`VarianceMethod`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from covadj.data import TrialDataset
from covadj.glm import FitConfig, LogisticFit, fit_unadjusted
from covadj.standardization import CounterfactualPredictions, RdEstimate, standardize

LEVERAGE_TOL = 1e-12
COND_LIMIT = 1e12


class VarianceError(ArithmeticError):
    pass


class DegenerateLeverage(VarianceError):
    pass


class SingularInformation(VarianceError):
    pass


class DegenerateArm(VarianceError):
    pass


class HcType(str, Enum):
    CONST = "const"
    HC0 = "HC0"
    HC1 = "HC1"
    HC2 = "HC2"
    HC3 = "HC3"
    HC4 = "HC4"
    HC4M = "HC4m"
    HC5 = "HC5"

    @classmethod
    def parse(cls, text: str) -> "HcType":
        for member in cls:
            if member.value.lower() == text.strip().lower():
                return member
        raise ValueError(f"unknown sandwich type {text!r}")


FAMILIES = ("delta", "eif", "semiparametric", "proposed", "unadjusted")
_FAMILY_LABELS = {
    "delta": "Delta",
    "eif": "EIF",
    "semiparametric": "Semi-parametric",
    "proposed": "Proposed",
    "unadjusted": "Unadjusted",
}


@dataclass(frozen=True)
class VarianceMethod:
    """A variance family plus, where relevant, the coefficient covariance.

    ``hc=None`` means the model-based covariance ``(X'WX)^{-1}``.  It is
    ignored by the ``eif`` and ``semiparametric`` families.
    """

    family: str
    hc: HcType | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown variance family {self.family!r}")
        if self.family in ("eif", "semiparametric") and self.hc is not None:
            object.__setattr__(self, "hc", None)

    @property
    def adjusted(self) -> bool:
        return self.family != "unadjusted"

    @property
    def code(self) -> str:
        for code, m in STANDARD_METHODS.items():
            if m == self:
                return code
        return f"{self.family}:{self.hc.value if self.hc else 'model'}"

    @property
    def label(self) -> str:
        base = _FAMILY_LABELS[self.family]
        if self.family in ("eif", "semiparametric"):
            return base
        return f"{base} ({self.hc.value if self.hc else 'model'})"

    def __str__(self) -> str:
        return self.code

    @classmethod
    def parse(cls, text: str) -> "VarianceMethod":
        """Parse ``M1``..``M9`` or ``family[:hc]`` such as ``proposed:HC4``."""
        t = text.strip()
        if t.upper() in STANDARD_METHODS:
            return STANDARD_METHODS[t.upper()]
        family, _, hc = t.partition(":")
        family = family.strip().lower().replace("-", "")
        if family not in FAMILIES:
            raise ValueError(f"unknown method {text!r}")
        if not hc or hc.strip().lower() == "model":
            return cls(family)
        return cls(family, HcType.parse(hc))


M1 = VarianceMethod("delta")
M2 = VarianceMethod("delta", HcType.HC2)
M3 = VarianceMethod("delta", HcType.HC3)
M4 = VarianceMethod("eif")
M5 = VarianceMethod("semiparametric")
M6 = VarianceMethod("proposed", HcType.HC2)
M7 = VarianceMethod("proposed", HcType.HC3)
M8 = VarianceMethod("unadjusted", HcType.HC2)
M9 = VarianceMethod("unadjusted", HcType.HC3)

STANDARD_METHODS = {
    "M1": M1, "M2": M2, "M3": M3, "M4": M4, "M5": M5,
    "M6": M6, "M7": M7, "M8": M8, "M9": M9,
}

EXTENDED_PROPOSED = (VarianceMethod("proposed"),) + tuple(VarianceMethod("proposed", hc) for hc in HcType)


@dataclass(frozen=True)
class VarianceEstimate:
    method: VarianceMethod
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise VarianceError(f"invalid variance {self.value!r} for {self.method}")


def meat_weights(fit: LogisticFit, hc: HcType) -> np.ndarray:
    """Per-subject weights ``omega_i`` of the sandwich meat ``X' diag(omega) X``."""
    e2 = fit.residuals ** 2
    h = fit.hat
    n, p = fit.n, fit.p
    if hc is HcType.CONST:
        if n <= p:
            raise DegenerateLeverage("const weights need n > p")
        return np.full(n, e2.sum() / (n - p))
    if hc is HcType.HC0:
        return e2
    if hc is HcType.HC1:
        if n <= p:
            raise DegenerateLeverage("HC1 needs n > p")
        return e2 * n / (n - p)

    one_minus_h = 1.0 - h
    if np.any(one_minus_h < LEVERAGE_TOL):
        raise DegenerateLeverage(f"leverage of 1 encountered ({hc.value})")
    if hc is HcType.HC2:
        return e2 / one_minus_h
    if hc is HcType.HC3:
        return e2 / one_minus_h ** 2
    nh_p = n * h / p
    if hc is HcType.HC4:
        delta = np.minimum(4.0, nh_p)
    elif hc is HcType.HC4M:
        delta = np.minimum(1.0, nh_p) + np.minimum(1.5, nh_p)
    elif hc is HcType.HC5:
        delta = 0.5 * np.minimum(nh_p, max(4.0, 0.7 * n * h.max() / p))
    else:  # pragma: no cover
        raise ValueError(hc)
    return e2 / one_minus_h ** delta


def sandwich_covariance(fit: LogisticFit, hc: HcType) -> np.ndarray:
    """``V_model (X' diag(omega) X) V_model``."""
    X = fit.design.X
    omega = meat_weights(fit, hc)
    meat = (X.T * omega) @ X
    V = fit.cov_model
    S = V @ meat @ V
    return 0.5 * (S + S.T)


def coef_covariance(fit: LogisticFit, hc: HcType | None) -> np.ndarray:
    return fit.cov_model if hc is None else sandwich_covariance(fit, hc)


def delta_conditional_variance(rd: RdEstimate, V: np.ndarray) -> float:
    g = rd.grad
    return max(float(g @ V @ g), 0.0)


def proposed_unconditional_variance(rd: RdEstimate, V: np.ndarray, n: int | None = None) -> float:
    """Conditional delta variance plus the covariate-driven term ``s^2 / n``."""
    n = rd.n if n is None else n
    return delta_conditional_variance(rd, V) + rd.sigma2_rd / n


def eif_values(fit: LogisticFit, rd: RdEstimate, preds: CounterfactualPredictions) -> np.ndarray:
    """Per-subject influence values of the risk difference."""
    X = fit.design.X
    n = fit.n
    M = (X.T * fit.weights) @ X / n
    if np.linalg.cond(M) > COND_LIMIT:
        raise SingularInformation("information matrix is numerically singular")
    lam_b = np.linalg.solve(M, (X * fit.residuals[:, None]).T).T
    return (preds.pi1 - rd.pi_bar1) - (preds.pi0 - rd.pi_bar0) + lam_b @ rd.grad


def eif_variance(fit: LogisticFit, rd: RdEstimate, preds: CounterfactualPredictions) -> float:
    lam = eif_values(fit, rd, preds)
    return float(np.var(lam, ddof=1)) / len(lam)


def _cov(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a - a.mean(), b - b.mean())) / (len(a) - 1)


def semiparametric_variance(fit: LogisticFit, preds: CounterfactualPredictions) -> float:
    """Arm-wise moment estimator built on the doubly robust representation.

    Uses arm-specific allocation fractions ``theta_j = n_j / n``.
    """
    y = fit.y
    z = fit.design.X[:, 1].astype(bool)
    n = len(y)
    arms = {1: z, 0: ~z}
    if min(int(arms[1].sum()), int(arms[0].sum())) < 2:
        raise DegenerateArm("each arm needs at least two subjects")
    pred = {1: preds.pi1, 0: preds.pi0}

    var = {}
    for j in (0, 1):
        a = arms[j]
        theta = a.sum() / n
        resid = y[a] - pred[j][a]
        var[j] = (
            _cov(resid, resid) / theta
            + 2.0 * _cov(y[a], pred[j][a])
            - _cov(pred[j], pred[j])
        ) / n
    cov01 = (
        _cov(y[arms[0]], pred[1][arms[0]])
        + _cov(y[arms[1]], pred[0][arms[1]])
        - _cov(pred[0], pred[1])
    ) / n
    return max(var[1] - 2.0 * cov01 + var[0], 0.0)


def variance_from_fit(
    method: VarianceMethod,
    fit: LogisticFit,
    preds: CounterfactualPredictions,
    rd: RdEstimate,
    cache: dict | None = None,
) -> float:
    """Variance of ``rd`` for ``method``, given the fit the estimate came from.

    For the ``unadjusted`` family the caller passes the treatment-only fit.
    ``cache`` (keyed by sandwich type) lets several methods on the same fit
    share coefficient covariances.
    """
    fam = method.family
    if fam in ("delta", "proposed", "unadjusted"):
        if cache is None:
            V = coef_covariance(fit, method.hc)
        elif method.hc in cache:
            V = cache[method.hc]
        else:
            V = cache[method.hc] = coef_covariance(fit, method.hc)
        if fam == "delta":
            return delta_conditional_variance(rd, V)
        return proposed_unconditional_variance(rd, V, fit.n)
    if fam == "eif":
        return eif_variance(fit, rd, preds)
    if fam == "semiparametric":
        return semiparametric_variance(fit, preds)
    raise ValueError(method)  # pragma: no cover


def unadjusted_pipeline(
    data: TrialDataset, hc: HcType = HcType.HC3, config: FitConfig | None = None
) -> tuple[RdEstimate, VarianceEstimate]:
    fit = fit_unadjusted(data, config)
    preds, rd = standardize(fit)
    method = VarianceMethod("unadjusted", hc)
    return rd, VarianceEstimate(method, variance_from_fit(method, fit, preds, rd))
