"""Wald intervals and a one-call analysis across variance methods."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.special import ndtr, ndtri

from covadj.data import TrialDataset
from covadj.glm import FitConfig, LogisticFit, NonConvergence, fit_unadjusted, fit_with_fallback
from covadj.standardization import CounterfactualPredictions, RdEstimate, standardize
from covadj.variance import STANDARD_METHODS, VarianceError, VarianceMethod, variance_from_fit


class NegativeVariance(ValueError):
    pass


@lru_cache(maxsize=64)
def z_quantile(alpha: float) -> float:
    """Upper ``alpha/2`` point of the standard normal."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return float(-ndtri(alpha / 2.0))


def wald_interval(rd: float, variance: float, alpha: float = 0.05) -> tuple[float, float, float]:
    """Return ``(ci_low, ci_high, p_value)`` for a normal-theory Wald test of ``rd = 0``."""
    if variance < 0 or math.isnan(variance):
        raise NegativeVariance(f"variance must be nonnegative, got {variance!r}")
    se = math.sqrt(variance)
    half = z_quantile(alpha) * se
    if se == 0.0:
        p = 1.0 if rd == 0.0 else 0.0
    else:
        p = float(2.0 * ndtr(-abs(rd) / se))
    return rd - half, rd + half, p


@dataclass(frozen=True)
class InferenceSummary:
    method: VarianceMethod
    rd: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    alpha: float
    fallback_steps: int
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.code
        d["label"] = self.method.label
        return d

    @classmethod
    def failed(cls, method: VarianceMethod, alpha: float, error: str, fallback_steps: int = 0) -> "InferenceSummary":
        nan = float("nan")
        return cls(method, nan, nan, nan, nan, nan, alpha, fallback_steps, error)


@dataclass(frozen=True)
class _Standardized:
    fit: LogisticFit
    preds: CounterfactualPredictions
    rd: RdEstimate
    covariances: dict = field(default_factory=dict)


def _standardized(fitter, data: TrialDataset, config: FitConfig | None) -> _Standardized | str:
    try:
        fit = fitter(data, config)
    except NonConvergence as exc:
        return str(exc)
    preds, rd = standardize(fit)
    return _Standardized(fit, preds, rd)


def summarize(method: VarianceMethod, st: _Standardized, alpha: float, fallback_steps: int) -> InferenceSummary:
    try:
        var = variance_from_fit(method, st.fit, st.preds, st.rd, st.covariances)
    except (VarianceError, np.linalg.LinAlgError) as exc:
        return InferenceSummary.failed(method, alpha, f"{type(exc).__name__}: {exc}", fallback_steps)
    lo, hi, p = wald_interval(st.rd.rd, var, alpha)
    return InferenceSummary(method, st.rd.rd, math.sqrt(var), lo, hi, p, alpha, fallback_steps)


def analyze_all(
    data: TrialDataset,
    methods: Iterable[VarianceMethod] | None = None,
    alpha: float = 0.05,
    config: FitConfig | None = None,
) -> list[InferenceSummary]:
    """One :class:`InferenceSummary` per method, in the order given.

    All covariate-adjusted methods share a single fit (with covariate-drop
    fallback) and therefore a single point estimate; unadjusted methods
    share one treatment-only fit.  Failures are reported in the ``error``
    field instead of being raised.
    """
    methods = list(STANDARD_METHODS.values() if methods is None else methods)
    if not methods:
        raise ValueError("no methods requested")
    adjusted = unadjusted = None
    if any(m.adjusted for m in methods):
        adjusted = _standardized(fit_with_fallback, data, config)
    if any(not m.adjusted for m in methods):
        unadjusted = _standardized(fit_unadjusted, data, config)

    out = []
    for m in methods:
        st = adjusted if m.adjusted else unadjusted
        if isinstance(st, str):
            out.append(InferenceSummary.failed(m, alpha, st))
            continue
        steps = st.fit.fallback_steps if m.adjusted else 0
        out.append(summarize(m, st, alpha, steps))
    return out
