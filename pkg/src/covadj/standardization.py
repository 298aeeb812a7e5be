"""G-computation: counterfactual predictions and the risk difference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from covadj.data import TrialDataset, build_design
from covadj.glm import LogisticFit


@dataclass(frozen=True, eq=False)
class CounterfactualPredictions:
    """Per-subject predicted response under treatment (``pi1``) and control (``pi0``)."""

    pi1: np.ndarray
    pi0: np.ndarray
    X1: np.ndarray
    X0: np.ndarray

    @property
    def contrast(self) -> np.ndarray:
        return self.pi1 - self.pi0


@dataclass(frozen=True)
class RdEstimate:
    pi_bar1: float
    pi_bar0: float
    rd: float
    grad1: np.ndarray
    grad0: np.ndarray
    sigma2_rd: float
    n: int

    @property
    def grad(self) -> np.ndarray:
        """Gradient of the risk difference with respect to the coefficients."""
        return self.grad1 - self.grad0


def predict_counterfactual(fit: LogisticFit, data: TrialDataset | None = None) -> CounterfactualPredictions:
    """Predict every subject's response with treatment forced to 1 and to 0.

    The design used is the one the fit retained, so dropped covariates are
    ignored.  ``data`` defaults to the data the fit was computed on.
    """
    if data is None:
        design = fit.design
    else:
        design = build_design(data, fit.retained_covariates)
    X1 = design.counterfactual(1)
    X0 = design.counterfactual(0)
    return CounterfactualPredictions(expit(X1 @ fit.coef), expit(X0 @ fit.coef), X1, X0)


def estimate_rd(preds: CounterfactualPredictions, fit: LogisticFit | None = None) -> RdEstimate:
    """Average the counterfactual predictions over the whole sample.

    ``grad1``/``grad0`` are the derivatives of the two averages with respect
    to the coefficients, ``mean_i x_i(j) pi_i(j) (1 - pi_i(j))``.
    """
    n = len(preds.pi1)
    w1 = preds.pi1 * (1.0 - preds.pi1)
    w0 = preds.pi0 * (1.0 - preds.pi0)
    grad1 = preds.X1.T @ w1 / n
    grad0 = preds.X0.T @ w0 / n
    diff = preds.contrast
    sigma2 = float(np.var(diff, ddof=1)) if n > 1 and np.ptp(diff) > 0 else 0.0
    pi_bar1 = float(preds.pi1.mean())
    pi_bar0 = float(preds.pi0.mean())
    return RdEstimate(
        pi_bar1=pi_bar1,
        pi_bar0=pi_bar0,
        rd=pi_bar1 - pi_bar0,
        grad1=grad1,
        grad0=grad0,
        sigma2_rd=sigma2,
        n=n,
    )


def standardize(fit: LogisticFit) -> tuple[CounterfactualPredictions, RdEstimate]:
    preds = predict_counterfactual(fit)
    return preds, estimate_rd(preds, fit)
