import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_trial
from covadj.data import TrialDataset, build_design
from covadj.glm import FitConfig, NonConvergence, fit_irls, fit_unadjusted, fit_with_fallback


def test_score_equations_and_hat_trace(fit200):
    np.testing.assert_allclose(fit200.score(), 0.0, atol=1e-9)
    assert fit200.hat.sum() == pytest.approx(fit200.p, abs=1e-10)
    assert np.all((fit200.hat > 0) & (fit200.hat < 1))


def test_calibration_in_each_arm(trial200, fit200):
    # intercept and treatment columns make fitted means match observed arm rates
    for arm in (0.0, 1.0):
        m = trial200.z == arm
        assert fit200.fitted[m].mean() == pytest.approx(trial200.y[m].mean(), abs=1e-10)


def test_model_covariance_is_inverse_information(fit200):
    X, w = fit200.design.X, fit200.weights
    info = (X.T * w) @ X
    np.testing.assert_allclose(fit200.cov_model @ info, np.eye(fit200.p), atol=1e-9)


def test_fit_outputs_are_frozen(fit200):
    with pytest.raises(ValueError):
        fit200.coef[0] = 0.0


def test_deviance_mode_agrees_with_default(trial200, fit200):
    glm = fit_with_fallback(trial200, FitConfig.glm_compatible())
    np.testing.assert_allclose(glm.coef, fit200.coef, atol=1e-7)


def test_unadjusted_gives_arm_log_odds():
    y = np.array([1, 0, 0, 0, 0, 1, 1, 0, 0, 0], float)
    z = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1], float)
    fit = fit_unadjusted(TrialDataset(y, z, np.empty((10, 0)), ()))
    p0, p1 = 0.2, 0.4
    logit = lambda p: np.log(p / (1 - p))
    np.testing.assert_allclose(fit.coef, [logit(p0), logit(p1) - logit(p0)], atol=1e-12)


def _separated(n=20):
    # a covariate that perfectly predicts the outcome
    x = np.linspace(-1, 1, n)
    y = (x > 0).astype(float)
    z = np.tile([0.0, 1.0], n // 2)
    return TrialDataset(y, z, x[:, None], ("x",))


def test_separation_detected():
    with pytest.raises(NonConvergence) as info:
        fit_irls(build_design(_separated()), _separated().y)
    assert info.value.reason in ("separation", "divergence")


def test_fallback_drops_last_covariate():
    d = _separated()
    rng = np.random.default_rng(1)
    w = np.column_stack([rng.standard_normal(d.n), d.w[:, 0]])
    data = TrialDataset(d.y, d.z, w, ("noise", "x"))
    fit = fit_with_fallback(data)
    assert fit.retained_covariates == ("noise",)
    assert fit.fallback_steps == 1


def test_fallback_drops_collinear_covariate(trial200):
    w = np.column_stack([trial200.w, trial200.w[:, 0] * 3.0 + 1.0])
    data = TrialDataset(trial200.y, trial200.z, w, (*trial200.covariate_names, "copy"))
    fit = fit_with_fallback(data)
    assert fit.retained_covariates == trial200.covariate_names
    assert fit.fallback_steps == 1


def test_treatment_only_failure_propagates():
    # control arm has no events: the treatment coefficient has no finite MLE
    y = np.array([0, 0, 0, 0, 1, 0, 1, 1], float)
    z = np.array([0, 0, 0, 0, 1, 1, 1, 1], float)
    with pytest.raises(NonConvergence):
        fit_with_fallback(TrialDataset(y, z, np.arange(8.0)[:, None], ("x",)))


def test_glm_mode_accepts_zero_event_arm():
    y = np.array([0, 0, 0, 0, 1, 0, 1, 1], float)
    z = np.array([0, 0, 0, 0, 1, 1, 1, 1], float)
    fit = fit_unadjusted(TrialDataset(y, z, np.empty((8, 0)), ()), FitConfig.glm_compatible())
    assert fit.fitted[z == 0].max() < 1e-6
    assert fit.fitted[z == 1].mean() == pytest.approx(0.75, abs=1e-9)


def test_iteration_cap():
    with pytest.raises(NonConvergence) as info:
        fit_with_fallback(random_trial(np.random.default_rng(4), k=0), FitConfig(max_iterations=1))
    assert info.value.reason == "max_iterations"


@pytest.mark.parametrize("kwargs", [{"max_iterations": 0}, {"coef_tolerance": -1.0}, {"criterion": "loglik"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        FitConfig(**kwargs)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    data = random_trial(rng)
    order = rng.permutation(data.n)
    a = fit_with_fallback(data)
    b = fit_with_fallback(data.take(order))
    np.testing.assert_allclose(b.coef, a.coef, atol=1e-9)
    np.testing.assert_allclose(b.hat, a.hat[order], atol=1e-10)
    np.testing.assert_allclose(b.cov_model, a.cov_model, atol=1e-10)
