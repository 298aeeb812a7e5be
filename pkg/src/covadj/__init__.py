"""Covariate-adjusted risk differences for randomized trials with binary outcomes.

Fit a logistic working model, standardize over the sample (g-computation)
and attach one of several variance estimators, including one that targets
the unconditional (population-averaged) effect.

>>> from covadj import TrialDataset, analyze_all, M7
>>> [s] = analyze_all(data, [M7])                      # doctest: +SKIP
>>> s.rd, s.ci_low, s.ci_high                          # doctest: +SKIP
"""

from covadj.data import (
    DataError,
    DesignMatrix,
    MissingColumn,
    NonBinaryOutcome,
    NonBinaryTreatment,
    TrialDataset,
    TrialRecord,
    UnparsableNumeric,
    build_design,
    check_rank,
    load_csv,
    write_csv,
)
from covadj.glm import FitConfig, LogisticFit, NonConvergence, fit_irls, fit_unadjusted, fit_with_fallback
from covadj.inference import InferenceSummary, NegativeVariance, analyze_all, wald_interval
from covadj.simulation import (
    SCENARIOS,
    RandomizationScheme,
    Scenario,
    SimConfig,
    SimMetrics,
    load_config,
    run_study,
    true_effect,
    true_rd,
)
from covadj.standardization import CounterfactualPredictions, RdEstimate, estimate_rd, predict_counterfactual, standardize
from covadj.variance import (
    EXTENDED_PROPOSED,
    M1, M2, M3, M4, M5, M6, M7, M8, M9,
    STANDARD_METHODS,
    DegenerateArm,
    DegenerateLeverage,
    HcType,
    SingularInformation,
    VarianceError,
    VarianceEstimate,
    VarianceMethod,
    coef_covariance,
    delta_conditional_variance,
    eif_values,
    eif_variance,
    proposed_unconditional_variance,
    sandwich_covariance,
    semiparametric_variance,
    unadjusted_pipeline,
    variance_from_fit,
)

__version__ = "0.1.0"
