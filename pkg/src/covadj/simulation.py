"""Monte Carlo operating characteristics of the variance estimators.

Each replication draws its own data from a generator seeded by
``SeedSequence(master_seed, spawn_key=(index,))`` feeding a PCG64 bit
generator, so a study gives the same numbers whatever the number of worker
processes or the order in which replications finish.  Within a replication
the draws happen in a fixed order: ``X_cont`` (standard normal), ``X_cat``
(uniform < 0.5), the randomization, then outcome uniforms.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml
from scipy import integrate
from scipy.special import expit

from covadj.data import DataError, TrialDataset
from covadj.glm import FitConfig
from covadj.inference import analyze_all
from covadj.variance import STANDARD_METHODS, VarianceMethod

COVARIATES = ("x_cont", "x_cat")


@dataclass(frozen=True)
class Scenario:
    """Outcome model ``logit P(Y=1) = b0 + b1 Z + b2 Xc + b3 Xk + b4 Xc^2 + b5 Xc Z + b6 Xc^2 Z``."""

    beta: tuple[float, ...]
    label: str = ""
    true_rd: float | None = None

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        if len(beta) < 7:
            beta = beta + (0.0,) * (7 - len(beta))
        if len(beta) != 7 or not all(math.isfinite(b) for b in beta):
            raise ValueError("scenario needs up to 7 finite coefficients")
        object.__setattr__(self, "beta", beta)

    def linear_predictor(self, z, x_cont, x_cat):
        b = self.beta
        return (
            b[0] + b[1] * z + b[2] * x_cont + b[3] * x_cat
            + b[4] * x_cont ** 2 + b[5] * x_cont * z + b[6] * x_cont ** 2 * z
        )


SCENARIOS = {
    1: Scenario((-1.7, 1.1, 3.0, -3.0), "Scenario 1: moderate treatment effect"),
    2: Scenario((-4.0, 2.0, 4.2, -3.0), "Scenario 2: large treatment effect"),
    3: Scenario((-1.2, 0.0, 1.0, -1.0), "Scenario 3: no treatment effect"),
    4: Scenario((-4.0, 2.0, 4.2, -3.0, 1.0, -0.2, 0.2), "Scenario 4: misspecified, omitted terms"),
    5: Scenario((-2.2, 0.7, 0.0, 0.0, 0.0, 0.0, 0.0), "Scenario 5: misspecified, unnecessary covariates"),
}


RANDOMIZATION_VARIANTS = ("stratified", "stratified_simple", "simple")


def preset_scenario(number: int) -> Scenario:
    try:
        return SCENARIOS[number]
    except KeyError:
        raise ValueError(f"no scenario preset {number}; choose from {sorted(SCENARIOS)}") from None


@dataclass(frozen=True)
class RandomizationScheme:
    """How treatment is assigned within a simulated trial.

    ``stratified``
        Fixed treated count in each ``X_cat`` stratum (see :func:`stratum_counts`).
    ``stratified_simple``
        Independent coin flips within each stratum with ``P(Z=1) = t/(t+c)``,
        so arm sizes vary from trial to trial.  Because the probability is
        the same in both strata this is distributionally plain Bernoulli
        assignment.
    ``simple``
        Independent coin flips with ``P(Z=1) = p_treat``; ``ratio`` is ignored.
    """

    variant: str = "stratified"
    ratio: tuple[int, int] = (1, 1)
    p_treat: float = 0.5

    def __post_init__(self):
        variant = self.variant.lower()
        if variant not in RANDOMIZATION_VARIANTS:
            raise ValueError(f"unknown randomization variant {self.variant!r}")
        object.__setattr__(self, "variant", variant)
        ratio = tuple(int(r) for r in self.ratio)
        if len(ratio) != 2 or min(ratio) <= 0:
            raise ValueError("ratio must be two positive integers (treated, control)")
        object.__setattr__(self, "ratio", ratio)
        if not 0.0 < self.p_treat < 1.0:
            raise ValueError("p_treat must lie in (0, 1)")

    @property
    def treat_probability(self) -> float:
        if self.variant == "simple":
            return self.p_treat
        t, c = self.ratio
        return t / (t + c)


@dataclass(frozen=True)
class SimConfig:
    scenario: Scenario
    scheme: RandomizationScheme = RandomizationScheme()
    n_total: int = 900
    replications: int = 10_000
    alpha: float = 0.05
    master_seed: int = 20240501
    methods: tuple[VarianceMethod, ...] = tuple(STANDARD_METHODS.values())
    fit: FitConfig = FitConfig()

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.n_total < 4:
            raise ValueError("n_total must be >= 4")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.methods:
            raise ValueError("no methods requested")

    def as_dict(self) -> dict:
        return {
            "scenario": {
                "label": self.scenario.label,
                "beta": list(self.scenario.beta),
                "true_rd": self.scenario.true_rd,
            },
            "scheme": asdict(self.scheme) | {"ratio": list(self.scheme.ratio)},
            "n_total": self.n_total,
            "replications": self.replications,
            "alpha": self.alpha,
            "master_seed": self.master_seed,
            "methods": [m.code for m in self.methods],
            "fit": asdict(self.fit),
        }


def config_from_dict(raw: dict) -> SimConfig:
    """Build a :class:`SimConfig` from the nested mapping of a config file.

    ``scenario`` may be a preset number (1-5) or a mapping with ``beta``
    (and optionally ``label``, ``true_rd``, ``preset``).
    """
    sc = raw.get("scenario")
    if sc is None:
        raise ValueError("config is missing 'scenario'")
    if isinstance(sc, (int, str)) and not isinstance(sc, bool):
        scenario = preset_scenario(int(sc))
    else:
        if "preset" in sc:
            base = preset_scenario(int(sc["preset"]))
            beta, label = base.beta, base.label
        else:
            beta, label = sc["beta"], ""
        scenario = Scenario(tuple(beta), sc.get("label", label), sc.get("true_rd"))
    sch = raw.get("scheme", {}) or {}
    scheme = RandomizationScheme(
        variant=sch.get("variant", "stratified"),
        ratio=tuple(sch.get("ratio", (1, 1))),
        p_treat=float(sch.get("p_treat", 0.5)),
    )
    methods = raw.get("methods")
    kwargs = {}
    if methods:
        kwargs["methods"] = tuple(VarianceMethod.parse(str(m)) for m in methods)
    if raw.get("fit"):
        kwargs["fit"] = _fit_config(raw["fit"])
    for key, conv in (("n_total", int), ("replications", int), ("alpha", float), ("master_seed", int)):
        if key in raw:
            kwargs[key] = conv(raw[key])
    unknown = set(raw) - {"scenario", "scheme", "methods", "n_total", "replications", "alpha", "master_seed", "fit"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return SimConfig(scenario=scenario, scheme=scheme, **kwargs)


def _fit_config(raw) -> FitConfig:
    """``fit`` is either a preset name (``default`` or ``glm``) or a mapping of
    :class:`FitConfig` fields, optionally with a ``preset`` to start from."""
    if isinstance(raw, str):
        raw = {"preset": raw}
    raw = dict(raw)
    preset = str(raw.pop("preset", "default")).lower()
    if preset == "glm":
        base = FitConfig.glm_compatible()
    elif preset == "default":
        base = FitConfig()
    else:
        raise ValueError(f"unknown fit preset {preset!r}")
    return dataclasses.replace(base, **raw)


def load_config(path: str | Path) -> SimConfig:
    """Read a YAML (or JSON) study configuration."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# data generation


def replication_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def gen_covariates(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    x_cont = rng.standard_normal(n)
    x_cat = (rng.random(n) < 0.5).astype(float)
    return x_cont, x_cat


def stratum_counts(sizes: Sequence[int], ratio: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    """Treated count per stratum.

    The overall treated total is ``n t/(t+c)`` rounded half up; it is
    apportioned across strata by largest remainder with ties broken at
    random.
    """
    t, c = ratio
    sizes = np.asarray(sizes, dtype=int)
    total = int(math.floor(sizes.sum() * t / (t + c) + 0.5))
    quota = sizes * t / (t + c)
    counts = np.floor(quota).astype(int)
    extra = total - counts.sum()
    if extra > 0:
        rem = quota - counts
        order = rng.permutation(len(sizes))
        order = order[np.argsort(-rem[order], kind="stable")]
        counts[order[:extra]] += 1
    return counts


def randomize(x_cat: np.ndarray, scheme: RandomizationScheme, rng: np.random.Generator) -> np.ndarray:
    n = len(x_cat)
    if scheme.variant != "stratified":
        return (rng.random(n) < scheme.treat_probability).astype(float)
    z = np.zeros(n)
    levels = np.unique(x_cat)
    members = [np.flatnonzero(x_cat == lv) for lv in levels]
    counts = stratum_counts([len(m) for m in members], scheme.ratio, rng)
    for idx, k in zip(members, counts):
        z[rng.permutation(idx)[:k]] = 1.0
    return z


def gen_outcome(z, x_cont, x_cat, scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    p = expit(scenario.linear_predictor(z, x_cont, x_cat))
    return (rng.random(len(z)) < p).astype(float)


def generate_dataset(config: SimConfig, index: int) -> TrialDataset:
    rng = replication_rng(config.master_seed, index)
    x_cont, x_cat = gen_covariates(config.n_total, rng)
    z = randomize(x_cat, config.scheme, rng)
    y = gen_outcome(z, x_cont, x_cat, config.scenario, rng)
    return TrialDataset(y, z, np.column_stack([x_cont, x_cat]), COVARIATES)


def _normal_mean(fn) -> float:
    """``E fn(X)`` for standard normal ``X`` by adaptive quadrature."""
    dens = lambda x: fn(x) * math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    value, _ = integrate.quad(dens, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)
    return value


def true_effect(scenario: Scenario, nodes: int | None = None) -> tuple[float, float, float]:
    """``(pi0, pi1, rd)`` in the population, averaging exactly over ``X_cat``.

    By default the ``X_cont`` integral uses adaptive quadrature (absolute
    error well below 1e-9).  Passing ``nodes`` switches to a fixed
    Gauss-Hermite rule instead.  The logistic integrand converges slowly
    under such rules: with 64 nodes the error is a few 1e-6 for steep
    linear predictors and near 1e-4 once ``X_cont^2`` terms enter.
    """
    if nodes is not None:
        x, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / math.sqrt(2.0 * math.pi)
        mean = lambda fn: float(w @ fn(x))
    else:
        mean = _normal_mean
    pis = []
    for zval in (0.0, 1.0):
        total = 0.0
        for xk in (0.0, 1.0):
            total += 0.5 * mean(lambda xc: expit(scenario.linear_predictor(zval, xc, xk)))
        pis.append(total)
    return pis[0], pis[1], pis[1] - pis[0]


def true_rd(scenario: Scenario) -> float:
    if scenario.true_rd is not None:
        return float(scenario.true_rd)
    return true_effect(scenario)[2]


# ---------------------------------------------------------------------------
# replications and aggregation


@dataclass(frozen=True)
class ReplicationRecord:
    """Outcome of one simulated trial.

    ``results`` maps method code to ``(rd, se, ci_low, ci_high, p_value)``
    or ``None`` when that method produced no estimate.
    """

    index: int
    results: dict
    fallback_steps: int
    failed: bool
    error: str | None = None


def run_replication(config: SimConfig, index: int) -> ReplicationRecord:
    try:
        data = generate_dataset(config, index)
    except DataError as exc:
        return ReplicationRecord(index, {m.code: None for m in config.methods}, 0, True, str(exc))
    summaries = analyze_all(data, config.methods, config.alpha, config.fit)
    results = {}
    steps = 0
    for s in summaries:
        results[s.method.code] = (s.rd, s.se, s.ci_low, s.ci_high, s.p_value) if s.ok else None
        if s.method.adjusted:
            steps = max(steps, s.fallback_steps)
    # every adjusted fit ends at the treatment-only model, so a total wipe-out
    # means that model failed too
    failed = all(v is None for v in results.values())
    err = next((s.error for s in summaries if s.error), None)
    return ReplicationRecord(index, results, steps, failed, err)


def _run_chunk(args) -> list[ReplicationRecord]:
    config, indices = args
    return [run_replication(config, i) for i in indices]


@dataclass
class MethodMetrics:
    method: str
    label: str
    mean_se: float
    coverage: float
    rejection_rate: float
    mean_rd: float
    empirical_sd_rd: float
    n_estimates: int
    nonconvergence_rate: float
    fallback_rate: float


@dataclass
class SimMetrics:
    config: SimConfig
    true_rd: float
    replications: int
    failed_replications: int
    fallback_replications: int
    methods: dict[str, MethodMetrics] = field(default_factory=dict)

    @property
    def nonconvergence_rate(self) -> float:
        return self.failed_replications / self.replications

    @property
    def fallback_rate(self) -> float:
        return self.fallback_replications / self.replications

    def __getitem__(self, code: str) -> MethodMetrics:
        return self.methods[code]

    def as_dict(self) -> dict:
        return {
            "config": self.config.as_dict(),
            "master_seed": self.config.master_seed,
            "true_rd": self.true_rd,
            "replications": self.replications,
            "failed_replications": self.failed_replications,
            "nonconvergence_rate": self.nonconvergence_rate,
            "fallback_rate": self.fallback_rate,
            "methods": {k: asdict(v) for k, v in self.methods.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _nan_if_empty(values: list[float], fn) -> float:
    return fn(values) if values else float("nan")


def aggregate(config: SimConfig, records: Sequence[ReplicationRecord], truth: float) -> SimMetrics:
    """Per-method averages over the replications that produced an estimate.

    Sums are exact-rounded (``math.fsum``) over records sorted by index, so
    the result does not depend on the order records arrived in.
    """
    records = sorted(records, key=lambda r: r.index)
    R = len(records)
    failed = sum(r.failed for r in records)
    fell_back = sum(r.fallback_steps > 0 for r in records)
    metrics = SimMetrics(config, truth, R, failed, fell_back)
    for m in config.methods:
        code = m.code
        rows = [r.results[code] for r in records if not r.failed and r.results.get(code) is not None]
        k = len(rows)
        rds = [row[0] for row in rows]
        mean_rd = _nan_if_empty(rds, lambda v: math.fsum(v) / len(v))
        sd = (
            math.sqrt(math.fsum((x - mean_rd) ** 2 for x in rds) / (k - 1)) if k > 1 else float("nan")
        )
        metrics.methods[code] = MethodMetrics(
            method=code,
            label=m.label,
            mean_se=_nan_if_empty([row[1] for row in rows], lambda v: math.fsum(v) / len(v)),
            coverage=_nan_if_empty([row[2] <= truth <= row[3] for row in rows], lambda v: sum(v) / len(v)),
            rejection_rate=_nan_if_empty([row[4] < config.alpha for row in rows], lambda v: sum(v) / len(v)),
            mean_rd=mean_rd,
            empirical_sd_rd=sd,
            n_estimates=k,
            nonconvergence_rate=(R - k) / R,
            fallback_rate=(
                sum(r.fallback_steps > 0 for r in records if not r.failed) / R if m.adjusted else 0.0
            ),
        )
    return metrics


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("COVADJ_THREADS", "1"))
    return max(1, int(threads))


def run_study(config: SimConfig, threads: int | None = None, chunk_size: int = 250) -> SimMetrics:
    """Run every replication and aggregate.

    ``threads > 1`` spreads chunks of replications over worker processes;
    the result is identical for any worker count.
    """
    threads = resolve_threads(threads)
    truth = true_rd(config.scenario)
    indices = range(config.replications)
    if threads == 1:
        records = [run_replication(config, i) for i in indices]
    else:
        chunks = [(config, indices[i:i + chunk_size]) for i in range(0, config.replications, chunk_size)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = [rec for chunk in pool.map(_run_chunk, chunks) for rec in chunk]
    return aggregate(config, records, truth)
