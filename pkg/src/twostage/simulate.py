"""Generative model and Monte Carlo power / error-rate studies.

Biomarker panels are drawn in equally sized clusters. Within a cluster
every pair of columns shares the correlation ``rho``; across clusters
columns are independent. Each column is marginally standard normal via
the single-factor construction

    X_j = sqrt(rho) * Z_c + sqrt(1 - rho) * E_j

with one factor Z_c per cluster, which reproduces block equicorrelation
exactly without any matrix factorization. Treatment is Bernoulli and the
outcome is linear in the configured main and interaction effects plus
Gaussian noise.

Power is counted at cluster granularity: a replicate discovers a cluster
when it rejects at least one biomarker in a cluster that truly contains
an interacting biomarker. The family-wise error rate is the symmetric
count, a rejection inside a cluster with no interacting biomarker
(optionally, any rejection of a non-interacting biomarker).

``run_study`` replays a grid of scenarios for each requested procedure on
shared per-replicate datasets: replicate r draws its data from seed
``base_seed + r``, and the ridge fold assignment uses a stream derived
from the same value, so procedures are compared on identical data.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .data import TrialDataset
from .errors import NoInteractionClusterError, TwoStageError, UsageError
from .procedures import (
    METHOD_LABELS,
    StageTwoReport,
    WeightScheme,
    ridge_rank_procedure,
    single_step,
    stage2_bonferroni,
    univariate_rank_procedure,
    univariate_threshold_screen,
)
from .ridge import RidgeConfig


@dataclass(frozen=True)
class ScenarioConfig:
    """Full parameterization of one simulated trial scenario.

    ``effects`` lists ``(biomarker index, main effect, interaction
    effect)`` triples; all other biomarkers have no direct effect on the
    outcome. Setting ``dependent_treatment_index`` makes the treatment
    probability depend on that biomarker through a probit link, which
    breaks randomization on purpose (a negative control for the
    between-stage independence diagnostic).
    """

    n: int
    m: int
    cluster_size: int
    rho: float
    effects: tuple[tuple[int, float, float], ...] = ()
    treatment_effect: float = 0.5
    intercept: float = 0.0
    noise_sd: float = 5.0
    treatment_prob: float = 0.5
    seed: int = 0
    label: str = ""
    dependent_treatment_index: int | None = None
    dependent_treatment_scale: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.cluster_size < 1:
            raise UsageError("n, m, and cluster_size must be positive")
        if self.m % self.cluster_size != 0:
            raise UsageError("m must be divisible by cluster_size")
        if not 0 <= self.rho < 1:
            raise UsageError("rho must lie in [0, 1)")
        if self.noise_sd <= 0:
            raise UsageError("noise_sd must be positive")
        if not 0 < self.treatment_prob < 1:
            raise UsageError("treatment_prob must lie in (0, 1)")
        indices = [e[0] for e in self.effects]
        if len(set(indices)) != len(indices):
            raise UsageError("effect indices must be distinct")
        if any(not 0 <= i < self.m for i in indices):
            raise UsageError("effect indices must lie in [0, m)")
        if self.dependent_treatment_index is not None and not (
            0 <= self.dependent_treatment_index < self.m
        ):
            raise UsageError("dependent_treatment_index out of range")
        object.__setattr__(self, "effects", tuple(
            (int(i), float(a), float(b)) for i, a, b in self.effects
        ))

    @property
    def n_clusters(self) -> int:
        return self.m // self.cluster_size

    def cluster_of(self, index: int) -> int:
        return index // self.cluster_size

    def interacting_indices(self) -> frozenset[int]:
        return frozenset(i for i, _, inter in self.effects if inter != 0.0)

    def interacting_clusters(self) -> frozenset[int]:
        return frozenset(self.cluster_of(i) for i in self.interacting_indices())


def generate(config: ScenarioConfig) -> TrialDataset:
    """Draw one trial dataset from the scenario.

    Deterministic given ``config.seed``; the draw order is cluster
    factors, per-column noise, treatment, outcome noise.
    """
    rng = np.random.default_rng(config.seed)
    n, m = config.n, config.m
    cluster_ids = np.arange(m) // config.cluster_size

    factors = rng.standard_normal((n, config.n_clusters))
    noise = rng.standard_normal((n, m))
    x = np.sqrt(config.rho) * factors[:, cluster_ids] + np.sqrt(1.0 - config.rho) * noise

    if config.dependent_treatment_index is None:
        prob = config.treatment_prob
    else:
        prob = ndtr(config.dependent_treatment_scale
                    * x[:, config.dependent_treatment_index])
    t = (rng.random(n) < prob).astype(float)

    y = np.full(n, config.intercept) + config.treatment_effect * t
    for idx, main, inter in config.effects:
        y += main * x[:, idx] + inter * x[:, idx] * t
    y += config.noise_sd * rng.standard_normal(n)

    return TrialDataset(outcome=y, treatment=t, biomarkers=x, family="linear")


def _rejected_clusters(report: StageTwoReport, config: ScenarioConfig) -> set[int]:
    return {config.cluster_of(int(j)) for j in report.rejected_indices()}


def _discovery_hit(report: StageTwoReport, config: ScenarioConfig) -> float:
    """Fraction of interacting clusters discovered by one replicate."""
    targets = config.interacting_clusters()
    hit = _rejected_clusters(report, config)
    return sum(c in hit for c in targets) / len(targets)


def _false_positive(report: StageTwoReport, config: ScenarioConfig,
                    granularity: str) -> bool:
    if granularity == "biomarker":
        truth = config.interacting_indices()
        return any(int(j) not in truth for j in report.rejected_indices())
    null_clusters = set(range(config.n_clusters)) - config.interacting_clusters()
    return bool(_rejected_clusters(report, config) & null_clusters)


def cluster_discovery_power(
    reports: list[StageTwoReport], config: ScenarioConfig
) -> float:
    """Share of replicates that reject inside an interacting cluster.

    With several interacting clusters this averages the per-cluster
    discovery indicators before averaging over replicates.
    """
    if not config.interacting_clusters():
        raise NoInteractionClusterError(
            "scenario has no interacting biomarker, power is undefined"
        )
    if not reports:
        raise UsageError("no reports supplied")
    return float(np.mean([_discovery_hit(r, config) for r in reports]))


def fwer_estimate(
    reports: list[StageTwoReport],
    config: ScenarioConfig,
    granularity: str = "cluster",
) -> float:
    """Share of replicates with at least one false rejection.

    ``granularity="cluster"`` counts a rejection inside a fully null
    cluster; ``"biomarker"`` counts any rejection of a non-interacting
    biomarker, even one sharing a cluster with a true interaction.
    """
    if granularity not in ("cluster", "biomarker"):
        raise UsageError(f"unknown granularity {granularity!r}")
    if not reports:
        raise UsageError("no reports supplied")
    return float(np.mean(
        [_false_positive(r, config, granularity) for r in reports]
    ))


@dataclass(frozen=True)
class PowerRow:
    """One (scenario, method) cell of a study."""

    scenario: str
    method: str
    power: float
    power_se: float
    fwer: float
    fwer_se: float
    replicates: int
    failures: int


@dataclass(frozen=True)
class PowerTable:
    rows: tuple[PowerRow, ...] = field(default_factory=tuple)


def _binomial_se(p_hat: float, reps: int) -> float:
    if reps <= 0 or not np.isfinite(p_hat):
        return float("nan")
    return float(np.sqrt(p_hat * (1.0 - p_hat) / reps))


def derive_cv_seed(data_seed: int) -> int:
    """Fold-assignment seed decoupled from the data-generation stream."""
    return int(np.random.SeedSequence(entropy=data_seed,
                                      spawn_key=(1,)).generate_state(1)[0])


def _run_method(
    method: str,
    data: TrialDataset,
    overall_alpha: float,
    alpha1: float,
    scheme: WeightScheme,
    ridge_config: RidgeConfig,
) -> StageTwoReport:
    if method == "single_step":
        return single_step(data, overall_alpha)
    if method == "univariate_threshold":
        screening = univariate_threshold_screen(data, alpha1)
        return stage2_bonferroni(data, screening, overall_alpha)
    if method == "univariate_rank":
        return univariate_rank_procedure(data, scheme)
    if method == "ridge_rank":
        return ridge_rank_procedure(data, ridge_config, scheme)
    raise UsageError(f"unknown method {method!r}")


def run_study(
    grid: list[ScenarioConfig],
    methods: list[str],
    replicates: int,
    base_seed: int = 0,
    overall_alpha: float = 0.05,
    alpha1: float = 0.05,
    scheme: WeightScheme | None = None,
    ridge_config: RidgeConfig | None = None,
    granularity: str = "cluster",
) -> PowerTable:
    """Estimate power and FWER for each (scenario, method) pair.

    Replicate r of every scenario draws its dataset from seed
    ``base_seed + r``, shared across methods. A replicate on which a
    procedure fails is excluded from that procedure's estimates and
    counted in ``failures``; scenarios without any interacting biomarker
    report NaN power. Output is deterministic given the inputs.
    """
    if not grid or not methods:
        raise UsageError("grid and methods must be nonempty")
    for method in methods:
        if method not in METHOD_LABELS:
            raise UsageError(f"unknown method {method!r}")
    if replicates < 1:
        raise UsageError("replicates must be positive")
    scheme = scheme or WeightScheme(overall_alpha=overall_alpha)
    ridge_config = ridge_config or STUDY_RIDGE

    rows = []
    for config in grid:
        label = config.label or f"n={config.n}"
        has_power = bool(config.interacting_clusters())
        hits = {m: 0.0 for m in methods}
        errors = {m: 0 for m in methods}
        done = {m: 0 for m in methods}
        failures = {m: 0 for m in methods}
        for r in range(replicates):
            data = generate(replace(config, seed=base_seed + r))
            rc = replace(ridge_config, cv_seed=derive_cv_seed(base_seed + r))
            for method in methods:
                try:
                    report = _run_method(
                        method, data, overall_alpha, alpha1, scheme, rc
                    )
                except (TwoStageError, np.linalg.LinAlgError):
                    failures[method] += 1
                    continue
                done[method] += 1
                if has_power:
                    hits[method] += _discovery_hit(report, config)
                errors[method] += _false_positive(report, config, granularity)
        for method in methods:
            reps = done[method]
            power = hits[method] / reps if has_power and reps else float("nan")
            fwer = errors[method] / reps if reps else float("nan")
            rows.append(PowerRow(
                scenario=label,
                method=method,
                power=power,
                power_se=_binomial_se(power, reps),
                fwer=fwer,
                fwer_se=_binomial_se(fwer, reps),
                replicates=reps,
                failures=failures[method],
            ))
    return PowerTable(rows=tuple(rows))


# Ridge settings for studies: ranking a panel needs far less path
# resolution than a certified coefficient fit, and the CV optimum lands in
# the upper half of the path in these scenarios, so a short coarse path at
# a loose tolerance gives the same rankings at a fraction of the cost.
STUDY_RIDGE = RidgeConfig(n_lambdas=25, lambda_min_ratio=0.02, tol=1e-4)


def _effects(scale: str, interaction: float = 1.0, main: float = 0.5):
    """Effect pattern: one interacting biomarker plus main-effect-only
    clusters.

    The full-scale panel ascribes main effects to four other clusters out
    of fifty; the desk-scale panel keeps the same effect sizes but scales
    the count of main-effect clusters with the panel (one out of ten), so
    the fraction of the panel that pollutes a marginal ranking stays
    comparable.
    """
    others = 4 if scale == "full" else 1
    out = [(0, main, interaction)]
    out += [(20 * (k + 1), 1.5, 0.0) for k in range(others)]
    return tuple(out)


_SCALES = {
    # m, cluster_size: ten clusters at desk scale, fifty at full scale.
    "desk": (200, 20),
    "full": (1000, 20),
}

PRESET_NAMES = ("fig1a", "fig1b", "fig1c", "fig1d", "global_null", "demo")


def preset(name: str, scale: str = "desk") -> tuple[ScenarioConfig, ...]:
    """Named scenario grids for the shipped power and error-rate sweeps.

    ``fig1a``/``fig1b`` sweep the sample size at rho 0.6 / 0.0;
    ``fig1c`` sweeps the interacting biomarker's main effect through the
    cancellation point at n=1500; ``fig1d`` sweeps the noise SD at rho
    0.6; ``global_null`` keeps the main effects but removes every
    interaction; ``demo`` is a minutes-not-hours smoke configuration.
    Sweep gridpoints are implementation choices, documented here rather
    than prescribed.
    """
    if scale not in _SCALES:
        raise UsageError(f"unknown scale {scale!r}")
    m, cluster = _SCALES[scale]

    def cfg(label, **kw):
        base = dict(n=1500, m=m, cluster_size=cluster, rho=0.0,
                    effects=_effects(scale), label=label)
        base.update(kw)
        return ScenarioConfig(**base)

    if name == "fig1a":
        return tuple(cfg(f"n={n}", n=n, rho=0.6) for n in (500, 1000, 1500, 2000))
    if name == "fig1b":
        return tuple(cfg(f"n={n}", n=n, rho=0.0) for n in (500, 1000, 1500, 2000))
    if name == "fig1c":
        return tuple(
            cfg(f"main={b:g}", effects=_effects(scale, main=b))
            for b in (-1.5, -1.0, -0.5, 0.0, 0.5)
        )
    if name == "fig1d":
        return tuple(
            cfg(f"noise_sd={s:g}", rho=0.6, noise_sd=s)
            for s in (1.0, 2.5, 5.0, 10.0, 20.0)
        )
    if name == "global_null":
        # A true global null: no effects at all. Keeping the main effects
        # would make the threshold screen select whole correlated clusters
        # and deflate its family-wise error well below the nominal level.
        return tuple(
            cfg(f"rho={rho:g}", n=500, rho=rho, effects=())
            for rho in (0.0, 0.6)
        )
    if name == "demo":
        small = dict(n=150, m=20, cluster_size=4,
                     effects=((0, 0.5, 1.0), (4, 1.5, 0.0)), noise_sd=2.0)
        return tuple(
            ScenarioConfig(label=f"rho={rho:g}", rho=rho, **small)
            for rho in (0.0, 0.6)
        )
    raise UsageError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
