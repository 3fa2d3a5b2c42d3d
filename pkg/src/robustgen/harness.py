"""Monte-Carlo validation of the bounds: repeated train/certify/evaluate
trials, violation-rate measurement, and certificate soundness checks.

Trials are independent, keyed by (seed, trial), and failures in one trial are
recorded without aborting the rest.  A bound "violation" means the observed
gap exceeds the bound by more than three standard errors of the Monte-Carlo
risk estimate, so estimator noise is never charged against a theorem.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from . import rng as _rng
from .bounds import adaptive_gap_bound, markov_gap_bound, pseudo_gap_bound, quantile_sandwich
from .certificates import (
    certify_lasso,
    certify_lipschitz,
    certify_majority_vote,
    certify_margin,
    certify_network,
    certify_pca,
    certify_svm,
    empirical_epsilon,
    kernel_spread,
)
from .errors import ConfigError, RobustgenError
from .learners import (
    ABSOLUTE,
    HINGE,
    PCA_QUADRATIC,
    ZERO_ONE,
    KernelSpec,
    LossSpec,
    label_second_moment,
    loss_many,
    train_lasso,
    train_majority_vote,
    train_network,
    train_norm_constrained_regression,
    train_pca,
    train_svm,
)
from .metric_cover import (
    EUCLIDEAN,
    SUP,
    DEFAULT_MAX_CELLS,
    BinaryLabels,
    Box,
    Interval,
    SampleSpace,
    grid_cover,
    pair_distance,
    product_partition,
)
from .sampling import (
    DistributionSpec,
    DoeblinChain,
    LabelModel,
    Marginal,
    doeblin_params,
    mc_losses,
    sample_chain,
    sample_iid,
    stationary_distribution,
    true_risk,
)
from .stats import beta_quantile, beta_truncated_mean, bhc_lambda

LEARNER_KINDS = ("majority-vote", "norm-regression", "lasso", "svm", "network", "pca")


@dataclass(frozen=True, eq=False)
class LearnerSpec:
    """Which learner family to run and its hyperparameters."""

    kind: str
    c: float = 1.0
    kernel: str = "linear"
    kernel_width: float = 0.5
    margin_certificate: bool = False
    gamma_x: float = 0.5
    hidden: tuple = ()
    alpha: float = 1.0
    beta: float = 1.0
    activation: str = "clipped-identity"
    components: int = 1

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ConfigError(f"unknown learner kind {self.kind!r}")
        if self.margin_certificate and self.kind not in ("svm", "majority-vote"):
            raise ConfigError("margin certificates need a binary classifier")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Everything one experiment needs; immutable so trials can share it."""

    learner: LearnerSpec
    source: object                   # DistributionSpec | DoeblinChain
    n: int
    delta: float
    M: float
    gamma_grid: tuple
    trials: int
    probes_per_cell: int = 50
    n_mc: int = 50_000
    seed: int = 0
    beta: float = None               # quantile experiments
    initial_state: int = 0
    t_max: int = 64
    max_cells: int = DEFAULT_MAX_CELLS

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must be in (0, 1)")
        if not self.gamma_grid:
            raise ConfigError("gamma_grid must be non-empty")


@dataclass
class TrialOutcome:
    """One trial's empirical risk, estimated true risk, bound, and verdict."""

    trial: int
    l_emp: float = None
    l_hat: float = None
    l_hat_se: float = None
    K: int = None
    epsilon: float = None
    n_hat: int = None
    gamma: float = None
    bound: float = None
    bound_raw: float = None
    gap: float = None
    violated: bool = None
    error: str = None
    details: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        return {
            "trial": self.trial, "l_emp": self.l_emp, "l_hat": self.l_hat,
            "l_hat_se": self.l_hat_se, "K": self.K, "epsilon": self.epsilon,
            "n_hat": self.n_hat, "gamma": self.gamma, "bound": self.bound,
            "bound_raw": self.bound_raw, "gap": self.gap,
            "violated": self.violated, "error": self.error,
            "details": dict(self.details),
        }


@dataclass
class ExperimentResult:
    kind: str
    outcomes: list
    violations: int
    completed: int
    violation_rate: float
    passed: bool
    delta: float
    details: dict = field(default_factory=dict)

    def as_records(self):
        return [o.as_record() for o in self.outcomes]


def allowed_failures(trials: int, delta: float) -> int:
    """One-sided 99% binomial allowance for a true failure rate of delta."""
    if trials < 1:
        return 0
    return int(binom.ppf(0.99, trials, delta))


def loss_spec_for(learner: LearnerSpec, M: float) -> LossSpec:
    if learner.kind == "majority-vote":
        return LossSpec(ZERO_ONE, M)
    if learner.kind == "svm":
        return LossSpec(ZERO_ONE if learner.margin_certificate else HINGE, M)
    if learner.kind == "pca":
        return LossSpec(PCA_QUADRATIC, M)
    return LossSpec(ABSOLUTE, M)


def train_for(learner: LearnerSpec, samples, space: SampleSpace, seed: int = 0):
    if learner.kind == "majority-vote":
        part = grid_cover(space.inputs, learner.gamma_x, space.metric)
        return train_majority_vote(samples, part)
    if learner.kind == "norm-regression":
        return train_norm_constrained_regression(samples, learner.c)
    if learner.kind == "lasso":
        return train_lasso(samples, learner.c)
    if learner.kind == "svm":
        kernel = KernelSpec(learner.kernel, learner.kernel_width)
        return train_svm(samples, learner.c, kernel)
    if learner.kind == "network":
        return train_network(samples, learner.hidden, learner.alpha, learner.beta,
                             learner.activation, seed=seed)
    return train_pca(samples, learner.components)


def certificates_for(learner: LearnerSpec, hypothesis, samples,
                     space: SampleSpace, gammas, max_cells: int = DEFAULT_MAX_CELLS):
    """Fully robust closed-form certificates over a gamma grid."""
    if learner.kind == "majority-vote":
        return [certify_majority_vote(hypothesis)]
    if learner.kind == "norm-regression":
        return [certify_lipschitz(learner.c + 1.0, g, space, sample_independent=True,
                                  max_cells=max_cells) for g in gammas]
    if learner.kind == "lasso":
        return [certify_lasso(samples, learner.c, g, space, max_cells=max_cells)
                for g in gammas]
    if learner.kind == "svm":
        return [certify_svm(hypothesis, g, space, max_cells=max_cells) for g in gammas]
    if learner.kind == "network":
        depth = len(learner.hidden) + 1
        return [certify_network(learner.alpha, learner.beta, depth, g, space,
                                max_cells=max_cells) for g in gammas]
    B = space.inputs.max_norm()
    return [certify_pca(B, learner.components, g, space, max_cells=max_cells)
            for g in gammas]


def certificate_cell_count(learner: LearnerSpec, space: SampleSpace, gamma: float,
                           max_cells: int = DEFAULT_MAX_CELLS) -> int:
    """K of the certificate partition, computable before any data exists."""
    if learner.kind == "majority-vote":
        return 2 * grid_cover(space.inputs, learner.gamma_x, space.metric,
                              max_cells).K
    if learner.kind == "norm-regression":
        base = grid_cover(space.inputs, gamma, space.metric, max_cells)
        return product_partition(base, space.outputs, gamma_y=gamma).K
    if learner.kind in ("lasso", "network"):
        return grid_cover(space.joint_box(), gamma, SUP, max_cells).K
    if learner.kind == "svm":
        return 2 * grid_cover(space.inputs, gamma, EUCLIDEAN, max_cells).K
    return grid_cover(space.inputs, gamma, EUCLIDEAN, max_cells).K


def _map_trials(one_trial, trials: int, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one_trial, range(trials)))
    else:
        outcomes = [one_trial(r) for r in range(trials)]
    return sorted(outcomes, key=lambda o: o.trial)


def _finalize(kind: str, outcomes, delta: float, details=None) -> ExperimentResult:
    completed = sum(1 for o in outcomes if o.error is None)
    violations = sum(1 for o in outcomes if o.violated)
    rate = violations / completed if completed else 0.0
    passed = completed > 0 and violations <= allowed_failures(completed, delta)
    return ExperimentResult(
        kind=kind, outcomes=outcomes, violations=violations, completed=completed,
        violation_rate=rate, passed=passed, delta=delta, details=details or {},
    )


def run_iid_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Validate the IID gap bound: R trials of sample, train, certify, bound,
    and Monte-Carlo risk; a trial violates if |l_hat - l_emp| exceeds the
    bound beyond the risk estimate's noise allowance."""
    if not isinstance(config.source, DistributionSpec):
        raise ConfigError("the IID experiment needs a DistributionSpec source")
    spec = loss_spec_for(config.learner, config.M)
    space = config.source.space

    def one_trial(r: int) -> TrialOutcome:
        out = TrialOutcome(trial=r)
        try:
            s = sample_iid(config.source, config.n, config.seed, trial=r)
            hyp = train_for(config.learner, s, space, seed=config.seed)
            if config.learner.margin_certificate:
                cert = certify_margin(hyp, s, config.gamma_grid[0], space,
                                      seed=config.seed, max_cells=config.max_cells)
                report = pseudo_gap_bound(cert, config.n, config.delta, config.M)
                out.n_hat = cert.n_hat
                out.gamma = cert.gamma
            else:
                certs = certificates_for(config.learner, hyp, s, space,
                                         config.gamma_grid, config.max_cells)
                report = adaptive_gap_bound(certs, config.n, config.delta, config.M)
                out.gamma = report.inputs.get("gamma")
            out.K = report.inputs["K"]
            out.epsilon = report.inputs["epsilon"]
            out.l_emp = float(loss_many(hyp, s, spec).mean())
            risk = true_risk(hyp, config.source, spec, config.n_mc,
                             config.seed, trial=r)
            out.l_hat, out.l_hat_se = risk.value, risk.stderr
            out.bound_raw = report.value
            out.bound = report.clipped
            out.gap = abs(risk.value - out.l_emp)
            out.violated = out.gap > out.bound + 3.0 * risk.stderr
        except RobustgenError as exc:
            out.error = f"{type(exc).__name__}: {exc}"
        return out

    outcomes = _map_trials(one_trial, config.trials, threads)
    return _finalize("iid", outcomes, config.delta)


def run_markov_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Validate the Doeblin-chain gap bound on trajectory-trained models."""
    if not isinstance(config.source, DoeblinChain):
        raise ConfigError("the Markov experiment needs a DoeblinChain source")
    if config.learner.margin_certificate:
        raise ConfigError(
            "the Markov bound needs a fully robust certificate, not a margin one"
        )
    try:
        alpha, T = doeblin_params(config.source.transition, config.t_max)
    except RobustgenError as exc:
        raise ConfigError(f"chain is not usable: {exc}") from exc
    if config.n <= 2.0 * T / alpha + 1e-9:
        raise ConfigError(
            f"need n > 2T/alpha = {2.0 * T / alpha:g}, got n = {config.n}"
        )
    pi = stationary_distribution(config.source.transition)
    spec = loss_spec_for(config.learner, config.M)
    space = config.source.space

    def one_trial(r: int) -> TrialOutcome:
        out = TrialOutcome(trial=r)
        try:
            s = sample_chain(config.source, config.n, config.initial_state,
                             config.seed, trial=r)
            hyp = train_for(config.learner, s, space, seed=config.seed)
            certs = certificates_for(config.learner, hyp, s, space,
                                     config.gamma_grid[:1], config.max_cells)
            report = markov_gap_bound(certs[0], config.n, config.delta, config.M,
                                      alpha, T)
            out.K = report.inputs["K"]
            out.epsilon = report.inputs["epsilon"]
            out.gamma = certs[0].gamma
            out.l_emp = float(loss_many(hyp, s, spec).mean())
            risk = true_risk(hyp, config.source, spec, config.n_mc,
                             config.seed, trial=r)
            out.l_hat, out.l_hat_se = risk.value, risk.stderr
            out.bound_raw = report.value
            out.bound = report.clipped
            out.gap = abs(risk.value - out.l_emp)
            out.violated = out.gap > out.bound + 3.0 * risk.stderr
            out.details = {
                "fourth_root_form": report.details["fourth_root_form"],
                "stronger_form": report.details["stronger_form"],
            }
        except RobustgenError as exc:
            out.error = f"{type(exc).__name__}: {exc}"
        return out

    outcomes = _map_trials(one_trial, config.trials, threads)
    details = {"alpha": alpha, "T": T, "pi": [float(p) for p in pi]}
    return _finalize("markov", outcomes, config.delta, details)


def run_quantile_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Check sandwich coverage: the population quantile and truncated mean of
    the testing loss must fall inside the computed interval in at least a
    1 - delta fraction of trials."""
    if not isinstance(config.source, DistributionSpec):
        raise ConfigError("the quantile experiment needs a DistributionSpec source")
    if config.beta is None:
        raise ConfigError("the quantile experiment needs a beta")
    gamma = config.gamma_grid[0]
    space = config.source.space
    K = certificate_cell_count(config.learner, space, gamma, config.max_cells)
    lam = bhc_lambda(K, config.n, config.delta)
    if config.beta - lam < -1e-12 or config.beta + lam > 1.0 + 1e-12:
        raise ConfigError(
            f"beta window [{config.beta - lam:.6g}, {config.beta + lam:.6g}]"
            f" leaves [0, 1]; feasible beta range is [{lam:.6g}, {1 - lam:.6g}]"
        )
    spec = loss_spec_for(config.learner, config.M)

    def one_trial(r: int) -> TrialOutcome:
        out = TrialOutcome(trial=r)
        try:
            s = sample_iid(config.source, config.n, config.seed, trial=r)
            hyp = train_for(config.learner, s, space, seed=config.seed)
            if config.learner.margin_certificate:
                cert = certify_margin(hyp, s, gamma, space, seed=config.seed,
                                      max_cells=config.max_cells)
            else:
                cert = certificates_for(config.learner, hyp, s, space,
                                        [gamma], config.max_cells)[0]
            losses = loss_many(hyp, s, spec)
            report = quantile_sandwich(cert, losses, config.beta, config.delta,
                                       config.n)
            pop = mc_losses(hyp, config.source, spec, config.n_mc,
                            config.seed, trial=r)
            pop_q = beta_quantile(pop, config.beta)
            pop_t = beta_truncated_mean(pop, config.beta)
            d = report.details
            covered_q = d["q_lower"] <= pop_q <= d["q_upper"]
            covered_t = d["t_lower"] <= pop_t <= d["t_upper"]
            out.K = cert.K
            out.epsilon = cert.epsilon
            out.gamma = cert.gamma
            out.n_hat = cert.n_hat
            out.violated = not (covered_q and covered_t)
            out.details = {
                "q_lower": d["q_lower"], "q_upper": d["q_upper"],
                "t_lower": d["t_lower"], "t_upper": d["t_upper"],
                "pop_quantile": pop_q, "pop_truncated_mean": pop_t,
                "covered_quantile": covered_q, "covered_truncated_mean": covered_t,
            }
        except RobustgenError as exc:
            out.error = f"{type(exc).__name__}: {exc}"
        return out

    outcomes = _map_trials(one_trial, config.trials, threads)
    result = _finalize("quantile", outcomes, config.delta)
    result.details["coverage"] = (
        1.0 - result.violation_rate if result.completed else 0.0
    )
    result.details["lambda0"] = lam
    return result


# ---------------------------------------------------------------------------
# certificate verification


@dataclass(frozen=True, eq=False)
class FamilySetup:
    learner: LearnerSpec
    dist: DistributionSpec
    gammas: tuple
    M: float


def default_family_setups() -> dict:
    """Synthetic tasks exercising every certified learner family."""
    square = Box((0.0, 0.0), (1.0, 1.0))
    cube = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    uni2 = (Marginal(), Marginal())
    uni3 = (Marginal(), Marginal(), Marginal())

    binary2 = SampleSpace(square, EUCLIDEAN, BinaryLabels())
    binary_dist = DistributionSpec(
        binary2, uni2, LabelModel("threshold", (1.0, -1.0), 0.1, noise=0.05))

    reg2 = SampleSpace(square, EUCLIDEAN, Interval(0.0, 1.0))
    reg2_dist = DistributionSpec(
        reg2, uni2, LabelModel("linear", (0.4, 0.3), 0.1, noise=0.05))

    reg3 = SampleSpace(cube, SUP, Interval(0.0, 1.0))
    reg3_dist = DistributionSpec(
        reg3, uni3, LabelModel("linear", (0.5, 0.3, 0.0), 0.05, noise=0.05))

    net2 = SampleSpace(square, SUP, Interval(0.0, 1.0))
    net2_dist = DistributionSpec(
        net2, uni2, LabelModel("linear", (0.3, 0.4), 0.1, noise=0.05))

    pca2 = SampleSpace(Box((-1.0, -1.0), (1.0, 1.0)), EUCLIDEAN, None)
    pca_dist = DistributionSpec(
        pca2, (Marginal("truncated-gaussian", 0.3, 0.4),
               Marginal("truncated-gaussian", -0.1, 0.25)))

    return {
        "majority-vote": FamilySetup(
            LearnerSpec("majority-vote", gamma_x=0.5), binary_dist, (0.5,), 1.0),
        "norm-regression": FamilySetup(
            LearnerSpec("norm-regression", c=1.0), reg2_dist, (0.25, 0.5, 1.0), 1.0),
        "lasso": FamilySetup(
            LearnerSpec("lasso", c=0.5), reg3_dist, (0.25, 0.5, 1.0), 1.0),
        "svm-linear": FamilySetup(
            LearnerSpec("svm", c=0.5, kernel="linear"), binary_dist,
            (0.25, 0.5, 1.0), 2.0),
        "svm-gaussian": FamilySetup(
            LearnerSpec("svm", c=0.5, kernel="gaussian", kernel_width=0.5),
            binary_dist, (0.25, 0.5, 1.0), 2.0),
        "network": FamilySetup(
            LearnerSpec("network", hidden=(4,), alpha=1.2, beta=1.0,
                        activation="tanh"), net2_dist, (0.25, 0.5, 1.0), 1.0),
        "pca": FamilySetup(
            LearnerSpec("pca", components=1), pca_dist, (0.25, 0.5, 1.0), 2.0),
    }


def _uniform_space_points(space: SampleSpace, count: int,
                          gen: np.random.Generator) -> np.ndarray:
    X = space.inputs.uniform(count, gen)
    if space.outputs is None:
        return X
    if isinstance(space.outputs, BinaryLabels):
        y = np.where(gen.random(count) < 0.5, -1.0, 1.0)
    else:
        y = space.outputs.lo + gen.random(count) * (space.outputs.hi - space.outputs.lo)
    return np.hstack([X, y[:, None]])


def sample_same_cell_pairs(partition, space: SampleSpace, count: int,
                           gen: np.random.Generator):
    """Random pairs of points that share a partition cell."""
    z1 = _uniform_space_points(space, count, gen)
    idx = partition.cell_index_many(z1)
    z2 = np.empty_like(z1)
    keep = np.ones(count, dtype=bool)
    for cell in np.unique(idx):
        rows = np.flatnonzero(idx == cell)
        probes = partition.sample_in_cell(int(cell), len(rows), gen)
        z2[rows[: len(probes)]] = probes
        keep[rows[len(probes):]] = False
    return z1[keep], z2[keep]


def _pair_allowance(setup: FamilySetup, hypothesis, samples, gamma: float,
                    z1: np.ndarray, z2: np.ndarray, scale: float) -> np.ndarray:
    """Per-pair loss-deviation allowance from the family's structural constant."""
    learner = setup.learner
    if learner.kind == "majority-vote":
        return np.zeros(len(z1))
    if learner.kind == "norm-regression":
        dx = pair_distance(z1[:, :-1], z2[:, :-1], EUCLIDEAN)
        dy = np.abs(z1[:, -1] - z2[:, -1])
        return scale * (1.0 + learner.c) * np.maximum(dx, dy)
    if learner.kind == "lasso":
        Y_s = label_second_moment(samples)
        return scale * (Y_s / learner.c + 1.0) * pair_distance(z1, z2, SUP)
    if learner.kind == "svm":
        spread = kernel_spread(hypothesis.kernel, gamma)
        return np.full(len(z1), scale * math.sqrt(spread / learner.c))
    if learner.kind == "network":
        depth = len(learner.hidden) + 1
        constant = 1.0 + (learner.alpha * learner.beta) ** depth
        return scale * constant * pair_distance(z1, z2, SUP)
    B = setup.dist.space.inputs.max_norm()
    return scale * 2.0 * learner.components * B * pair_distance(z1, z2, EUCLIDEAN)


@dataclass
class VerificationReport:
    rows: list
    passed: bool

    def as_records(self):
        return list(self.rows)


def verify_certificates(setups=None, n_datasets: int = 20, n_train: int = 60,
                        probes_per_cell: int = 50, pairs: int = 10_000,
                        seed: int = 0, epsilon_scale: float = 1.0) -> VerificationReport:
    """Probe-check every closed-form certificate and the per-pair deviation
    constants behind it.

    For each family and dataset, the probe estimate of epsilon must stay at
    or below the closed form; random same-cell pairs must respect the
    family's deviation inequality.  epsilon_scale < 1 deliberately corrupts
    the closed forms so the harness's failure detection can be exercised.
    """
    setups = default_family_setups() if setups is None else setups
    rows = []
    for name, setup in setups.items():
        space = setup.dist.space
        spec = loss_spec_for(setup.learner, setup.M)
        for ds in range(n_datasets):
            samples = sample_iid(setup.dist, n_train, seed, trial=ds)
            hyp = train_for(setup.learner, samples, space, seed=seed)
            certs = certificates_for(setup.learner, hyp, samples, space,
                                     setup.gammas)
            for cert in certs:
                est = empirical_epsilon(hyp, cert.partition, samples,
                                        probes_per_cell, spec, seed=seed)
                closed = epsilon_scale * cert.epsilon
                rows.append({
                    "family": name, "dataset": ds, "gamma": cert.gamma,
                    "check": "probe", "empirical": est, "bound": closed,
                    "passed": bool(est <= closed + 1e-9),
                })
            if ds == 0 and pairs > 0:
                gamma = certs[0].gamma
                # crc, not hash(): stable across processes for reproducible reports
                gen = _rng.stream(seed, _rng.LANE_PAIRS, zlib.crc32(name.encode()))
                z1, z2 = sample_same_cell_pairs(certs[0].partition, space,
                                                pairs, gen)
                l1 = loss_many(hyp, z1, spec)
                l2 = loss_many(hyp, z2, spec)
                allowance = _pair_allowance(setup, hyp, samples, gamma,
                                            z1, z2, epsilon_scale)
                excess = float((np.abs(l1 - l2) - allowance).max()) if len(z1) else 0.0
                rows.append({
                    "family": name, "dataset": 0, "gamma": gamma,
                    "check": "pairs", "empirical": excess, "bound": 0.0,
                    "passed": bool(excess <= 1e-9),
                })
    return VerificationReport(rows=rows, passed=all(r["passed"] for r in rows))
