"""Robustness certificates (K, epsilon) and pseudo-certificates (K, epsilon, n_hat).

Closed forms follow the structural constants each learner family guarantees;
the probe estimator cross-checks them empirically from below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import (
    CertificateInapplicableError,
    DegenerateClassifierError,
    EstimatorUnavailableError,
    ParameterError,
)
from .learners import LossSpec, MajorityVoteModel, SvmModel, loss_many, split_samples
from .metric_cover import (
    EUCLIDEAN,
    SUP,
    DEFAULT_MAX_CELLS,
    BinaryLabels,
    Box,
    GridPartition,
    ProductPartition,
    SampleSpace,
    greedy_cover,
    grid_cover,
    partition_from_cover,
    product_partition,
)

NETWORK_CONSTANT_NOTE = (
    "network certificate uses the proven loss constant (1 + (alpha*beta)^depth)"
)


@dataclass(frozen=True, eq=False)
class RobustnessCertificate:
    """(K, epsilon, n_hat) with the partition that realizes it.

    n_hat is None for fully robust certificates (it stands for n); a margin
    pseudo-certificate records the explicit count.
    """

    K: int
    epsilon: float
    gamma: float
    partition: object
    provenance: str
    n: int = None
    n_hat: int = None
    sample_independent: bool = False
    aux: dict = field(default_factory=dict)
    notes: tuple = ()

    def __post_init__(self):
        if self.K < 1:
            raise ParameterError("K must be at least 1")
        if self.epsilon < 0:
            raise ParameterError("epsilon must be non-negative")
        if self.n_hat is not None:
            if self.n is None:
                raise ParameterError("a pseudo certificate needs the sample count n")
            if not 0 <= self.n_hat <= self.n:
                raise ParameterError("n_hat must lie in [0, n]")

    @property
    def is_full(self) -> bool:
        return self.n_hat is None or self.n_hat == self.n


def _same_partition(p, q) -> bool:
    if p is q:
        return True
    if type(p) is not type(q):
        return False
    if isinstance(p, GridPartition):
        return (p.box == q.box and p.metric == q.metric and p.counts == q.counts
                and p.step == q.step)
    if isinstance(p, ProductPartition):
        if type(p.outputs) is not type(q.outputs):
            return False
        if p.y_grid is not None and not _same_partition(p.y_grid, q.y_grid):
            return False
        return _same_partition(p.base, q.base)
    return (p.metric == q.metric and p.gamma == q.gamma
            and np.array_equal(p.centers, q.centers))


def _cover_partition_for(space_region, gamma: float, metric: str, max_cells: int):
    """Partition of a region into cells of diameter <= gamma (a gamma/2 cover)."""
    if isinstance(space_region, Box):
        return grid_cover(space_region, gamma, metric, max_cells)
    centers = greedy_cover(space_region.points, gamma / 2.0, metric)
    return partition_from_cover(centers, gamma, metric, space_region)


def _z_partition(space: SampleSpace, gamma: float, metric: str, max_cells: int):
    """Partition of the full sample space at diameter gamma.

    Plain spaces get a grid/cover directly; binary-label spaces get the input
    partition crossed with the two labels; interval outputs are gridded at the
    same gamma.
    """
    if space.outputs is None:
        return _cover_partition_for(space.inputs, gamma, metric, max_cells)
    base = _cover_partition_for(space.inputs, gamma, metric, max_cells)
    if isinstance(space.outputs, BinaryLabels):
        return product_partition(base, space.outputs)
    return product_partition(base, space.outputs, gamma_y=gamma)


def certify_majority_vote(model: MajorityVoteModel, input_partition=None) -> RobustnessCertificate:
    """Majority vote is (2 K_X, 0) robust over its own input partition."""
    if input_partition is not None and not _same_partition(model.partition, input_partition):
        raise CertificateInapplicableError(
            "the model was trained on a different input partition"
        )
    partition = product_partition(model.partition, BinaryLabels())
    gamma = getattr(model.partition, "gamma", 0.0) or 0.0
    return RobustnessCertificate(
        K=partition.K, epsilon=0.0, gamma=gamma, partition=partition,
        provenance="majority-vote", sample_independent=True,
    )


def certify_lipschitz(lipschitz_constant: float, gamma: float, space: SampleSpace,
                      sample_independent: bool = False,
                      max_cells: int = DEFAULT_MAX_CELLS) -> RobustnessCertificate:
    """A loss that moves at most c(s) per unit distance is
    (K(gamma/2 cover), c(s) * gamma) robust."""
    if lipschitz_constant < 0:
        raise ParameterError("the Lipschitz constant must be non-negative")
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    partition = _z_partition(space, gamma, space.metric, max_cells)
    return RobustnessCertificate(
        K=partition.K, epsilon=lipschitz_constant * gamma, gamma=gamma,
        partition=partition, provenance="lipschitz",
        sample_independent=sample_independent,
        aux={"constant": lipschitz_constant},
    )


def kernel_spread(kernel, gamma: float) -> float:
    """Largest squared feature distance between inputs at most gamma apart.

    Closed forms: gamma^2 for the linear kernel (attained at distance gamma)
    and 2 - 2 exp(-gamma^2 / (2 width^2)) for the gaussian kernel.
    """
    if gamma < 0:
        raise ParameterError("gamma must be non-negative")
    if kernel.kind == "linear":
        return gamma * gamma
    if kernel.kind == "gaussian":
        return 2.0 - 2.0 * math.exp(-gamma * gamma / (2.0 * kernel.width ** 2))
    raise CertificateInapplicableError(
        f"no closed-form feature spread for kernel {kernel.kind!r}"
    )


def certify_svm(model: SvmModel, gamma: float, space: SampleSpace,
                max_cells: int = DEFAULT_MAX_CELLS) -> RobustnessCertificate:
    """SVM is (2 N(gamma/2, X, l2), sqrt(f_H(gamma)/c)) robust, given the
    trained objective does not exceed the zero solution's value 1."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    if not isinstance(space.outputs, BinaryLabels):
        raise CertificateInapplicableError("the SVM certificate needs binary labels")
    if model.objective > 1.0 + 1e-9:
        raise CertificateInapplicableError(
            f"trained objective {model.objective:.6f} exceeds the zero solution's 1"
        )
    spread = kernel_spread(model.kernel, gamma)
    base = _cover_partition_for(space.inputs, gamma, EUCLIDEAN, max_cells)
    partition = product_partition(base, BinaryLabels())
    return RobustnessCertificate(
        K=partition.K, epsilon=math.sqrt(spread / model.reg), gamma=gamma,
        partition=partition, provenance="svm-hinge", sample_independent=True,
        aux={"kernel_spread": spread, "c": model.reg},
    )


def certify_lasso(samples, c: float, gamma: float, space: SampleSpace,
                  max_cells: int = DEFAULT_MAX_CELLS) -> RobustnessCertificate:
    """Lasso is (N(gamma/2, Z, sup), (Y(s)/c + 1) gamma) robust with
    Y(s) the mean squared label."""
    if not c > 0:
        raise ParameterError("c must be positive")
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    _, y = split_samples(samples)
    second_moment = float((y * y).mean())
    partition = grid_cover(space.joint_box(), gamma, SUP, max_cells)
    return RobustnessCertificate(
        K=partition.K, epsilon=(second_moment / c + 1.0) * gamma, gamma=gamma,
        partition=partition, provenance="lasso",
        aux={"label_second_moment": second_moment, "c": c},
    )


def certify_network(alpha: float, beta: float, depth: int, gamma: float,
                    space: SampleSpace,
                    max_cells: int = DEFAULT_MAX_CELLS) -> RobustnessCertificate:
    """A row-l1-bounded, beta-Lipschitz network has loss deviation at most
    (1 + (alpha beta)^depth) per sup-norm unit, hence that constant times gamma."""
    if not (alpha >= 0 and beta >= 0 and depth >= 1):
        raise ParameterError("alpha, beta must be non-negative and depth >= 1")
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    partition = grid_cover(space.joint_box(), gamma, SUP, max_cells)
    constant = 1.0 + (alpha * beta) ** depth
    return RobustnessCertificate(
        K=partition.K, epsilon=constant * gamma, gamma=gamma,
        partition=partition, provenance="network", sample_independent=True,
        aux={"alpha": alpha, "beta": beta, "depth": depth},
        notes=(NETWORK_CONSTANT_NOTE,),
    )


def certify_pca(B: float, d: int, gamma: float, space: SampleSpace,
                max_cells: int = DEFAULT_MAX_CELLS) -> RobustnessCertificate:
    """PCA over points of norm at most B is (N(gamma/2, Z, l2), 2 d gamma B) robust."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    if not (B > 0 and d >= 1):
        raise ParameterError("B must be positive and d >= 1")
    if space.outputs is not None:
        raise CertificateInapplicableError("the PCA certificate is for unsupervised spaces")
    if isinstance(space.inputs, Box):
        if space.inputs.max_norm() > B + 1e-9:
            raise CertificateInapplicableError(
                f"space points reach norm {space.inputs.max_norm():.6g} > B = {B:g}"
            )
    partition = _cover_partition_for(space.inputs, gamma, EUCLIDEAN, max_cells)
    return RobustnessCertificate(
        K=partition.K, epsilon=2.0 * d * gamma * B, gamma=gamma,
        partition=partition, provenance="pca", sample_independent=True,
        aux={"B": B, "d": d},
    )


def margin_distances(model, X) -> np.ndarray:
    """Exact distance of each input to a linear decision boundary."""
    if not (isinstance(model, SvmModel) and model.kernel.kind == "linear"):
        raise ParameterError("exact margins exist only for linear classifiers")
    w = model.linear_weights()
    norm = float(np.sqrt(w @ w))
    if norm < 1e-12:
        raise DegenerateClassifierError("zero weight vector has no margin distance")
    return np.abs(np.asarray(X, float) @ w + model.bias) / norm


def certify_margin(model, samples, gamma: float, space: SampleSpace,
                   probes: int = 64, seed: int = 0,
                   max_cells: int = DEFAULT_MAX_CELLS) -> RobustnessCertificate:
    """Margin pseudo-certificate (2 N(gamma/2, X, rho), 0, n_hat).

    n_hat counts training inputs farther than gamma from the decision
    boundary: exactly for linear classifiers, and for other classifiers by
    probing the gamma ball and only counting inputs with no prediction flip.
    """
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    if not isinstance(space.outputs, BinaryLabels):
        raise CertificateInapplicableError("margin certificates need binary labels")
    X, _ = split_samples(samples)
    n = len(X)
    if isinstance(model, SvmModel) and model.kernel.kind == "linear":
        n_hat = int((margin_distances(model, X) > gamma).sum())
    else:
        preds = model.predict_many(X)
        box = space.inputs if isinstance(space.inputs, Box) else None
        counted = 0
        for i in range(n):
            gen = _rng.stream(seed, _rng.LANE_MARGIN, i)
            if space.metric == SUP:
                shifts = (gen.random((probes, X.shape[1])) * 2.0 - 1.0) * gamma
            else:
                direction = gen.standard_normal((probes, X.shape[1]))
                norms = np.sqrt((direction * direction).sum(axis=1, keepdims=True))
                norms[norms == 0] = 1.0
                radii = gamma * gen.random(probes) ** (1.0 / X.shape[1])
                shifts = direction / norms * radii[:, None]
            nearby = X[i] + shifts
            if box is not None:
                nearby = box.clip(nearby)
            if (model.predict_many(nearby) * preds[i] >= 0).all():
                counted += 1
        n_hat = counted
    base = _cover_partition_for(space.inputs, gamma, space.metric, max_cells)
    partition = product_partition(base, BinaryLabels())
    return RobustnessCertificate(
        K=partition.K, epsilon=0.0, gamma=gamma, partition=partition,
        provenance="margin", n=n, n_hat=n_hat,
    )


def empirical_epsilon(hypothesis, partition, samples, probes_per_cell: int,
                      loss_spec: LossSpec, seed: int = 0) -> float:
    """Probe estimate of epsilon(s): the largest observed same-cell loss
    deviation between a training sample and sampled cell probes.

    Finite probing only ever underestimates, so the estimate is a lower bound
    on the true epsilon(s).
    """
    if probes_per_cell < 1:
        raise ParameterError("probes_per_cell must be at least 1")
    if not hasattr(partition, "sample_in_cell"):
        raise EstimatorUnavailableError("this partition kind has no cell sampler")
    Z = np.asarray(samples, dtype=float)
    idx = partition.cell_index_many(Z)
    base_losses = loss_many(hypothesis, Z, loss_spec)
    worst = 0.0
    for cell in np.unique(idx):
        gen = _rng.stream(seed, _rng.LANE_PROBE, int(cell))
        probes = partition.sample_in_cell(int(cell), probes_per_cell, gen)
        if len(probes) == 0:
            continue
        probe_losses = loss_many(hypothesis, probes, loss_spec)
        members = base_losses[idx == cell]
        deviation = np.abs(members[:, None] - probe_losses[None, :]).max()
        worst = max(worst, float(deviation))
    return worst
