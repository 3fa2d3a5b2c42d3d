"""IID dataset generation, Doeblin-chain trajectories, and risk estimation.

All samplers draw from counter-based streams keyed by (seed, trial), so any
subset of trials reproduces identically regardless of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import truncnorm

from . import rng as _rng
from .errors import (
    EmptyInputError,
    NotDoeblinError,
    NumericalFailureError,
    ParameterError,
)
from .learners import LossSpec, NetworkModel, loss_many
from .metric_cover import BinaryLabels, Box, Interval, SampleSpace


@dataclass(frozen=True)
class Marginal:
    """One input coordinate's law over its box edge."""

    kind: str = "uniform"            # "uniform" | "truncated-gaussian"
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "truncated-gaussian"):
            raise ParameterError(f"unknown marginal kind {self.kind!r}")
        if self.kind == "truncated-gaussian" and not self.sd > 0:
            raise ParameterError("truncated gaussian needs a positive sd")


@dataclass(frozen=True, eq=False)
class LabelModel:
    """Deterministic label function plus bounded noise.

    For regression kinds the noise is a uniform perturbation amplitude; for
    the threshold kind it is a flip probability.
    """

    kind: str                        # "linear" | "threshold" | "network"
    weights: tuple = ()
    bias: float = 0.0
    noise: float = 0.0
    network: NetworkModel = None

    def __post_init__(self):
        if self.kind not in ("linear", "threshold", "network"):
            raise ParameterError(f"unknown label model {self.kind!r}")
        if self.kind == "network" and self.network is None:
            raise ParameterError("network label model needs a NetworkModel")
        if self.noise < 0:
            raise ParameterError("noise must be non-negative")


@dataclass(frozen=True, eq=False)
class DistributionSpec:
    """Product input law over the space's box plus an optional label model."""

    space: SampleSpace
    marginals: tuple
    labels: LabelModel = None

    def __post_init__(self):
        if not isinstance(self.space.inputs, Box):
            raise ParameterError("distributions are defined over box input spaces")
        if len(self.marginals) != self.space.input_dim:
            raise ParameterError("one marginal per input coordinate is required")
        if (self.labels is None) != (self.space.outputs is None):
            raise ParameterError("label model must match the declared output space")


def _transform_inputs(dist: DistributionSpec, U: np.ndarray) -> np.ndarray:
    lo = dist.space.inputs.lo_array()
    hi = dist.space.inputs.hi_array()
    X = np.empty_like(U)
    for j, marg in enumerate(dist.marginals):
        if marg.kind == "uniform":
            X[:, j] = lo[j] + U[:, j] * (hi[j] - lo[j])
        else:
            a = (lo[j] - marg.mean) / marg.sd
            b = (hi[j] - marg.mean) / marg.sd
            u = np.clip(U[:, j], 1e-12, 1.0 - 1e-12)
            X[:, j] = truncnorm.ppf(u, a, b, loc=marg.mean, scale=marg.sd)
    return X


def _draw_labels(dist: DistributionSpec, X: np.ndarray,
                 gen: np.random.Generator) -> np.ndarray:
    model = dist.labels
    if model.kind == "threshold":
        raw = np.where(X @ np.asarray(model.weights, float) + model.bias >= 0.0, 1.0, -1.0)
        if model.noise > 0:
            flips = gen.random(len(X)) < model.noise
            raw = np.where(flips, -raw, raw)
        return raw
    if model.kind == "linear":
        y = X @ np.asarray(model.weights, float) + model.bias
    else:
        y = model.network.forward_many(X)
    if model.noise > 0:
        y = y + model.noise * (2.0 * gen.random(len(X)) - 1.0)
    out = dist.space.outputs
    if isinstance(out, Interval):
        y = np.clip(y, out.lo, out.hi)
    elif isinstance(out, BinaryLabels):
        y = np.where(y >= 0.0, 1.0, -1.0)
    return y


def sample_iid(dist: DistributionSpec, n: int, seed: int, trial: int = 0) -> np.ndarray:
    """Draw n independent samples; identical (seed, trial) pairs reproduce."""
    if n < 1:
        raise EmptyInputError("n must be at least 1")
    gen = _rng.stream(seed, _rng.LANE_IID, trial)
    X = _transform_inputs(dist, gen.random((n, dist.space.input_dim)))
    if dist.labels is None:
        return X
    y = _draw_labels(dist, X, gen)
    return np.hstack([X, y[:, None]])


@dataclass(frozen=True, eq=False)
class DoeblinChain:
    """Finite-state chain with per-state uniform box emissions into the space.

    A degenerate box (lo == hi on every coordinate) emits deterministically.
    """

    transition: np.ndarray
    emission_lo: np.ndarray
    emission_hi: np.ndarray
    space: SampleSpace

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ParameterError("transition matrix must be square")
        _check_stochastic(P)
        lo = np.asarray(self.emission_lo, dtype=float)
        hi = np.asarray(self.emission_hi, dtype=float)
        if lo.shape != hi.shape or lo.shape[0] != P.shape[0]:
            raise ParameterError("one emission box per state is required")
        if (hi < lo).any():
            raise ParameterError("emission boxes need hi >= lo")
        for corner in (lo, hi):
            if not self.space.contains(corner).all():
                raise ParameterError("emission boxes must lie inside the sample space")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "emission_lo", lo)
        object.__setattr__(self, "emission_hi", hi)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]


def _check_stochastic(P: np.ndarray) -> None:
    if (P < 0).any():
        raise ParameterError("transition entries must be non-negative")
    if np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
        raise ParameterError("transition rows must sum to 1 within 1e-12")


def doeblin_params(P, t_max: int = 64):
    """Smallest T <= t_max with min entry of P^T positive, and the matching
    minorization constant alpha = m * min(P^T) against the uniform measure."""
    P = np.asarray(P, dtype=float)
    _check_stochastic(P)
    if t_max < 1:
        raise ParameterError("t_max must be at least 1")
    m = P.shape[0]
    power = P.copy()
    for T in range(1, t_max + 1):
        smallest = float(power.min())
        if smallest > 0.0:
            return m * smallest, T
        power = power @ P
    raise NotDoeblinError(
        f"no T <= {t_max} gives a strictly positive transition power"
    )


def simulate_states(chain: DoeblinChain, n: int, initial_state: int,
                    seed: int, trial: int = 0) -> np.ndarray:
    """State path after steps 1..n from the initial state."""
    if n < 1:
        raise EmptyInputError("n must be at least 1")
    if not 0 <= initial_state < chain.n_states:
        raise ParameterError(f"initial state must be in 0..{chain.n_states - 1}")
    gen = _rng.stream(seed, _rng.LANE_CHAIN, trial)
    u = gen.random(n)
    cum = np.cumsum(chain.transition, axis=1)
    states = np.empty(n, dtype=np.int64)
    s = initial_state
    for t in range(n):
        s = int(np.searchsorted(cum[s], u[t], side="right"))
        s = min(s, chain.n_states - 1)
        states[t] = s
    return states


def _emit(chain: DoeblinChain, states: np.ndarray,
          gen: np.random.Generator) -> np.ndarray:
    lo = chain.emission_lo[states]
    hi = chain.emission_hi[states]
    return lo + gen.random(lo.shape) * (hi - lo)


def sample_chain(chain: DoeblinChain, n: int, initial_state: int,
                 seed: int, trial: int = 0) -> np.ndarray:
    """Emissions along the first n steps of the chain."""
    states = simulate_states(chain, n, initial_state, seed, trial)
    gen = _rng.stream(seed, _rng.LANE_CHAIN, trial, 1)
    return _emit(chain, states, gen)


def stationary_distribution(P, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Invariant distribution via power iteration, to ||pi P - pi||_1 <= tol."""
    P = np.asarray(P, dtype=float)
    _check_stochastic(P)
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() <= tol:
            return nxt
        pi = nxt
    raise NumericalFailureError(
        f"power iteration did not reach tolerance {tol:g} in {max_iter} steps"
    )


@dataclass(frozen=True)
class RiskEstimate:
    """Monte-Carlo estimate of the expected loss with its standard error."""

    value: float
    stderr: float
    n_mc: int


def mc_losses(hypothesis, source, loss_spec: LossSpec, n_mc: int,
              seed: int, trial: int = 0) -> np.ndarray:
    """Losses on n_mc fresh draws from the source law.

    IID sources draw fresh samples; chains draw states from the stationary
    distribution and then emissions, matching the quantity the Markov bound
    controls.
    """
    if n_mc < 10_000:
        raise ParameterError("n_mc must be at least 10000")
    gen = _rng.stream(seed, _rng.LANE_RISK, trial)
    if isinstance(source, DistributionSpec):
        Z = _transform_inputs(source, gen.random((n_mc, source.space.input_dim)))
        if source.labels is not None:
            y = _draw_labels(source, Z, gen)
            Z = np.hstack([Z, y[:, None]])
    elif isinstance(source, DoeblinChain):
        pi = stationary_distribution(source.transition)
        cum = np.cumsum(pi)
        states = np.searchsorted(cum, gen.random(n_mc), side="right")
        np.clip(states, 0, source.n_states - 1, out=states)
        Z = _emit(source, states, gen)
    else:
        raise ParameterError("source must be a DistributionSpec or a DoeblinChain")
    return loss_many(hypothesis, Z, loss_spec)


def true_risk(hypothesis, source, loss_spec: LossSpec, n_mc: int,
              seed: int, trial: int = 0) -> RiskEstimate:
    """Monte-Carlo estimate of the expected loss under the source law."""
    losses = mc_losses(hypothesis, source, loss_spec, n_mc, seed, trial)
    value = float(losses.mean())
    stderr = float(losses.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else 0.0
    return RiskEstimate(value=value, stderr=stderr, n_mc=n_mc)
