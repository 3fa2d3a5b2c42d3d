"""Generalization bounds evaluated from robustness certificates.

Every report echoes the inputs it used and carries the bound both raw and
clipped at M (a gap between losses in [0, M] can never exceed M).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyInputError,
    ParameterError,
    PreconditionViolatedError,
    WrongCorollaryError,
    WrongTheoremError,
)
from .stats import beta_quantile, beta_truncated_mean, bhc_lambda

TRUNCATION_NOTE = (
    "quantile and truncated mean use the partial-sum semantics for atoms:"
    " the boundary atom contributes (beta - Pr[X < Q]) * Q"
)


@dataclass(frozen=True, eq=False)
class BoundReport:
    """A computed bound with its inputs; sandwich reports use the details."""

    theorem: str
    value: float
    clipped: float
    inputs: dict
    details: dict = field(default_factory=dict)
    notes: tuple = ()

    def as_record(self) -> dict:
        return {
            "theorem": self.theorem,
            "value": self.value,
            "clipped": self.clipped,
            "inputs": dict(self.inputs),
            "details": dict(self.details),
            "notes": list(self.notes),
        }


def _check_common(n: int, delta: float, M: float) -> None:
    if n < 1:
        raise ParameterError("n must be at least 1")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    if M < 0:
        raise ParameterError("M must be non-negative")


def iid_gap_bound(cert, n: int, delta: float, M: float) -> BoundReport:
    """Gap bound for IID samples: epsilon + M sqrt((2K ln2 + 2 ln(1/delta)) / n)."""
    _check_common(n, delta, M)
    if not cert.is_full:
        raise WrongTheoremError(
            "certificate is pseudo (n_hat < n); use pseudo_gap_bound"
        )
    lam = bhc_lambda(cert.K, n, delta)
    value = cert.epsilon + M * lam
    return BoundReport(
        theorem="iid", value=value, clipped=min(value, M),
        inputs={"n": n, "delta": delta, "M": M, "K": cert.K,
                "epsilon": cert.epsilon, "lambda0": lam},
        notes=cert.notes,
    )


def _dedupe_by_K(certs):
    best = {}
    for cert in certs:
        if cert.K not in best or cert.epsilon < best[cert.K].epsilon:
            best[cert.K] = cert
    return best


def adaptive_gap_bound(certs, n: int, delta: float, M: float) -> BoundReport:
    """Uniform-over-K gap bound:
    min_K [epsilon_K + M sqrt((2K ln2 + 2 ln(K(K+1)/delta)) / n)]
    over the supplied certificate list."""
    _check_common(n, delta, M)
    certs = list(certs)
    if not certs:
        raise EmptyInputError("no certificates supplied")
    if any(not c.is_full for c in certs):
        raise WrongTheoremError("adaptive bound needs fully robust certificates")
    best_value = math.inf
    best_cert = None
    for K, cert in sorted(_dedupe_by_K(certs).items()):
        lam = math.sqrt(
            (2.0 * K * math.log(2.0) + 2.0 * math.log(K * (K + 1) / delta)) / n
        )
        value = cert.epsilon + M * lam
        if value < best_value:
            best_value = value
            best_cert = cert
    return BoundReport(
        theorem="adaptive", value=best_value, clipped=min(best_value, M),
        inputs={"n": n, "delta": delta, "M": M, "K": best_cert.K,
                "epsilon": best_cert.epsilon, "gamma": best_cert.gamma},
        details={"argmin_K": best_cert.K, "candidates": len(certs)},
        notes=best_cert.notes,
    )


def sharp_adaptive_gap_bound(certs, n: int, delta: float, M: float) -> BoundReport:
    """Sharper uniform bound for sample-independent epsilon_K:
    min_K [epsilon_K + M sqrt((2K ln2 + 2 ln(1/delta)) / n)]."""
    _check_common(n, delta, M)
    certs = list(certs)
    if not certs:
        raise EmptyInputError("no certificates supplied")
    if any(not c.is_full for c in certs):
        raise WrongTheoremError("sharp adaptive bound needs fully robust certificates")
    if any(not c.sample_independent for c in certs):
        raise WrongCorollaryError(
            "sharp adaptive bound needs sample-independent epsilon values"
        )
    best_value = math.inf
    best_cert = None
    for K, cert in sorted(_dedupe_by_K(certs).items()):
        value = cert.epsilon + M * bhc_lambda(K, n, delta)
        if value < best_value:
            best_value = value
            best_cert = cert
    return BoundReport(
        theorem="sharp-adaptive", value=best_value, clipped=min(best_value, M),
        inputs={"n": n, "delta": delta, "M": M, "K": best_cert.K,
                "epsilon": best_cert.epsilon, "gamma": best_cert.gamma},
        details={"argmin_K": best_cert.K, "candidates": len(certs)},
        notes=best_cert.notes,
    )


def pseudo_gap_bound(cert, n: int, delta: float, M: float) -> BoundReport:
    """Gap bound for pseudo-robust certificates:
    (n_hat/n) epsilon + M ((n - n_hat)/n + sqrt((2K ln2 + 2 ln(1/delta)) / n))."""
    _check_common(n, delta, M)
    n_hat = n if cert.n_hat is None else cert.n_hat
    if not 0 <= n_hat <= n:
        raise ParameterError(f"n_hat = {n_hat} must lie in [0, n = {n}]")
    lam = bhc_lambda(cert.K, n, delta)
    value = (n_hat / n) * cert.epsilon + M * ((n - n_hat) / n + lam)
    return BoundReport(
        theorem="pseudo", value=value, clipped=min(value, M),
        inputs={"n": n, "delta": delta, "M": M, "K": cert.K,
                "epsilon": cert.epsilon, "n_hat": n_hat, "lambda0": lam},
        notes=cert.notes,
    )


def markov_gap_bound(cert, n: int, delta: float, M: float,
                     alpha: float, T: int) -> BoundReport:
    """Gap bound for Doeblin-chain samples; needs n > 2T/alpha.

    Both printed forms are computed; the operative value is the stronger
    epsilon + M sqrt(T/(alpha n)) sqrt(sqrt(2n(K ln2 + ln(1/delta))) + 2),
    which never exceeds the fourth-root form under the precondition.
    """
    _check_common(n, delta, M)
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"alpha must be in (0, 1], got {alpha}")
    if T < 1:
        raise ParameterError("T must be at least 1")
    if not cert.is_full:
        raise WrongTheoremError("the Markov bound needs a fully robust certificate")
    if not n > 2.0 * T / alpha:
        raise PreconditionViolatedError(
            f"need n > 2T/alpha = {2.0 * T / alpha:g}, got n = {n}"
        )
    log_term = cert.K * math.log(2.0) + math.log(1.0 / delta)
    fourth_root = cert.epsilon + M * (8.0 * T * T * log_term / (alpha * alpha * n)) ** 0.25
    stronger = cert.epsilon + M * math.sqrt(T / (alpha * n)) * math.sqrt(
        math.sqrt(2.0 * n * log_term) + 2.0
    )
    return BoundReport(
        theorem="markov", value=stronger, clipped=min(stronger, M),
        inputs={"n": n, "delta": delta, "M": M, "K": cert.K,
                "epsilon": cert.epsilon, "alpha": alpha, "T": T},
        details={"fourth_root_form": fourth_root, "stronger_form": stronger},
        notes=cert.notes,
    )


def quantile_sandwich(cert, training_losses, beta: float, delta: float, n: int,
                      lambda0: float = None) -> BoundReport:
    """Two-sided control of the testing-loss quantile and truncated mean.

    With slack = lambda0 + (n - n_hat)/n, the population beta-quantile lies in
    [Q^(beta-slack)(emp) - epsilon, Q^(beta+slack)(emp) + epsilon], and the
    truncated mean analogously.  Requires the shifted betas to stay in [0, 1].
    """
    losses = np.asarray(training_losses, dtype=float).ravel()
    if losses.size == 0:
        raise EmptyInputError("no training losses")
    if losses.size != n:
        raise ParameterError(f"expected {n} training losses, got {losses.size}")
    if not 0.0 < beta < 1.0 + 1e-12:
        raise ParameterError(f"beta must be in (0, 1], got {beta}")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    n_hat = n if cert.n_hat is None else cert.n_hat
    lam = bhc_lambda(cert.K, n, delta) if lambda0 is None else float(lambda0)
    slack = lam + (n - n_hat) / n
    lo_beta = beta - slack
    hi_beta = beta + slack
    if lo_beta < -1e-12 or hi_beta > 1.0 + 1e-12:
        raise PreconditionViolatedError(
            f"beta window [{lo_beta:.6g}, {hi_beta:.6g}] leaves [0, 1];"
            f" feasible beta range is [{slack:.6g}, {1.0 - slack:.6g}]"
        )
    lo_beta = min(max(lo_beta, 0.0), 1.0)
    hi_beta = min(max(hi_beta, 0.0), 1.0)
    eps = cert.epsilon
    # losses are non-negative, so 0 is a sound quantile floor at beta = 0
    q_lo = (0.0 if lo_beta == 0.0 else beta_quantile(losses, lo_beta)) - eps
    q_hi = beta_quantile(losses, hi_beta) + eps
    t_lo = beta_truncated_mean(losses, lo_beta) - eps
    t_hi = beta_truncated_mean(losses, hi_beta) + eps
    return BoundReport(
        theorem="quantile-sandwich", value=None, clipped=None,
        inputs={"n": n, "delta": delta, "beta": beta, "K": cert.K,
                "epsilon": eps, "n_hat": n_hat, "lambda0": lam, "slack": slack},
        details={"q_lower": q_lo, "q_upper": q_hi,
                 "t_lower": t_lo, "t_upper": t_hi},
        notes=cert.notes + (TRUNCATION_NOTE,),
    )
