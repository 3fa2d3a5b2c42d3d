"""The certified learner families: training procedures and bounded losses.

Each trainer enforces the structural constraint its robustness certificate
needs (norm-ball feasibility, objective-at-zero domination, row l1 bounds,
orthonormality) by construction rather than relying on exact optimality.
All losses are clipped into [0, M] before any bound sees them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import rng as _rng
from .errors import EmptyInputError, ParameterError

ZERO_ONE = "zero-one"
HINGE = "hinge"
ABSOLUTE = "absolute"
PCA_QUADRATIC = "pca-quadratic"

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class LossSpec:
    """Loss kind plus the uniform clip bound M."""

    kind: str
    M: float

    def __post_init__(self):
        if self.kind not in (ZERO_ONE, HINGE, ABSOLUTE, PCA_QUADRATIC):
            raise ParameterError(f"unknown loss kind {self.kind!r}")
        if self.M < 0:
            raise ParameterError("M must be non-negative")


def split_samples(samples):
    """Feature block and label column of supervised samples."""
    Z = np.asarray(samples, dtype=float)
    if Z.ndim != 2 or Z.shape[1] < 2:
        raise ParameterError("supervised samples must be rows of (features..., label)")
    return Z[:, :-1], Z[:, -1]


def _require_binary(y: np.ndarray) -> None:
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ParameterError("labels must be exactly -1 or +1")


# ---------------------------------------------------------------------------
# majority vote


@dataclass(frozen=True, eq=False)
class MajorityVoteModel:
    """Per-cell label table over a fixed input partition."""

    partition: object
    cell_labels: np.ndarray

    def predict_many(self, X) -> np.ndarray:
        idx = self.partition.cell_index_many(X)
        return self.cell_labels[idx - 1]


def train_majority_vote(samples, input_partition) -> MajorityVoteModel:
    """Label each input cell by majority vote; ties and empty cells get +1."""
    X, y = split_samples(samples)
    _require_binary(y)
    idx = input_partition.cell_index_many(X) - 1
    K = input_partition.K
    plus = np.bincount(idx[y > 0], minlength=K)
    minus = np.bincount(idx[y < 0], minlength=K)
    labels = np.where(plus >= minus, 1.0, -1.0)
    return MajorityVoteModel(partition=input_partition, cell_labels=labels)


# ---------------------------------------------------------------------------
# norm-constrained linear regression


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Linear predictor with its training constraint recorded."""

    w: np.ndarray
    family: str          # "norm-ball" | "lasso"
    c: float

    def predict_many(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.w


def _project_l2(w: np.ndarray, radius: float) -> np.ndarray:
    norm = float(np.sqrt(w @ w))
    if norm > radius and norm > 0:
        return w * (radius / norm)
    return w


def mean_absolute_objective(w, X, y) -> float:
    return float(np.abs(y - X @ w).mean())


def train_norm_constrained_regression(samples, c: float, max_iter: int = 5000,
                                      tol: float = 1e-8, patience: int = 200) -> LinearModel:
    """Projected subgradient descent on the mean absolute loss over the
    l2 ball of radius c; returns the best feasible iterate."""
    if not c > 0:
        raise ParameterError("c must be positive")
    X, y = split_samples(samples)
    if len(y) == 0:
        raise EmptyInputError("no training samples")
    n, m = X.shape
    grad_scale = max(float(np.sqrt((X * X).sum(axis=1)).mean()), 1e-12)
    step0 = c / grad_scale
    w = np.zeros(m)
    best_w = w.copy()
    best_f = mean_absolute_objective(w, X, y)
    stall = 0
    for t in range(1, max_iter + 1):
        residual = y - X @ w
        grad = -(X.T @ np.sign(residual)) / n
        w = _project_l2(w - step0 / math.sqrt(t) * grad, c)
        f = mean_absolute_objective(w, X, y)
        if f < best_f - tol:
            best_f, best_w, stall = f, w.copy(), 0
        else:
            stall += 1
            if stall >= patience:
                break
    return LinearModel(w=best_w, family="norm-ball", c=float(c))


# ---------------------------------------------------------------------------
# lasso


def soft_threshold(value: float, threshold: float) -> float:
    return math.copysign(max(abs(value) - threshold, 0.0), value)


def lasso_objective(w, X, y, c) -> float:
    r = y - X @ w
    return float((r @ r) / len(y) + c * np.abs(w).sum())


def train_lasso(samples, c: float, tol: float = 1e-8, max_sweeps: int = 10_000) -> LinearModel:
    """Cyclic coordinate descent with soft thresholding, started at zero.

    Starting at w = 0 and descending monotonically keeps the objective at or
    below its value at zero, which pins ||w||_1 <= Y(s)/c.
    """
    if not c > 0:
        raise ParameterError("c must be positive")
    X, y = split_samples(samples)
    if len(y) == 0:
        raise EmptyInputError("no training samples")
    n, m = X.shape
    col_sq = 2.0 * (X * X).sum(axis=0) / n
    w = np.zeros(m)
    residual = y.copy()
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(m):
            if col_sq[j] == 0.0:
                continue
            old = w[j]
            rho = 2.0 * float(X[:, j] @ residual) / n + col_sq[j] * old
            new = soft_threshold(rho, c) / col_sq[j]
            if new != old:
                residual += X[:, j] * (old - new)
                w[j] = new
            delta = max(delta, abs(new - old))
        if delta < tol:
            break
    return LinearModel(w=w, family="lasso", c=float(c))


def label_second_moment(samples) -> float:
    """Y(s) = mean of squared labels, the lasso feasibility constant."""
    _, y = split_samples(samples)
    return float((y * y).mean())


# ---------------------------------------------------------------------------
# support vector machine


@dataclass(frozen=True)
class KernelSpec:
    kind: str            # "linear" | "gaussian"
    width: float = 1.0   # gaussian bandwidth

    def __post_init__(self):
        if self.kind not in ("linear", "gaussian"):
            raise ParameterError(f"unknown kernel {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            raise ParameterError("gaussian kernel needs a positive width")


def kernel_matrix(kernel: KernelSpec, A, B) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if kernel.kind == "linear":
        return A @ B.T
    sq = ((A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :]
          - 2.0 * A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / (2.0 * kernel.width ** 2))


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Kernel SVM in dual-coefficient form: w = sum_i coef_i phi(x_i)."""

    dual_coef: np.ndarray
    bias: float
    kernel: KernelSpec
    anchors: np.ndarray
    reg: float               # the regularizer c
    weight_norm: float       # ||w|| in the feature space
    objective: float         # c ||w||^2 + mean hinge at the returned iterate

    def decision_many(self, X) -> np.ndarray:
        return kernel_matrix(self.kernel, np.asarray(X, float), self.anchors) @ self.dual_coef + self.bias

    def predict_many(self, X) -> np.ndarray:
        return np.where(self.decision_many(X) >= 0.0, 1.0, -1.0)

    def linear_weights(self) -> np.ndarray:
        if self.kernel.kind != "linear":
            raise ParameterError("explicit weights exist only for the linear kernel")
        return self.anchors.T @ self.dual_coef


def _best_bias(f: np.ndarray, y: np.ndarray) -> float:
    """Exact minimizer of the mean hinge over the bias.

    The objective is convex piecewise linear with breakpoints d = y_i - f_i;
    sweeping them in ascending order, the slope rises by one per breakpoint
    from -(number of positives), so the minimum sits at the n_plus-th one.
    Flat minima take their left endpoint.
    """
    breaks = np.sort(y - f)
    n_plus = int((y > 0).sum())
    return float(breaks[max(n_plus - 1, 0)])


def _train_svm_linear(X, y, c, max_iter):
    n, m = X.shape
    w = np.zeros(m)
    radius_sq = 1.0 / c
    best = None
    for t in range(1, max_iter + 1):
        f = X @ w
        bias = _best_bias(f, y)
        margins = y * (f + bias)
        hinge = float(np.maximum(0.0, 1.0 - margins).mean())
        wsq = float(w @ w)
        objective = c * wsq + hinge
        if best is None or objective < best[2]:
            best = (w.copy(), bias, objective, wsq)
        violating = (margins < 1.0).astype(float)
        grad = 2.0 * c * w - X.T @ (y * violating) / n
        w = w - grad / (2.0 * c * (t + 10.0))
        wsq_new = float(w @ w)
        if wsq_new > radius_sq:
            w *= math.sqrt(radius_sq / wsq_new)
    w, bias, objective, wsq = best
    # basis anchors make the dual coefficients carry the primal weights
    return SvmModel(dual_coef=w, bias=bias, kernel=KernelSpec("linear"),
                    anchors=np.eye(m), reg=float(c),
                    weight_norm=math.sqrt(max(wsq, 0.0)), objective=objective)


def _train_svm_kernel(X, y, c, kernel, max_iter):
    n = len(y)
    G = kernel_matrix(kernel, X, X)
    coef = np.zeros(n)
    radius_sq = 1.0 / c
    best = None
    for t in range(1, max_iter + 1):
        f = G @ coef
        bias = _best_bias(f, y)
        margins = y * (f + bias)
        hinge = float(np.maximum(0.0, 1.0 - margins).mean())
        wsq = float(coef @ f)
        objective = c * wsq + hinge
        if best is None or objective < best[2]:
            best = (coef.copy(), bias, objective, wsq)
        violating = (margins < 1.0).astype(float)
        grad = 2.0 * c * f - G @ (y * violating) / n
        coef = coef - grad / (2.0 * c * (t + 10.0))
        wsq_new = float(coef @ (G @ coef))
        if wsq_new > radius_sq:
            coef *= math.sqrt(radius_sq / wsq_new)
    coef, bias, objective, wsq = best
    return SvmModel(dual_coef=coef, bias=bias, kernel=kernel, anchors=X.copy(),
                    reg=float(c), weight_norm=math.sqrt(max(wsq, 0.0)),
                    objective=objective)


def train_svm(samples, c: float, kernel: KernelSpec, max_iter: int = 1500) -> SvmModel:
    """Projected subgradient descent on the (kernelized) primal.

    The zero solution has objective exactly 1, so returning the best iterate
    certifies c ||w||^2 + mean hinge <= 1 and hence ||w|| <= sqrt(1/c).
    Linear kernels run directly in weight space.
    """
    if not c > 0:
        raise ParameterError("c must be positive")
    if not isinstance(kernel, KernelSpec):
        raise ParameterError("kernel must be a KernelSpec")
    X, y = split_samples(samples)
    _require_binary(y)
    if kernel.kind == "linear":
        return _train_svm_linear(X, y, c, max_iter)
    return _train_svm_kernel(X, y, c, kernel, max_iter)


# ---------------------------------------------------------------------------
# feed-forward network


_ACTIVATIONS = ("tanh", "logistic", "clipped-identity")


def _activation(name: str, beta: float):
    if name == "tanh":
        return (lambda t: beta * np.tanh(t),
                lambda t: beta * (1.0 - np.tanh(t) ** 2))
    if name == "logistic":
        return (lambda t: 4.0 * beta * (expit(t) - 0.5),
                lambda t: 4.0 * beta * expit(t) * (1.0 - expit(t)))
    if name == "clipped-identity":
        return (lambda t: np.clip(beta * t, -1.0, 1.0),
                lambda t: beta * (np.abs(beta * t) < 1.0))
    raise ParameterError(f"unsupported activation {name!r}")


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Layered network; every weight-row l1 norm is bounded by alpha and the
    activation is beta-Lipschitz, so the output is (alpha*beta)^depth-Lipschitz
    in the sup norm of the input."""

    weights: tuple
    activation: str
    alpha: float
    beta: float

    @property
    def depth(self) -> int:
        return len(self.weights)

    def forward_many(self, X) -> np.ndarray:
        act, _ = _activation(self.activation, self.beta)
        out = np.asarray(X, dtype=float).T
        for W in self.weights:
            if W.shape[1] != out.shape[0]:
                raise ParameterError("input dimension does not match the first layer")
            out = act(W @ out)
        return out.ravel()

    def row_norms(self):
        return [np.abs(W).sum(axis=1) for W in self.weights]


def nn_forward(network: NetworkModel, x) -> float:
    """Scalar output of the layered composition for one input."""
    return float(network.forward_many(np.atleast_2d(np.asarray(x, float)))[0])


def _project_l1_rows(W: np.ndarray, radius: float) -> np.ndarray:
    # rowwise euclidean projection onto the l1 ball (sort-based threshold)
    W = W.copy()
    for i in range(W.shape[0]):
        v = W[i]
        l1 = np.abs(v).sum()
        if l1 <= radius:
            continue
        u = np.sort(np.abs(v))[::-1]
        css = np.cumsum(u) - radius
        ranks = np.arange(1, len(u) + 1)
        rho = np.flatnonzero(u > css / ranks)[-1]
        theta = css[rho] / (rho + 1.0)
        W[i] = np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)
    return W


def train_network(samples, hidden, alpha: float, beta: float, activation: str,
                  seed: int = 0, epochs: int = 800, step: float = 0.2) -> NetworkModel:
    """Gradient descent on the mean absolute loss with per-row l1 projection
    after every step, so the row constraint holds for the returned network."""
    if not (alpha > 0 and beta > 0):
        raise ParameterError("alpha and beta must be positive")
    if activation not in _ACTIVATIONS:
        raise ParameterError(f"unsupported activation {activation!r}")
    X, y = split_samples(samples)
    dims = [X.shape[1], *hidden, 1]
    gen = _rng.stream(seed, _rng.LANE_TRAIN)
    act, act_grad = _activation(activation, beta)
    weights = [
        _project_l1_rows(gen.uniform(-1.0, 1.0, size=(dims[v + 1], dims[v])) * alpha / dims[v],
                         alpha)
        for v in range(len(dims) - 1)
    ]
    n = len(y)

    def objective(ws):
        out = X.T
        for W in ws:
            out = act(W @ out)
        return float(np.abs(y - out.ravel()).mean())

    best = [w.copy() for w in weights]
    best_f = objective(weights)
    for t in range(1, epochs + 1):
        pre = []
        out = X.T
        for W in weights:
            z = W @ out
            pre.append((out, z))
            out = act(z)
        delta = -np.sign(y - out.ravel())[None, :] / n
        grads = []
        for W, (inp, z) in zip(reversed(weights), reversed(pre)):
            delta = delta * act_grad(z)
            grads.append(delta @ inp.T)
            delta = W.T @ delta
        grads.reverse()
        eta = step / math.sqrt(t)
        weights = [
            _project_l1_rows(W - eta * g, alpha) for W, g in zip(weights, grads)
        ]
        f = objective(weights)
        if f < best_f:
            best_f = f
            best = [w.copy() for w in weights]
    return NetworkModel(weights=tuple(best), activation=activation,
                        alpha=float(alpha), beta=float(beta))


# ---------------------------------------------------------------------------
# principal components


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Orthonormal direction set maximizing captured second moment."""

    components: np.ndarray    # (d, m) rows

    def captured_energy(self, Z) -> float:
        Z = np.asarray(Z, dtype=float)
        return float(((Z @ self.components.T) ** 2).sum())


def _orthogonal_complement_vector(found: np.ndarray, m: int) -> np.ndarray:
    for i in range(m):
        v = np.zeros(m)
        v[i] = 1.0
        if len(found):
            v -= found.T @ (found @ v)
        norm = float(np.sqrt(v @ v))
        if norm > 1e-9:
            return v / norm
    raise ParameterError("cannot complete an orthonormal basis")


def train_pca(samples, d: int, tol: float = 1e-12, max_iter: int = 10_000) -> PcaModel:
    """Top-d directions of the uncentered second-moment matrix via power
    iteration with deflation; rows come back orthonormal."""
    Z = np.asarray(samples, dtype=float)
    if Z.ndim != 2 or Z.shape[0] == 0:
        raise EmptyInputError("pca needs a non-empty 2-d sample array")
    m = Z.shape[1]
    if not 1 <= d <= m:
        raise ParameterError(f"d must be in 1..{m}, got {d}")
    A = Z.T @ Z
    found = np.empty((0, m))
    for _ in range(d):
        v = np.ones(m) + np.arange(m) / (10.0 * m)
        if len(found):
            v -= found.T @ (found @ v)
        norm = float(np.sqrt(v @ v))
        if norm < 1e-12:
            v = _orthogonal_complement_vector(found, m)
        else:
            v /= norm
        for _ in range(max_iter):
            u = A @ v
            if len(found):
                u -= found.T @ (found @ u)
            norm = float(np.sqrt(u @ u))
            if norm < 1e-14:
                v = _orthogonal_complement_vector(found, m)
                break
            u /= norm
            if float(np.abs(u - v).max()) < tol:
                v = u
                break
            v = u
        lead = np.flatnonzero(np.abs(v) > 1e-9)
        if lead.size and v[lead[0]] < 0:
            v = -v
        found = np.vstack([found, v])
    # one modified Gram-Schmidt pass tightens orthonormality to round-off
    for i in range(d):
        for j in range(i):
            found[i] -= (found[j] @ found[i]) * found[j]
        found[i] /= float(np.sqrt(found[i] @ found[i]))
    return PcaModel(components=found)


# ---------------------------------------------------------------------------
# losses


def loss_many(hypothesis, Z, spec: LossSpec) -> np.ndarray:
    """Per-sample loss of the hypothesis on rows of Z, clipped into [0, M]."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    if spec.kind == ZERO_ONE:
        if not isinstance(hypothesis, (MajorityVoteModel, SvmModel)):
            raise ParameterError("zero-one loss needs a classifier")
        X, y = Z[:, :-1], Z[:, -1]
        raw = (hypothesis.predict_many(X) * y < 0).astype(float)
    elif spec.kind == HINGE:
        if not isinstance(hypothesis, SvmModel):
            raise ParameterError("hinge loss needs an SvmModel")
        X, y = Z[:, :-1], Z[:, -1]
        raw = np.maximum(0.0, 1.0 - y * hypothesis.decision_many(X))
    elif spec.kind == ABSOLUTE:
        if isinstance(hypothesis, LinearModel):
            X, y = Z[:, :-1], Z[:, -1]
            raw = np.abs(y - hypothesis.predict_many(X))
        elif isinstance(hypothesis, NetworkModel):
            X, y = Z[:, :-1], Z[:, -1]
            raw = np.abs(y - hypothesis.forward_many(X))
        else:
            raise ParameterError("absolute loss needs a regression model")
    elif spec.kind == PCA_QUADRATIC:
        if not isinstance(hypothesis, PcaModel):
            raise ParameterError("pca-quadratic loss needs a PcaModel")
        raw = ((Z @ hypothesis.components.T) ** 2).sum(axis=1)
    else:  # pragma: no cover - guarded by LossSpec
        raise ParameterError(f"unknown loss kind {spec.kind!r}")
    return np.clip(raw, 0.0, spec.M)


def loss(hypothesis, z, spec: LossSpec) -> float:
    """Clipped loss of the hypothesis at a single point."""
    return float(loss_many(hypothesis, np.atleast_2d(np.asarray(z, float)), spec)[0])
