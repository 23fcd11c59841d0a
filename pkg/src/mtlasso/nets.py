"""Finite-width vector-valued networks viewed as atomic measures.

A network here is a sum of neurons ``x -> v_k * act(w_k . [x, 1])`` with
``w_k`` in R^(d+1) (the trailing coordinate multiplies the constant 1 and
acts as a regularized bias) and ``v_k`` in R^D. For activations that are
positively homogeneous of degree one, input-weight magnitudes can be
absorbed into output weights without changing the function, which makes
the sum of output-weight norms of the normalized form a well-defined
norm on the represented function. The operations below implement that
normalization, the balance transform that equates per-neuron input and
output norms, the norm itself, and the neuron merge that shares one
direction across outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .linalg import ShapeError

#: coalescing tolerance on ||w_i - w_j||_2 between normalized input weights
COALESCE_TOL = 1e-9


class ZeroInputWeightError(ValueError):
    """A neuron with nonzero output weight has a zero input weight."""


@dataclass(frozen=True)
class Activation:
    """Positively homogeneous scalar activation, applied elementwise.

    kind is one of relu, leaky_relu, abs, linear; slope is the negative-side
    slope for leaky_relu. All four satisfy act(c*t) = c*act(t) for c > 0.
    """

    kind: str
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in ("relu", "leaky_relu", "abs", "linear"):
            raise ValueError(f"unknown activation {self.kind!r}")

    def apply(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "relu":
            return np.maximum(t, 0.0)
        if self.kind == "leaky_relu":
            return np.where(t >= 0.0, t, self.slope * t)
        if self.kind == "abs":
            return np.abs(t)
        return t.copy()

    def deriv(self, t: np.ndarray) -> np.ndarray:
        """Pointwise derivative with the convention deriv(0) = 0 for the
        kinked activations (linear returns 1 everywhere)."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "relu":
            return (t > 0.0).astype(np.float64)
        if self.kind == "leaky_relu":
            return np.where(t > 0.0, 1.0, np.where(t < 0.0, self.slope, 0.0))
        if self.kind == "abs":
            return np.sign(t)
        return np.ones_like(t)

    def tag(self) -> str:
        if self.kind == "leaky_relu":
            return f"leaky_relu:{self.slope:.17g}"
        return self.kind


RELU = Activation("relu")
ABS = Activation("abs")
LINEAR = Activation("linear")


def leaky_relu(slope: float) -> Activation:
    return Activation("leaky_relu", slope)


def activation_from_tag(tag: str) -> Activation:
    if tag.startswith("leaky_relu:"):
        return Activation("leaky_relu", float(tag.split(":", 1)[1]))
    return Activation(tag)


@dataclass(frozen=True)
class Neuron:
    w: np.ndarray  # input weight in R^(d+1), last coordinate is the bias
    v: np.ndarray  # output weight in R^D


@dataclass(frozen=True)
class AtomicNet:
    """Width-K network stored in matrix form: W is K x (d+1), V is D x K."""

    d: int
    D: int
    W: np.ndarray
    V: np.ndarray
    activation: Activation = RELU

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=np.float64))
        V = np.asarray(self.V, dtype=np.float64)
        if V.ndim == 1:
            V = V.reshape(self.D, -1)
        if W.shape[0] == 0:
            W = W.reshape(0, self.d + 1)
            V = V.reshape(self.D, 0)
        if W.shape != (W.shape[0], self.d + 1):
            raise ShapeError(f"W must be K x {self.d + 1}, got {W.shape}")
        if V.shape != (self.D, W.shape[0]):
            raise ShapeError(f"V must be {self.D} x {W.shape[0]}, got {V.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(V))):
            raise ValueError("network weights must be finite")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "V", V)

    @property
    def width(self) -> int:
        return self.W.shape[0]

    @property
    def neurons(self) -> list[Neuron]:
        return [Neuron(w=self.W[k].copy(), v=self.V[:, k].copy()) for k in range(self.width)]

    @staticmethod
    def from_neurons(d: int, D: int, neurons: list[Neuron], activation: Activation = RELU) -> "AtomicNet":
        if not neurons:
            return AtomicNet(d=d, D=D, W=np.zeros((0, d + 1)), V=np.zeros((D, 0)),
                             activation=activation)
        W = np.vstack([n.w for n in neurons])
        V = np.column_stack([n.v for n in neurons])
        return AtomicNet(d=d, D=D, W=W, V=V, activation=activation)


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite sum of weighted point masses: unit locations U (n x (d+1)),
    vector weights A (n x D), locations pairwise distinct."""

    U: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, dtype=np.float64))
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        if U.shape[0] != A.shape[0]:
            raise ShapeError(f"atom counts differ: {U.shape[0]} locations, {A.shape[0]} weights")
        norms = np.linalg.norm(U, axis=1)
        if U.shape[0] and not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("atom locations must be unit vectors")
        for i in range(U.shape[0]):
            for j in range(i + 1, U.shape[0]):
                if np.linalg.norm(U[i] - U[j]) <= COALESCE_TOL:
                    raise ValueError(f"atoms {i} and {j} coincide; coalesce them first")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "A", A)

    @property
    def n_atoms(self) -> int:
        return self.U.shape[0]


def augment(x: np.ndarray) -> np.ndarray:
    """Append the constant-1 coordinate: points are rows."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.hstack([x, np.ones((x.shape[0], 1))])


def evaluate(net: AtomicNet, x) -> np.ndarray:
    """Network output(s) at x; a single point gives a D-vector, a batch of
    points (rows) gives an n x D array."""
    x_arr = np.asarray(x, dtype=np.float64)
    single = x_arr.ndim == 1
    pts = np.atleast_2d(x_arr)
    if pts.shape[1] != net.d:
        raise ShapeError(f"expected points in R^{net.d}, got shape {pts.shape}")
    if net.width == 0:
        out = np.zeros((pts.shape[0], net.D))
        return out[0] if single else out
    pre = augment(pts) @ net.W.T            # n x K
    out = net.activation.apply(pre) @ net.V.T  # n x D
    return out[0] if single else out


def normalize(net: AtomicNet) -> AtomicNet:
    """Scale each neuron so its input weight has unit norm, moving the
    magnitude into the output weight; neurons with zero output weight are
    dropped. Degree-one homogeneity makes this exact at every input; the
    sign of w is never flipped."""
    norms = np.linalg.norm(net.W, axis=1)
    vnorms = np.linalg.norm(net.V, axis=0)
    bad = (norms == 0.0) & (vnorms != 0.0)
    if np.any(bad):
        raise ZeroInputWeightError(
            f"neuron(s) {np.nonzero(bad)[0].tolist()} have zero input weight but nonzero output weight")
    keep = vnorms != 0.0
    W = net.W[keep]
    V = net.V[:, keep]
    scale = norms[keep]
    W = W / scale[:, None]
    V = V * scale[None, :]
    return replace(net, W=W, V=V)


def rebalance(net: AtomicNet) -> AtomicNet:
    """Equalize per-neuron input and output weight norms without changing
    the function: after normalization, split each output magnitude evenly
    as w_k' = w~_k * sqrt(||v~_k||) and v_k' = v~_k / sqrt(||v~_k||).

    The half-sum-of-squares cost of the result equals the sum of products
    ||v_k|| * ||w_k|| of the input, which is the smallest squared-norm cost
    among all rescalings of the given neurons.
    """
    nz = normalize(net)
    vnorms = np.linalg.norm(nz.V, axis=0)
    root = np.sqrt(vnorms)
    W = nz.W * root[:, None]
    V = nz.V / root[None, :]
    return replace(nz, W=W, V=V)


def weight_cost(net: AtomicNet) -> float:
    """Half the sum of squared entries of all weights."""
    return 0.5 * (float(np.sum(net.W * net.W)) + float(np.sum(net.V * net.V)))


def path_norm(net: AtomicNet) -> float:
    """Sum over neurons of ||v_k||_2 * ||w_k||_2."""
    return float(np.sum(np.linalg.norm(net.V, axis=0) * np.linalg.norm(net.W, axis=1)))


def _coalesce_rows(W: np.ndarray, V: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Group rows of W within tol of each other and sum the matching
    columns of V. Keeps first-seen order of group representatives."""
    K = W.shape[0]
    group = -np.ones(K, dtype=int)
    reps: list[int] = []
    for k in range(K):
        if reps:
            dists = np.linalg.norm(W[reps] - W[k], axis=1)
            hit = np.nonzero(dists <= tol)[0]
            if hit.size:
                group[k] = int(hit[0])
                continue
        group[k] = len(reps)
        reps.append(k)
    Wc = W[reps]
    Vc = np.zeros((V.shape[0], len(reps)))
    for k in range(K):
        Vc[:, group[k]] += V[:, k]
    return Wc, Vc


def variation_norm(net: AtomicNet, coalesce_tol: float = COALESCE_TOL) -> float:
    """Norm of the function represented by the net: normalize, merge
    neurons whose input weights coincide (their output weights add, since
    point masses at one location sum), then total the output norms."""
    nz = normalize(net)
    if nz.width == 0:
        return 0.0
    _, Vc = _coalesce_rows(nz.W, nz.V, coalesce_tol)
    return float(np.sum(np.linalg.norm(Vc, axis=0)))


def to_measure(net: AtomicNet, coalesce_tol: float = COALESCE_TOL) -> AtomicMeasure:
    """Atomic measure of the normalized net, with coincident locations merged."""
    nz = normalize(net)
    Wc, Vc = _coalesce_rows(nz.W, nz.V, coalesce_tol)
    return AtomicMeasure(U=Wc, A=Vc.T)


def measure_norm(m: AtomicMeasure, p: float, mode: str) -> float:
    """Total-variation style norms of an atomic vector measure.

    mode "p_M": sum over atoms of the p-norm of the weight (the supremum
    over partitions isolates every atom). mode "M_p": p-norm across output
    components of the per-component total masses.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    A = m.A
    if mode == "p_M":
        if A.shape[0] == 0:
            return 0.0
        return float(np.sum(np.linalg.norm(A, ord=p, axis=1)))
    if mode == "M_p":
        masses = np.sum(np.abs(A), axis=0)
        return float(np.linalg.norm(masses, ord=p))
    raise ValueError(f"mode must be 'p_M' or 'M_p', got {mode!r}")


def merge_neurons(net: AtomicNet, i: int, j: int) -> AtomicNet:
    """Drop neuron i and add its output weight to neuron j, i.e. route
    neuron i's contribution through neuron j's direction. When v_i and
    v_j are both nonzero with disjoint support the variation norm strictly
    decreases (strict triangle inequality); it never increases."""
    K = net.width
    if i == j:
        raise ValueError("indices must differ")
    if not (0 <= i < K and 0 <= j < K):
        raise IndexError(f"neuron index out of range for width {K}")
    vnorms = np.linalg.norm(net.V, axis=0)
    wnorms = np.linalg.norm(net.W, axis=1)
    if np.any((vnorms > 0) & (np.abs(wnorms - 1.0) > 1e-9)):
        raise ValueError("merge requires a normalized net (unit input weights)")
    V = net.V.copy()
    V[:, j] += V[:, i]
    keep = np.arange(K) != i
    return replace(net, W=net.W[keep], V=V[:, keep])


def net_to_container(path: str, net: AtomicNet) -> None:
    """Store a network as tensors W (K x (d+1)) and V (D x K) with the
    activation recorded in the manifest."""
    from .container import write_container

    write_container(path, {"W": net.W, "V": net.V},
                    meta={"activation": net.activation.tag(), "d": net.d, "D": net.D})


def net_from_container(container) -> AtomicNet:
    W = container.get("W")
    V = container.get("V")
    act = activation_from_tag(container.meta.get("activation", "relu"))
    return AtomicNet(d=W.shape[1] - 1, D=V.shape[0], W=W, V=V, activation=act)


def objective(net: AtomicNet, xs, ys, lam: float, loss: str = "squared") -> float:
    """Regularized data-fitting objective: summed squared error plus
    lam times the variation norm."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if loss != "squared":
        raise ValueError(f"unsupported loss {loss!r}")
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if ys.shape != (xs.shape[0], net.D):
        raise ShapeError(f"targets must be {xs.shape[0]} x {net.D}, got {ys.shape}")
    preds = evaluate(net, xs)
    fit = float(np.sum((ys - preds) ** 2))
    return fit + lam * variation_norm(net)
