"""Full-batch Adam training of shallow vector-valued networks.

The objective is the summed squared error plus one of three penalties:
half the squared 2-norm of all weights (weight decay), the 1-norm of all
weights, or nothing. Gradients are closed form; the kink of the
activation contributes derivative zero. Training is deterministic given
the seed, which drives the teacher data, the teacher weights, and the
student initialization through independent sub-streams.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .nets import RELU, Activation, AtomicNet, augment
from .rng import Stream


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the objective trace up to the abort."""

    def __init__(self, message: str, trace: list[tuple[int, float]]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TrainConfig:
    reg: str = "weight_decay"     # weight_decay | l1 | none
    lam: float = 0.0
    lr: float = 2e-3
    iters: int = 200_000
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    init_scale: float | None = None   # default 1/sqrt(K) at init time
    trace_every: int = 1000

    def __post_init__(self):
        if self.reg not in ("weight_decay", "l1", "none"):
            raise ValueError(f"reg must be weight_decay, l1 or none, got {self.reg!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.iters < 1:
            raise ValueError("iters must be at least 1")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass(frozen=True)
class TeacherSpec:
    n: int = 50
    d: int = 2
    D: int = 3
    teacher_width: int = 5
    seed: int = 0

    def __post_init__(self):
        if min(self.n, self.d, self.D, self.teacher_width) <= 0:
            raise ValueError("all teacher dimensions must be positive")


def generate_teacher_data(spec: TeacherSpec) -> tuple[np.ndarray, np.ndarray, AtomicNet]:
    """Standard-normal inputs labeled by a random narrow teacher network.

    Returns (xs, ys, teacher) with xs of shape n x d and ys of shape
    n x D. Teacher weights are unit-variance normal draws.
    """
    s_x = Stream(spec.seed, "teacher-data")
    s_w = Stream(spec.seed, "teacher-weights")
    xs = s_x.normal_matrix(spec.n, spec.d)
    W = s_w.normal_matrix(spec.teacher_width, spec.d + 1)
    V = s_w.normal_matrix(spec.D, spec.teacher_width)
    teacher = AtomicNet(d=spec.d, D=spec.D, W=W, V=V, activation=RELU)
    pre = augment(xs) @ W.T
    ys = RELU.apply(pre) @ V.T
    return xs, ys, teacher


def init_student(d: int, D: int, width: int, seed: int,
                 init_scale: float | None = None,
                 activation: Activation = RELU) -> AtomicNet:
    """Student network with N(0, scale^2) weights, scale 1/sqrt(width)."""
    scale = init_scale if init_scale is not None else 1.0 / np.sqrt(width)
    s = Stream(seed, "student-init")
    W = scale * s.normal_matrix(width, d + 1)
    V = scale * s.normal_matrix(D, width)
    return AtomicNet(d=d, D=D, W=W, V=V, activation=activation)


def _loss_and_grads(W, V, Xa, Y, act: Activation):
    pre = Xa @ W.T                    # n x K
    h = act.apply(pre)
    R = h @ V.T - Y                   # n x D residuals
    fit = float(np.sum(R * R))
    gV = 2.0 * (R.T @ h)              # D x K
    gW = 2.0 * ((R @ V) * act.deriv(pre)).T @ Xa   # K x (d+1)
    return fit, gW, gV


def objective_value(net: AtomicNet, xs, ys, config: TrainConfig) -> float:
    Xa = augment(xs)
    Y = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    pre = Xa @ net.W.T
    fit = float(np.sum((net.activation.apply(pre) @ net.V.T - Y) ** 2))
    if config.reg == "weight_decay":
        return fit + 0.5 * config.lam * (float(np.sum(net.W ** 2)) + float(np.sum(net.V ** 2)))
    if config.reg == "l1":
        return fit + config.lam * (float(np.sum(np.abs(net.W))) + float(np.sum(np.abs(net.V))))
    return fit


def train(net: AtomicNet, xs, ys, config: TrainConfig) -> tuple[AtomicNet, list[tuple[int, float]]]:
    """Run full-batch Adam from the given network; returns the trained
    network and an (iteration, objective) trace sampled every
    config.trace_every steps plus the final step."""
    Xa = augment(xs)
    if Xa.shape[1] != net.d + 1:
        raise ValueError(f"inputs must have {net.d} features, got {Xa.shape[1] - 1}")
    Y = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    if Y.shape != (Xa.shape[0], net.D):
        raise ValueError(f"targets must be {Xa.shape[0]} x {net.D}, got {Y.shape}")
    W = net.W.copy()
    V = net.V.copy()
    act = net.activation
    lam = config.lam
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    mW = np.zeros_like(W); vW = np.zeros_like(W)
    mV = np.zeros_like(V); vV = np.zeros_like(V)
    trace: list[tuple[int, float]] = []

    def full_objective(fit: float) -> float:
        if config.reg == "weight_decay":
            return fit + 0.5 * lam * (float(np.sum(W * W)) + float(np.sum(V * V)))
        if config.reg == "l1":
            return fit + lam * (float(np.sum(np.abs(W))) + float(np.sum(np.abs(V))))
        return fit

    for it in range(1, config.iters + 1):
        fit, gW, gV = _loss_and_grads(W, V, Xa, Y, act)
        if config.reg == "weight_decay":
            gW = gW + lam * W
            gV = gV + lam * V
        elif config.reg == "l1":
            gW = gW + lam * np.sign(W)
            gV = gV + lam * np.sign(V)
        if it == 1 or it % config.trace_every == 0:
            obj = full_objective(fit)
            if not np.isfinite(obj):
                raise TrainingDivergedError(f"objective non-finite at iteration {it}", trace)
            trace.append((it, obj))

        with np.errstate(over="ignore", invalid="ignore"):
            mW = b1 * mW + (1 - b1) * gW
            vW = b2 * vW + (1 - b2) * gW * gW
            mV = b1 * mV + (1 - b1) * gV
            vV = b2 * vV + (1 - b2) * gV * gV
            c1 = 1.0 - b1 ** it
            c2 = 1.0 - b2 ** it
            step = config.lr / c1
            W = W - step * mW / (np.sqrt(vW / c2) + eps)
            V = V - step * mV / (np.sqrt(vV / c2) + eps)

    final = replace(net, W=W, V=V)
    fit, _, _ = _loss_and_grads(W, V, Xa, Y, act)
    obj = full_objective(fit)
    if not np.isfinite(obj):
        raise TrainingDivergedError("objective non-finite at final iterate", trace)
    if trace and trace[-1][0] == config.iters:
        trace[-1] = (config.iters, obj)
    else:
        trace.append((config.iters, obj))
    return final, trace


def active_neurons(net: AtomicNet, eps: float = 1e-3) -> tuple[int, tuple[int, ...]]:
    """Neurons whose output weight has 1-norm above eps."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    mass = np.sum(np.abs(net.V), axis=0)
    idx = tuple(int(k) for k in np.nonzero(mass > eps)[0])
    return len(idx), idx


def shared_fraction(net: AtomicNet, eps: float = 1e-3) -> float:
    """Fraction of active neurons contributing to at least two outputs."""
    _, idx = active_neurons(net, eps)
    if not idx:
        return 0.0
    cols = np.abs(net.V[:, list(idx)]) > eps
    return float(np.mean(np.sum(cols, axis=0) >= 2))


def neuron_coordinates(net: AtomicNet, eps: float = 1e-3) -> list[tuple[float, float, float, tuple[float, ...]]]:
    """Planar angle parameterization of the active neurons of a 2-input net.

    The planar part of each input weight is scaled to unit norm with the
    magnitude absorbed into the output weight and the bias divided
    accordingly, so w = (cos t, sin t) and the neuron plots at (t, bias).
    Returns (theta, bias, ||v||_2, per-output |v_j|) per active neuron.
    """
    if net.d != 2:
        raise ValueError("angle parameterization requires 2 input dimensions")
    out = []
    _, idx = active_neurons(net, eps)
    for k in idx:
        w2 = net.W[k, :2]
        b = net.W[k, 2]
        n = float(np.linalg.norm(w2))
        if n == 0.0:
            raise ValueError(f"active neuron {k} has zero planar input weight")
        theta = float(np.arctan2(w2[1] / n, w2[0] / n))
        v = net.V[:, k] * n
        out.append((theta, float(b / n), float(np.linalg.norm(v)),
                    tuple(float(abs(x)) for x in v)))
    return out


def balance_gap(net: AtomicNet, eps_active: float = 1e-3) -> float:
    """Worst relative mismatch between input and output weight norms over
    active neurons; zero for a freshly rebalanced network."""
    _, idx = active_neurons(net, eps_active)
    if not idx:
        return 0.0
    idx = list(idx)
    wn = np.linalg.norm(net.W[idx], axis=1)
    vn = np.linalg.norm(net.V[:, idx], axis=0)
    denom = np.maximum(np.maximum(wn, vn), 1e-300)
    return float(np.max(np.abs(wn - vn) / denom))
