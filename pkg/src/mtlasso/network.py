"""Stacked ReLU networks for the layer compression pipeline.

A network is a chain of hidden affine maps followed by a bias-free
linear readout: h_0 = x, h_{i+1} = act(A_i [h_i; 1]), output = R h_L.
Each hidden layer together with the weights that consume its activations
forms a shallow unit (input weights A_i, output weights A_{i+1} without
its bias column, or R for the last hidden layer); those units are what
the compressor operates on.

On disk a network is a tensor container with one record pair per unit,
``layer{i}.W`` and ``layer{i}.V``; interior affines appear both as some
``layer{i}.V`` and inside ``layer{i+1}.W``, and the reader checks they
agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import TensorContainer, write_container
from .nets import RELU, Activation, activation_from_tag, augment
from .rng import Stream


@dataclass
class Network:
    hidden: list[np.ndarray]      # A_i, shape K_i x (K_{i-1} + 1), K_{-1} = input dim
    readout: np.ndarray           # R, shape D x K_{L-1}
    activation: Activation = RELU

    def __post_init__(self):
        if not self.hidden:
            raise ValueError("network needs at least one hidden layer")
        self.hidden = [np.asarray(A, dtype=np.float64) for A in self.hidden]
        self.readout = np.asarray(self.readout, dtype=np.float64)
        dims = self.layer_dims()
        for i, A in enumerate(self.hidden):
            if A.shape[1] != dims[i] + 1:
                raise ValueError(f"hidden layer {i} expects {dims[i]} inputs, "
                                 f"weight shape is {A.shape}")
        if self.readout.shape[1] != self.hidden[-1].shape[0]:
            raise ValueError("readout width does not match the last hidden layer")

    def layer_dims(self) -> list[int]:
        dims = [self.hidden[0].shape[1] - 1]
        for A in self.hidden:
            dims.append(A.shape[0])
        return dims

    @property
    def n_units(self) -> int:
        return len(self.hidden)

    def unit_weights(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(input weights, output weights) of hidden unit i."""
        w_in = self.hidden[i]
        if i + 1 < len(self.hidden):
            v_out = self.hidden[i + 1][:, :-1]
        else:
            v_out = self.readout
        return w_in, v_out

    def set_unit_weights(self, i: int, w_in: np.ndarray, v_out: np.ndarray) -> None:
        self.hidden[i] = np.asarray(w_in, dtype=np.float64)
        if i + 1 < len(self.hidden):
            bias = self.hidden[i + 1][:, -1:]
            self.hidden[i + 1] = np.hstack([np.asarray(v_out, dtype=np.float64), bias])
        else:
            self.readout = np.asarray(v_out, dtype=np.float64)

    def activations(self, X: np.ndarray) -> list[np.ndarray]:
        """Representations h_0..h_L, samples as rows."""
        hs = [np.atleast_2d(np.asarray(X, dtype=np.float64))]
        for A in self.hidden:
            hs.append(self.activation.apply(augment(hs[-1]) @ A.T))
        return hs

    def forward(self, X: np.ndarray) -> np.ndarray:
        return self.activations(X)[-1] @ self.readout.T

    def weight_sq_sum(self) -> float:
        total = sum(float(np.sum(A * A)) for A in self.hidden)
        return total + float(np.sum(self.readout ** 2))

    def copy(self) -> "Network":
        return Network(hidden=[A.copy() for A in self.hidden],
                       readout=self.readout.copy(), activation=self.activation)


def init_network(dims: list[int], out_dim: int, seed: int,
                 activation: Activation = RELU) -> Network:
    """dims = [input, width_1, ..., width_L]; weights N(0, 1/fan_in)."""
    s = Stream(seed, "mlp-init")
    hidden = []
    for i in range(len(dims) - 1):
        scale = 1.0 / np.sqrt(dims[i] + 1)
        hidden.append(scale * s.normal_matrix(dims[i + 1], dims[i] + 1))
    readout = (1.0 / np.sqrt(dims[-1])) * s.normal_matrix(out_dim, dims[-1])
    return Network(hidden=hidden, readout=readout, activation=activation)


def make_blob_dataset(seed: int, n: int, d: int, classes: int,
                      spread: float = 2.0, noise: float = 0.6) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian class blobs with one-hot targets; X is n x d, Y is n x classes."""
    s = Stream(seed, "blobs")
    means = spread * s.normal_matrix(classes, d)
    labels = s.integers(n, classes)
    X = means[labels] + noise * s.normal_matrix(n, d)
    Y = np.zeros((n, classes))
    Y[np.arange(n), labels] = 1.0
    return X, Y


def train_network(net: Network, X, Y, lam: float, lr: float = 1e-3, iters: int = 2000,
                  beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                  trace_every: int = 100) -> tuple[Network, list[tuple[int, float]]]:
    """Full-batch Adam on summed squared error plus (lam/2)||theta||^2."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    net = net.copy()
    params = net.hidden + [net.readout]
    ms = [np.zeros_like(p) for p in params]
    vs = [np.zeros_like(p) for p in params]
    act = net.activation
    trace: list[tuple[int, float]] = []

    for it in range(1, iters + 1):
        hs = [X]
        pres = []
        for A in net.hidden:
            pre = augment(hs[-1]) @ A.T
            pres.append(pre)
            hs.append(act.apply(pre))
        out = hs[-1] @ net.readout.T
        resid = out - Y
        fit = float(np.sum(resid * resid))
        obj = fit + 0.5 * lam * net.weight_sq_sum()
        if it == 1 or it % trace_every == 0:
            if not np.isfinite(obj):
                raise RuntimeError(f"training objective non-finite at iteration {it}")
            trace.append((it, obj))

        grads = [None] * len(params)
        grads[-1] = 2.0 * resid.T @ hs[-1] + lam * net.readout
        dh = 2.0 * resid @ net.readout
        for i in range(len(net.hidden) - 1, -1, -1):
            dpre = dh * act.deriv(pres[i])
            grads[i] = dpre.T @ augment(hs[i]) + lam * net.hidden[i]
            if i > 0:
                dh = (dpre @ net.hidden[i])[:, :-1]

        c1 = 1.0 - beta1 ** it
        c2 = 1.0 - beta2 ** it
        for j, g in enumerate(grads):
            ms[j] = beta1 * ms[j] + (1 - beta1) * g
            vs[j] = beta2 * vs[j] + (1 - beta2) * g * g
            params[j] -= (lr / c1) * ms[j] / (np.sqrt(vs[j] / c2) + eps)
        net.hidden = params[:-1]
        net.readout = params[-1]

    final_fit = float(np.sum((net.forward(X) - Y) ** 2))
    final_obj = final_fit + 0.5 * lam * net.weight_sq_sum()
    if trace and trace[-1][0] == iters:
        trace[-1] = (iters, final_obj)
    else:
        trace.append((iters, final_obj))
    return net, trace


def network_to_container(path: str, net: Network) -> None:
    tensors: dict[str, np.ndarray] = {}
    for i in range(net.n_units):
        w_in, v_out = net.unit_weights(i)
        tensors[f"layer{i}.W"] = w_in
        tensors[f"layer{i}.V"] = v_out
    write_container(path, tensors, meta={"activation": net.activation.tag(),
                                         "units": net.n_units})


def network_from_container(container: TensorContainer) -> Network:
    n_units = int(container.meta.get("units", 0))
    if n_units <= 0:
        names = container.names()
        n_units = sum(1 for n in names if n.startswith("layer") and n.endswith(".W"))
    if n_units == 0:
        raise ValueError("container holds no layer records")
    act = activation_from_tag(container.meta.get("activation", "relu"))
    hidden = [np.asarray(container.get(f"layer{i}.W")) for i in range(n_units)]
    readout = np.asarray(container.get(f"layer{n_units - 1}.V"))
    for i in range(n_units - 1):
        v = np.asarray(container.get(f"layer{i}.V"))
        if v.shape != hidden[i + 1][:, :-1].shape or not np.array_equal(v, hidden[i + 1][:, :-1]):
            raise ValueError(f"layer{i}.V disagrees with layer{i + 1}.W; container is inconsistent")
    return Network(hidden=hidden, readout=readout, activation=act)
