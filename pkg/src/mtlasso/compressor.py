"""Layer compression through the multi-task lasso.

For one hidden unit of a trained network, the post-activation features
phi (neurons x samples) and the unit outputs psi (outputs x samples)
determine everything the rest of the network sees. Re-solving for the
output weights under a group penalty zeroes entire columns, i.e. whole
neurons, while approximately reproducing psi; at a weight-decay
stationary point the surviving unit, rebalanced, has a weight cost no
larger than the original layer's. The number of surviving neurons is
governed by the product of the numerical ranks of phi and psi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .caratheodory import reduce
from .linalg import ShapeError, as_matrix, numerical_rank
from .nets import Activation, COALESCE_TOL, RELU, _coalesce_rows
from .rng import Stream
from .solver import MtlProblem, SolverConfig, solve_constrained, solve_regularized, support


class DegenerateLayerError(ValueError):
    """A neuron with zero input weights still feeds the output."""


@dataclass(frozen=True)
class LayerSnapshot:
    """One hidden unit: input weights (bias column last), output weights,
    and the representations entering the unit (columns are samples)."""

    w_in: np.ndarray    # K x (d_in + 1)
    v_out: np.ndarray   # D x K
    inputs: np.ndarray  # d_in x N

    def __post_init__(self):
        w = as_matrix(self.w_in, "w_in")
        v = as_matrix(self.v_out, "v_out")
        x = as_matrix(self.inputs, "inputs")
        if v.shape[1] != w.shape[0]:
            raise ShapeError(f"v_out must have one column per neuron: {v.shape} vs {w.shape}")
        if w.shape[1] != x.shape[0] + 1:
            raise ShapeError(f"w_in expects {w.shape[1] - 1} input features, inputs carry {x.shape[0]}")
        object.__setattr__(self, "w_in", w)
        object.__setattr__(self, "v_out", v)
        object.__setattr__(self, "inputs", x)

    @property
    def width(self) -> int:
        return self.w_in.shape[0]

    def outputs(self, activation: Activation = RELU, inputs: np.ndarray | None = None) -> np.ndarray:
        x = self.inputs if inputs is None else np.asarray(inputs, dtype=np.float64)
        xa = np.vstack([x, np.ones((1, x.shape[1]))])
        return self.v_out @ activation.apply(self.w_in @ xa)

    def rebalanced_weight_sq(self, activation: Activation = RELU) -> float:
        """Sum of squared weights after balancing each neuron, which is
        twice the sum of absorbed output norms."""
        norms = np.linalg.norm(self.w_in, axis=1)
        vnorms = np.linalg.norm(self.v_out, axis=0)
        return 2.0 * float(np.sum(vnorms * norms))


@dataclass(frozen=True)
class CompressionReport:
    width_before: int
    width_after: int
    r_phi: int
    r_psi: int
    bound: int
    output_residual: float
    weight_sq_before: float
    weight_sq_after: float
    lam: float
    iterations: int
    kkt_residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "width_before": self.width_before,
            "width_after": self.width_after,
            "r_phi": self.r_phi,
            "r_psi": self.r_psi,
            "bound": self.bound,
            "output_residual": self.output_residual,
            "weight_sq_before": self.weight_sq_before,
            "weight_sq_after": self.weight_sq_after,
            "lambda": self.lam,
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
        }


def extract_features(layer: LayerSnapshot, activation: Activation = RELU) -> tuple[np.ndarray, np.ndarray]:
    """Post-activation features of the unit-normalized neurons and the
    unit's outputs on the stored representations.

    Input-weight magnitudes are absorbed into the output weights first,
    so phi rows come from unit-norm neurons and psi = v~ phi equals the
    unnormalized forward pass exactly.
    """
    norms = np.linalg.norm(layer.w_in, axis=1)
    vnorms = np.linalg.norm(layer.v_out, axis=0)
    dead = norms == 0.0
    if np.any(dead & (vnorms != 0.0)):
        raise DegenerateLayerError(
            f"neuron(s) {np.nonzero(dead & (vnorms != 0.0))[0].tolist()} have zero input "
            "weights but nonzero output weights")
    safe = np.where(dead, 1.0, norms)
    w_unit = layer.w_in / safe[:, None]
    v_scaled = layer.v_out * norms[None, :]
    xa = np.vstack([layer.inputs, np.ones((1, layer.inputs.shape[1]))])
    phi = activation.apply(w_unit @ xa)
    phi[dead] = 0.0
    psi = v_scaled @ phi
    return phi, psi


@dataclass(frozen=True)
class VerificationReport:
    max_output_discrepancy: float
    weight_sq_original: float
    weight_sq_compressed: float
    weight_sq_ok: bool
    extra: dict = field(default_factory=dict)


def compress_layer(layer: LayerSnapshot, lam: float, rank_threshold: float = 1e-3,
                   config: SolverConfig = SolverConfig(), activation: Activation = RELU,
                   relative_rank: bool = False, exact: bool = False
                   ) -> tuple[LayerSnapshot, CompressionReport]:
    """Re-solve the unit's output weights under the group penalty and prune.

    Neurons whose normalized input weights coincide are the same atom, so
    they are coalesced (output weights summed) before the solve; the
    penalty alone cannot separate exact duplicates. With exact=True the
    residual-free constrained program plus the convex combination
    reduction replaces the penalized solve. Surviving neurons are
    rebalanced so input and output norms match. A psi of zero compresses
    to width zero rather than erroring.
    """
    phi, psi = extract_features(layer, activation)
    r_phi = numerical_rank(phi, rank_threshold, relative=relative_rank).rank
    r_psi = numerical_rank(psi, rank_threshold, relative=relative_rank).rank
    weight_before = layer.rebalanced_weight_sq(activation)
    norms = np.linalg.norm(layer.w_in, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    w_unit = layer.w_in / safe[:, None]
    w_unit, _ = _coalesce_rows(w_unit, (layer.v_out * norms[None, :]), COALESCE_TOL)
    xa = np.vstack([layer.inputs, np.ones((1, layer.inputs.shape[1]))])
    phi = activation.apply(w_unit @ xa)

    if float(np.linalg.norm(psi)) == 0.0:
        new_layer = LayerSnapshot(w_in=np.zeros((0, layer.w_in.shape[1])),
                                  v_out=np.zeros((psi.shape[0], 0)), inputs=layer.inputs)
        report = CompressionReport(width_before=layer.width, width_after=0, r_phi=r_phi,
                                   r_psi=r_psi, bound=r_phi * r_psi, output_residual=0.0,
                                   weight_sq_before=weight_before, weight_sq_after=0.0,
                                   lam=lam, iterations=0, kkt_residual=0.0, converged=True)
        return new_layer, report

    problem = MtlProblem(phi=phi, psi=psi, lam=lam)
    if exact:
        sol = solve_constrained(problem, config)
        v_hat, _trace = reduce(phi, psi, sol.v, tol=config.feas_tol * 10.0,
                               rank_threshold=rank_threshold if relative_rank else 1e-3)
        iterations, kkt, converged = sol.iterations, sol.kkt_residual, sol.converged
    else:
        sol = solve_regularized(problem, config)
        v_hat = sol.v
        iterations, kkt, converged = sol.iterations, sol.kkt_residual, sol.converged

    keep = list(support(v_hat, config.support_eps))
    v_kept = v_hat[:, keep]
    kept_norms = np.linalg.norm(v_kept, axis=0)
    root = np.sqrt(kept_norms)
    w_new = w_unit[keep] * root[:, None]
    v_new = v_kept / root[None, :]

    resid = float(np.linalg.norm(v_hat @ phi - psi) / np.linalg.norm(psi))
    new_layer = LayerSnapshot(w_in=w_new, v_out=v_new, inputs=layer.inputs)
    report = CompressionReport(width_before=layer.width, width_after=len(keep),
                               r_phi=r_phi, r_psi=r_psi, bound=r_phi * r_psi,
                               output_residual=resid, weight_sq_before=weight_before,
                               weight_sq_after=new_layer.rebalanced_weight_sq(activation),
                               lam=lam, iterations=iterations, kkt_residual=kkt,
                               converged=converged)
    return new_layer, report


def make_probe_inputs(layer: LayerSnapshot, seed: int = 0, n_extra: int = 100,
                      sigma_scale: float = 0.1) -> np.ndarray:
    """Training representations plus Gaussian jitter at a tenth of the
    per-feature spread. Output preservation is only guaranteed on the
    training representations themselves; the jittered probes measure
    off-data drift and should be reported, not asserted."""
    x = layer.inputs
    if n_extra <= 0:
        return x.copy()
    stream = Stream(seed, "probes")
    stds = np.std(x, axis=1, keepdims=True)
    pick = stream.integers(n_extra, x.shape[1])
    jitter = sigma_scale * stds * stream.normal_matrix(x.shape[0], n_extra)
    return np.hstack([x, x[:, pick] + jitter])


def verify_compression(original: LayerSnapshot, compressed: LayerSnapshot,
                       probe_inputs: np.ndarray | None = None,
                       activation: Activation = RELU,
                       weight_sq_slack: float = 0.01) -> VerificationReport:
    """Compare unit outputs on probe columns and the rebalanced weight cost.

    Flags the result when the compressed unit's rebalanced squared-weight
    sum exceeds the original's by more than weight_sq_slack (the re-solved
    unit must not cost more than the one it replaces)."""
    if original.inputs.shape[0] != compressed.inputs.shape[0] or \
            original.v_out.shape[0] != compressed.v_out.shape[0]:
        raise ShapeError("original and compressed units must share input and output dims")
    probes = original.inputs if probe_inputs is None else as_matrix(probe_inputs, "probe_inputs")
    out_o = original.outputs(activation, probes)
    out_c = compressed.outputs(activation, probes)
    denom = max(float(np.max(np.linalg.norm(out_o, axis=0))), 1e-300)
    disc = float(np.max(np.linalg.norm(out_c - out_o, axis=0)) / denom)
    sq_o = original.rebalanced_weight_sq(activation)
    sq_c = compressed.rebalanced_weight_sq(activation)
    return VerificationReport(max_output_discrepancy=disc, weight_sq_original=sq_o,
                              weight_sq_compressed=sq_c,
                              weight_sq_ok=sq_c <= sq_o * (1.0 + weight_sq_slack))


def snapshots_from_network(net, X) -> list[LayerSnapshot]:
    """One snapshot per hidden unit with representations recomputed from
    the current weights; X has samples as rows."""
    hs = net.activations(X)
    snaps = []
    for i in range(net.n_units):
        w_in, v_out = net.unit_weights(i)
        snaps.append(LayerSnapshot(w_in=w_in, v_out=v_out, inputs=hs[i].T))
    return snaps


def check_chain(snapshots: list[LayerSnapshot], activation: Activation = RELU,
                tol: float = 1e-6) -> None:
    """Each unit's activations must reproduce the next unit's stored inputs."""
    for i in range(len(snapshots) - 1):
        cur, nxt = snapshots[i], snapshots[i + 1]
        xa = np.vstack([cur.inputs, np.ones((1, cur.inputs.shape[1]))])
        h_next = activation.apply(cur.w_in @ xa)
        err = float(np.max(np.abs(h_next - nxt.inputs))) if h_next.size else 0.0
        if h_next.shape != nxt.inputs.shape or err > tol:
            raise ValueError(f"chain broken between units {i} and {i + 1} "
                             f"(max deviation {err:.3e})")


def compress_network(net, X, lams: list[float], rank_threshold: float = 1e-3,
                     config: SolverConfig = SolverConfig(),
                     units: list[int] | None = None,
                     exact: bool = False):
    """Compress hidden units of a stacked network, last unit first.

    Compressing a unit rewrites its input weights and the weights that
    consume it; nothing upstream changes, so walking from the output end
    toward the input leaves already-compressed units valid, and each
    unit's features are re-extracted from the current network state.
    Returns (compressed network, reports keyed by unit index).
    """
    net = net.copy()
    check_chain(snapshots_from_network(net, X), net.activation)
    if units is None:
        units = list(range(net.n_units))
    if len(lams) == 1:
        lams = list(lams) * len(units)
    if len(lams) != len(units):
        raise ValueError("need one lambda per compressed unit")
    lam_by_unit = dict(zip(units, lams))
    reports: dict[int, CompressionReport] = {}
    for i in sorted(units, reverse=True):
        hs = net.activations(X)
        w_in, v_out = net.unit_weights(i)
        snap = LayerSnapshot(w_in=w_in, v_out=v_out, inputs=hs[i].T)
        new_snap, report = compress_layer(snap, lam_by_unit[i], rank_threshold,
                                          config, net.activation, exact=exact)
        net.set_unit_weights(i, new_snap.w_in, new_snap.v_out)
        reports[i] = report
    return net, reports
