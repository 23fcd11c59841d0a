"""Constructive support reduction for feasible multi-task lasso solutions.

Any feasible V for psi = V phi writes psi as a convex combination of the
rank-one matrices m_k = (gamma / ||v_k||) v_k phi_k^T with weights
alpha_k = ||v_k|| / gamma, where gamma is the objective value. Those
matrices live in the product of the column space of psi and the row
space of phi, a subspace of dimension at most r_phi * r_psi, so convex
weights on more than that many of them are redundant: a null vector of
the stacked system [vec(m_k); 1] moves mass between columns without
changing the represented matrix, the weight total, or the objective,
and a maximal such move zeroes at least one column. Iterating lands a
solution with support at most r_phi * r_psi. The all-ones row enforces
that the weight total is preserved; for inputs that minimize the
objective the redundancy persists down to exactly r_phi * r_psi columns
rather than one more.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, numerical_rank, singular_values, ShapeError
from .rng import Stream

#: a singular value this far below the largest counts as an exact null direction
NULL_TOL_STRICT = 1e-10
#: ratios up to this are tried as approximate null directions, kept only if
#: the feasibility and objective budgets survive the step
NULL_TOL_LOOSE = 1e-5


class ReductionError(RuntimeError):
    """Support exceeds the bound but no usable null direction exists."""

    def __init__(self, message: str, smallest_ratio: float):
        super().__init__(message)
        self.smallest_ratio = smallest_ratio


@dataclass(frozen=True)
class ReductionTrace:
    initial_support: int
    final_support: int
    eliminations: tuple[tuple[int, float], ...]  # (removed column, null-vector inf-norm)
    objective_before: float
    objective_after: float
    feasibility_residual: float
    r_phi: int
    r_psi: int


def reduce(phi, psi, v, tol: float = 1e-8, rank_threshold: float = 1e-3,
           max_support: int | None = None) -> tuple[np.ndarray, ReductionTrace]:
    """Shrink the support of a feasible v to at most r_phi * r_psi columns.

    Preserves the objective within 1e-8 relative and the feasibility
    residual within 10x the input tolerance. Ranks are taken at
    rank_threshold relative to the top singular value, since reduction
    inputs carry arbitrary scale. max_support overrides the stopping
    bound (used by tests).
    """
    phi = as_matrix(phi, "phi")
    psi = as_matrix(psi, "psi")
    v = as_matrix(v, "v")
    K, N = phi.shape
    D = psi.shape[0]
    if v.shape != (D, K):
        raise ShapeError(f"v must be {D} x {K}, got {v.shape}")
    scale = max(1.0, float(np.linalg.norm(psi)))
    feas_in = float(np.linalg.norm(v @ phi - psi))
    if feas_in > tol * scale:
        raise ValueError(f"input is not feasible: residual {feas_in:.3e} > {tol * scale:.3e}")

    r_phi = numerical_rank(phi, rank_threshold, relative=True).rank
    r_psi = numerical_rank(psi, rank_threshold, relative=True).rank
    bound = r_phi * r_psi if max_support is None else max_support

    col_norms = np.linalg.norm(v, axis=0)
    sup = np.nonzero(col_norms > 0.0)[0]
    gamma = float(np.sum(col_norms))
    initial_support = int(sup.size)
    feas_budget = 10.0 * tol * scale
    obj_budget = 1e-8 * max(gamma, 1.0)

    if gamma == 0.0 or sup.size <= bound:
        trace = ReductionTrace(initial_support=initial_support, final_support=initial_support,
                               eliminations=(), objective_before=gamma, objective_after=gamma,
                               feasibility_residual=feas_in, r_phi=r_phi, r_psi=r_psi)
        return v.copy(), trace
    if bound == 0:
        raise ValueError("psi has rank 0 at the rank threshold but v carries mass; "
                         "a convex reweighting cannot empty the support")

    # directions m_k = v_k phi_k^T / ||v_k||, convex weights alpha_k = ||v_k|| / gamma;
    # stacked system columns [vec(gamma * m_k); 1] are fixed, only the active set shrinks
    units = v[:, sup] / col_norms[sup]
    alpha = col_norms[sup] / gamma
    all_cols = np.empty((D * N + 1, sup.size))
    for a, k in enumerate(sup):
        all_cols[:-1, a] = gamma * np.outer(units[:, a], phi[k]).ravel()
        all_cols[-1, a] = 1.0
    active = list(range(sup.size))
    eliminations: list[tuple[int, float]] = []

    while len(active) > bound:
        cols = all_cols[:, active]
        _, s, vt = np.linalg.svd(cols, full_matrices=False)
        ratio = float(s[-1] / s[0]) if s[0] > 0 else 0.0
        if ratio > NULL_TOL_LOOSE:
            raise ReductionError(
                f"no null direction at support {len(active)} > bound {bound} "
                f"(smallest singular ratio {ratio:.3e}); ranks may be misestimated",
                smallest_ratio=ratio)
        c = vt[-1]
        if np.max(c) <= 0.0:
            c = -c
        sub = alpha[active]
        steps = np.where(c > 0.0, sub / np.where(c > 0.0, c, 1.0), np.inf)
        t = float(np.min(steps))
        new_sub = np.maximum(sub - t * c, 0.0)
        new_sub[steps <= t * (1.0 + 1e-12)] = 0.0

        if ratio > NULL_TOL_STRICT:
            # approximate null direction: accept only if the contract survives
            trial_alpha = alpha.copy()
            trial_alpha[active] = new_sub
            v_trial = _assemble(v.shape, sup, trial_alpha, units, gamma)
            feas_trial = float(np.linalg.norm(v_trial @ phi - psi))
            obj_trial = float(np.sum(np.linalg.norm(v_trial, axis=0)))
            if feas_trial > feas_budget or obj_trial > gamma + obj_budget:
                raise ReductionError(
                    f"approximate null direction (ratio {ratio:.3e}) violates the "
                    f"reduction budget at support {len(active)}", smallest_ratio=ratio)

        c_inf = float(np.max(np.abs(c)))
        alpha[active] = new_sub
        survivors = []
        for pos, a in enumerate(active):
            if new_sub[pos] > 0.0:
                survivors.append(a)
            else:
                eliminations.append((int(sup[a]), c_inf))
        if len(survivors) == len(active):
            raise ReductionError("null step failed to zero a coefficient",
                                 smallest_ratio=ratio)
        active = survivors

    v_out = _assemble(v.shape, sup, alpha, units, gamma)
    feas_out = float(np.linalg.norm(v_out @ phi - psi))
    obj_out = float(np.sum(np.linalg.norm(v_out, axis=0)))
    if feas_out > feas_budget or obj_out > gamma + obj_budget:
        raise ReductionError(
            f"reduction drifted outside its budget (residual {feas_out:.3e}, "
            f"objective {obj_out:.12e} vs {gamma:.12e})", smallest_ratio=0.0)
    trace = ReductionTrace(initial_support=initial_support, final_support=len(active),
                           eliminations=tuple(eliminations), objective_before=gamma,
                           objective_after=obj_out, feasibility_residual=feas_out,
                           r_phi=r_phi, r_psi=r_psi)
    return v_out, trace


def _assemble(shape, sup, alpha, units, gamma) -> np.ndarray:
    out = np.zeros(shape)
    for a, k in enumerate(sup):
        if alpha[a] > 0.0:
            out[:, k] = alpha[a] * gamma * units[:, a]
    return out


@dataclass(frozen=True)
class BoundsReport:
    support_size: int
    lower: int | None     # enforced only under general position
    upper: int
    lower_ok: bool
    upper_ok: bool

    @property
    def within(self) -> bool:
        return self.lower_ok and self.upper_ok


def check_bounds(v, r_phi: int, r_psi: int, general_position: bool,
                 reduced: bool = True, eps: float = 1e-6) -> BoundsReport:
    """Compare a solution's support size against [r_phi, r_phi * r_psi].

    The lower bound applies to any solution but only under general
    position of the feature rows; the upper bound is existential, so it is
    only meaningful for reduced solutions (reduced=False skips it).
    """
    if r_phi <= 0 or r_psi <= 0:
        raise ValueError("ranks must be positive")
    from .solver import support as _support

    size = len(_support(v, eps))
    lower = r_phi if general_position else None
    lower_ok = (size >= r_phi) if general_position else True
    upper = r_phi * r_psi
    upper_ok = (size <= upper) if reduced else True
    return BoundsReport(support_size=size, lower=lower, upper=upper,
                        lower_ok=lower_ok, upper_ok=upper_ok)


def column_space_check(v, psi, threshold: float = 1e-10, relative: bool = True) -> bool:
    """True iff v and psi have the same column space (equal ranks and the
    rank of their concatenation matches)."""
    v = as_matrix(v, "v")
    psi = as_matrix(psi, "psi")
    if v.shape[0] != psi.shape[0]:
        raise ShapeError(f"row counts differ: v {v.shape}, psi {psi.shape}")
    both = np.hstack([v, psi])
    s_both = singular_values(both)
    cut = threshold * float(s_both[0]) if (relative and s_both.size and s_both[0] > 0) else threshold
    r_both = int(np.sum(s_both > cut))
    r_v = int(np.sum(singular_values(v) > cut))
    r_psi = int(np.sum(singular_values(psi) > cut))
    return r_both == r_v == r_psi


def general_position_check(phi, r: int, mode: str = "sampled", trials: int = 200,
                           seed: int = 0, threshold: float = 1e-10,
                           exhaustive_guard: int = 1_000_000) -> bool:
    """Check that every (or a sample of) r-subset of phi's rows is full rank.

    Full rank is tested at a permissive relative singular-value threshold:
    the question is subspace degeneracy, not noise level. Exhaustive mode
    refuses when the number of subsets exceeds exhaustive_guard.
    """
    phi = as_matrix(phi, "phi")
    K = phi.shape[0]
    if r > K:
        raise ValueError(f"cannot take {r}-subsets of {K} rows")
    if r <= 0:
        raise ValueError("r must be positive")

    def full_rank(rows: np.ndarray) -> bool:
        s = singular_values(phi[rows])
        if s.size < r:
            return False
        return bool(s[r - 1] > threshold * s[0])

    if mode == "exhaustive":
        from itertools import combinations
        from math import comb

        if comb(K, r) > exhaustive_guard:
            raise ValueError(f"C({K},{r}) exceeds the exhaustive guard {exhaustive_guard}")
        return all(full_rank(np.array(c)) for c in combinations(range(K), r))
    if mode == "sampled":
        stream = Stream(seed, "general-position")
        for _ in range(trials):
            rows = stream.choice(K, r)
            if not full_rank(np.sort(rows)):
                return False
        return True
    raise ValueError(f"mode must be 'exhaustive' or 'sampled', got {mode!r}")
