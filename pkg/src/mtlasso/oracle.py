"""Ground truth by enumeration, plus randomized support-size experiments.

The exhaustive search solves the constrained problem restricted to every
one of the 2^K support patterns of a small instance, which certifies the
optimal objective and the smallest support that attains it. The
histogram experiments draw seeded random instances and record the
support sizes produced either by the solver-plus-reduction pipeline or
by the exhaustive search.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .caratheodory import reduce
from .linalg import numerical_rank, row_space_contained, singular_values
from .rng import Stream, derive_key
from .solver import MtlProblem, SolverConfig, _admm_constrained_batch, solve_constrained


class ExperimentError(RuntimeError):
    """Too many per-trial failures to trust the aggregate."""


@dataclass(frozen=True)
class InstanceSpec:
    D: int
    N: int
    K: int
    rank_phi: int
    rank_psi: int
    seed: int

    def __post_init__(self):
        if min(self.D, self.N, self.K) <= 0:
            raise ValueError("dimensions must be positive")
        if not (1 <= self.rank_phi <= min(self.K, self.N)):
            raise ValueError(f"rank_phi must lie in [1, {min(self.K, self.N)}]")
        if not (1 <= self.rank_psi <= min(self.D, self.N)):
            raise ValueError(f"rank_psi must lie in [1, {min(self.D, self.N)}]")


@dataclass(frozen=True)
class OracleResult:
    optimal_objective: float
    min_support_size: int
    optimal_supports: tuple[tuple[int, ...], ...]
    evaluated_patterns: int      # feasible patterns actually solved
    feasible_patterns: int
    failed_patterns: tuple[tuple[int, ...], ...]


def random_instance(spec: InstanceSpec, max_retries: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Draw a feasible (phi, psi) pair with prescribed factor ranks.

    phi is a product of independent standard Gaussian factors of inner
    dimension rank_phi; psi is built the same way and then its rows are
    projected onto the row space of phi so the constrained problem is
    feasible by construction. Identical specs reproduce identical
    matrices bit for bit.
    """
    s_phi = Stream(spec.seed, "phi")
    B = s_phi.normal_matrix(spec.K, spec.rank_phi)
    C = s_phi.normal_matrix(spec.rank_phi, spec.N)
    phi = B @ C

    # orthonormal basis of the row space at a permissive cut
    sv = singular_values(phi)
    cut = 1e-10 * float(sv[0]) if sv[0] > 0 else 0.0
    r_used = int(np.sum(sv > cut))
    _, _, vt = np.linalg.svd(phi, full_matrices=False)
    basis = vt[:r_used]
    expected = min(spec.rank_psi, r_used)

    for attempt in range(max_retries):
        s_psi = Stream(spec.seed, "psi", attempt) if attempt else Stream(spec.seed, "psi")
        Bp = s_psi.normal_matrix(spec.D, spec.rank_psi)
        Cp = s_psi.normal_matrix(spec.rank_psi, spec.N)
        psi = (Bp @ Cp) @ (basis.T @ basis)
        if numerical_rank(psi, 1e-10, relative=True).rank == expected:
            break
    else:
        raise RuntimeError(f"psi rank collapsed in {max_retries} redraws for {spec}")

    if not row_space_contained(psi, phi):
        raise RuntimeError("projection failed to land psi inside the row space of phi")
    return phi, psi


def _pattern_feasible(phi_s: np.ndarray, psi: np.ndarray, threshold: float = 1e-10) -> bool:
    if phi_s.shape[0] == 0:
        return bool(np.linalg.norm(psi) == 0.0)
    s_stack = singular_values(np.vstack([phi_s, psi]))
    cut = threshold * float(s_stack[0]) if s_stack.size and s_stack[0] > 0 else 0.0
    r_stack = int(np.sum(s_stack > cut))
    r_phi = int(np.sum(singular_values(phi_s) > cut))
    return r_stack == r_phi


def exhaustive_min_support(phi, psi, k_max_guard: int = 14, tol: float = 1e-5,
                           config: SolverConfig = SolverConfig()) -> OracleResult:
    """Solve the constrained problem on every support pattern.

    Patterns are enumerated in ascending cardinality with no early exit;
    infeasible patterns (row space test) are skipped. Patterns of equal
    size are solved as one ADMM batch; a pattern whose solve misses the
    residual target is excluded and reported in failed_patterns. A support
    is optimal when its value is within tol (relative) of the best value.
    """
    phi = np.asarray(phi, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    K = phi.shape[0]
    if K > k_max_guard:
        raise ValueError(f"K = {K} exceeds the exhaustive guard {k_max_guard}")
    scale = max(1.0, float(np.linalg.norm(psi)))

    values: dict[tuple[int, ...], float] = {}
    failed: list[tuple[int, ...]] = []
    feasible_count = 0

    if np.linalg.norm(psi) == 0.0:
        # the zero solution is optimal on every pattern
        return OracleResult(optimal_objective=0.0, min_support_size=0,
                            optimal_supports=((),), evaluated_patterns=1,
                            feasible_patterns=2 ** K, failed_patterns=())

    for size in range(0, K + 1):
        pats = [p for p in combinations(range(K), size)
                if _pattern_feasible(phi[list(p)], psi)]
        if not pats:
            continue
        feasible_count += len(pats)
        phis = np.stack([phi[list(p)] for p in pats])
        V, vals, _iters, ok = _admm_constrained_batch(phis, psi, config)
        resid = np.linalg.norm(V @ phis - psi[None, :, :], axis=(1, 2))
        for i, p in enumerate(pats):
            if ok[i] and resid[i] <= 10.0 * config.feas_tol * scale:
                values[p] = float(vals[i])
            else:
                failed.append(p)

    if not values:
        raise ValueError("no feasible support pattern; the instance is infeasible")

    best = min(values.values())
    optimal = tuple(sorted((p for p, val in values.items() if val <= best * (1.0 + tol)),
                           key=lambda p: (len(p), p)))
    min_size = min(len(p) for p in optimal)
    return OracleResult(optimal_objective=best, min_support_size=min_size,
                        optimal_supports=optimal, evaluated_patterns=len(values),
                        feasible_patterns=feasible_count,
                        failed_patterns=tuple(failed))


@dataclass(frozen=True)
class HistogramResult:
    counts: tuple[tuple[int, int], ...]   # (support size, frequency), ascending
    lower: int
    upper: int
    trials: int
    failures: int
    support_sizes: tuple[int, ...]

    def rows(self) -> list[list[int]]:
        return [[size, count] for size, count in self.counts]


def _run_trial(spec: InstanceSpec, t: int, mode: str, config: SolverConfig,
               k_max_guard: int) -> int:
    sub = replace(spec, seed=derive_key(spec.seed, "trial", t))
    phi, psi = random_instance(sub)
    if mode == "solver":
        sol = solve_constrained(MtlProblem(phi=phi, psi=psi), config)
        _reduced, trace = reduce(phi, psi, sol.v, tol=config.feas_tol * 10.0)
        return trace.final_support
    res = exhaustive_min_support(phi, psi, k_max_guard=k_max_guard, config=config)
    return res.min_support_size


def histogram_experiment(spec: InstanceSpec, trials: int, mode: str,
                         config: SolverConfig = SolverConfig(),
                         k_max_guard: int = 14,
                         max_failure_rate: float = 0.05,
                         threads: int = 1) -> HistogramResult:
    """Distribution of solution support sizes over seeded random instances.

    mode "solver" records the support of the constrained solve after the
    convex-combination reduction; mode "exhaustive" records the smallest
    optimal support from full enumeration. Trial t uses the sub-seed
    derived from (spec.seed, "trial", t) and owns its whole computation,
    so trials are independent of execution order (and of threads) and the
    full histogram is reproducible.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if mode not in ("solver", "exhaustive"):
        raise ValueError(f"mode must be 'solver' or 'exhaustive', got {mode!r}")
    if mode == "exhaustive" and spec.K > k_max_guard:
        raise ValueError(f"K = {spec.K} exceeds the exhaustive guard {k_max_guard}")

    outcomes: list[int | None] = [None] * trials
    failures = 0
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {t: pool.submit(_run_trial, spec, t, mode, config, k_max_guard)
                       for t in range(trials)}
        for t in range(trials):
            try:
                outcomes[t] = futures[t].result()
            except (ValueError, RuntimeError):
                failures += 1
    else:
        for t in range(trials):
            try:
                outcomes[t] = _run_trial(spec, t, mode, config, k_max_guard)
            except (ValueError, RuntimeError):
                failures += 1
    sizes = [s for s in outcomes if s is not None]
    if failures > max_failure_rate * trials:
        raise ExperimentError(f"{failures}/{trials} trials failed")

    uniq, counts = np.unique(np.array(sizes, dtype=int), return_counts=True) if sizes else (np.array([], dtype=int), np.array([], dtype=int))
    r_phi_eff = min(spec.rank_phi, spec.K, spec.N)
    r_psi_nom = min(spec.rank_psi, spec.D, spec.N)
    return HistogramResult(counts=tuple((int(u), int(c)) for u, c in zip(uniq, counts)),
                           lower=r_phi_eff, upper=r_phi_eff * r_psi_nom,
                           trials=trials, failures=failures,
                           support_sizes=tuple(sizes))
