"""Multi-task lasso solvers.

Two problems over V in R^(D x K), given features phi (K x N) and targets
psi (D x N):

* regularized:  (1/(N*D)) ||V phi - psi||_F^2 + lam * sum_k ||v_k||_2,
  solved by accelerated proximal gradient descent with an exact Lipschitz
  step and monotone restarts;
* constrained:  sum_k ||v_k||_2 subject to V phi = psi, solved by ADMM
  with an exact affine projection as the first block and the column-wise
  shrinkage as the second.

Columns v_k of V are selected or zeroed as whole blocks, so the support
of a solution is a set of feature indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import ShapeError, as_matrix, singular_values, row_space_contained


class SolverDivergedError(RuntimeError):
    """Objective became non-finite; indicates a step-size bug."""


class InfeasibleError(ValueError):
    """Constrained problem has no solution for the given data."""


class ConstrainedSolveError(RuntimeError):
    """ADMM failed to reach the requested residuals within max_iters."""

    def __init__(self, message: str, primal_residual: float, dual_residual: float):
        super().__init__(message)
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual


@dataclass(frozen=True)
class MtlProblem:
    phi: np.ndarray  # K x N
    psi: np.ndarray  # D x N
    lam: float = 0.0

    def __post_init__(self):
        phi = as_matrix(self.phi, "phi")
        psi = as_matrix(self.psi, "psi")
        if phi.shape[1] != psi.shape[1]:
            raise ShapeError(f"phi and psi must share columns: {phi.shape} vs {psi.shape}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lam must be finite and nonnegative")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @property
    def K(self) -> int:
        return self.phi.shape[0]

    @property
    def N(self) -> int:
        return self.phi.shape[1]

    @property
    def D(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100_000
    tol: float = 1e-10            # relative objective-change stopping threshold
    accelerate: bool = True       # momentum on the proximal gradient iteration
    support_eps: float = 1e-6     # relative column-norm support threshold
    feas_tol: float = 1e-8        # residual target for the constrained solver
    admm_rho: float = 1.0
    kkt_tol: float = 1e-7         # stationarity confirmation once the objective stalls

    def __post_init__(self):
        for name in ("max_iters", "tol", "support_eps", "feas_tol", "admm_rho", "kkt_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Solution:
    v: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    support: tuple[int, ...]
    converged: bool
    trace: tuple[float, ...] = field(default=(), repr=False)


def block_soft_threshold(v: np.ndarray, tau: float) -> np.ndarray:
    """Shrink v toward zero by tau in Euclidean norm; zero inside the ball.

    This is the proximal map of tau * ||.||_2 and the column-wise update of
    both solvers.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n <= tau:
        return np.zeros_like(v)
    return v * (1.0 - tau / n)


def _shrink_columns(M: np.ndarray, tau) -> np.ndarray:
    """block_soft_threshold applied to every column; works on stacked
    (..., D, K) arrays with tau broadcast over the batch."""
    norms = np.linalg.norm(M, axis=-2, keepdims=True)
    scale = np.maximum(1.0 - tau / np.maximum(norms, 1e-300), 0.0)
    return M * scale


def support(v, eps: float = 1e-6) -> tuple[int, ...]:
    """Columns whose norm exceeds eps times the largest column norm."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    v = as_matrix(v, "v")
    norms = np.linalg.norm(v, axis=0)
    top = float(norms.max()) if norms.size else 0.0
    if top == 0.0:
        return ()
    return tuple(int(k) for k in np.nonzero(norms > eps * top)[0])


def _regularized_objective(V, phi, psi, lam, nd) -> float:
    r = V @ phi - psi
    return float(np.sum(r * r) / nd + lam * np.sum(np.linalg.norm(V, axis=0)))


def solve_regularized(problem: MtlProblem, config: SolverConfig = SolverConfig()) -> Solution:
    """Accelerated proximal gradient on the penalized problem.

    The gradient of the smooth part is (2/(N*D)) (V phi - psi) phi^T and
    the step is 1/L with L = (2/(N*D)) * smax(phi)^2 computed once from an
    SVD, so iteration counts are reproducible. Momentum restarts whenever
    the candidate objective rises, which keeps the recorded objective
    trace nonincreasing. The iteration stops once the relative objective
    change drops below config.tol and the first-order residual confirms
    stationarity at config.kkt_tol (the objective flattens well before the
    iterate settles, so the confirmation is what makes the reported
    residual trustworthy).
    """
    if problem.lam <= 0:
        raise ValueError("regularized solve requires lam > 0")
    phi, psi, lam = problem.phi, problem.psi, problem.lam
    D, K, N = problem.D, problem.K, problem.N
    nd = float(N * D)

    s = singular_values(phi)
    smax = float(s[0]) if s.size else 0.0
    if smax == 0.0:
        # phi = 0: the data term is constant and the penalty forces V = 0
        obj = _regularized_objective(np.zeros((D, K)), phi, psi, lam, nd)
        return Solution(v=np.zeros((D, K)), objective=obj, iterations=0, kkt_residual=0.0,
                        support=(), converged=True, trace=(obj,))
    L = 2.0 * smax * smax / nd
    step = 1.0 / L

    V = np.zeros((D, K))
    Y = V
    t_mom = 1.0
    obj = _regularized_objective(V, phi, psi, lam, nd)
    trace = [obj]
    converged = False
    iterations = 0
    res = np.inf
    next_kkt_check = 0

    for it in range(1, config.max_iters + 1):
        iterations = it
        G = (2.0 / nd) * ((Y @ phi - psi) @ phi.T)
        cand = _shrink_columns(Y - step * G, step * lam)
        cand_obj = _regularized_objective(cand, phi, psi, lam, nd)
        if not np.isfinite(cand_obj):
            raise SolverDivergedError(f"objective became non-finite at iteration {it}")
        if cand_obj > obj:
            # restart momentum and take a plain descent step from V
            t_mom = 1.0
            G = (2.0 / nd) * ((V @ phi - psi) @ phi.T)
            cand = _shrink_columns(V - step * G, step * lam)
            cand_obj = _regularized_objective(cand, phi, psi, lam, nd)
        if config.accelerate:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            Y = cand + ((t_mom - 1.0) / t_next) * (cand - V)
            t_mom = t_next
        else:
            Y = cand
        delta = obj - cand_obj
        move = float(np.max(np.abs(cand - V))) if V.size else 0.0
        V = cand
        obj = min(obj, cand_obj)
        trace.append(obj)
        if abs(delta) <= config.tol * max(1.0, abs(obj)) and it >= next_kkt_check:
            res = kkt_residual(problem, V, mode="regularized",
                               support_eps=config.support_eps)
            # the 1/lam scaling makes the residual unreachable for tiny lam,
            # so an iterate pinned at machine precision also counts
            if res <= config.kkt_tol or move <= 1e-15 * max(1.0, float(np.max(np.abs(V)))):
                converged = True
                break
            next_kkt_check = it + 100

    if not np.isfinite(res) or not converged:
        res = kkt_residual(problem, V, mode="regularized", support_eps=config.support_eps)
        converged = converged or res <= config.kkt_tol
    return Solution(v=V, objective=obj, iterations=iterations, kkt_residual=res,
                    support=support(V, config.support_eps), converged=converged,
                    trace=tuple(trace))


def _admm_constrained_batch(phis: np.ndarray, psi: np.ndarray, config: SolverConfig):
    """ADMM on a stack of constrained problems sharing psi.

    phis has shape (P, K, N); psi (D, N). Returns (V, values, iters, ok)
    where V is (P, D, K), values are the objectives of the exactly
    feasible iterates, and ok flags which problems met the residual
    target. Each problem in the stack follows the identical update
    arithmetic, so membership of a batch never changes its own result
    beyond floating-point reassociation in the underlying BLAS batch.
    """
    P, K, N = phis.shape
    D = psi.shape[0]
    scale = float(np.linalg.norm(psi))
    if scale == 0.0:
        return (np.zeros((P, D, K)), np.zeros(P), 0, np.ones(P, dtype=bool))
    psi_n = psi / scale
    pinv = np.linalg.pinv(phis)               # (P, N, K)
    base = psi_n[None, :, :] @ pinv           # (P, D, K), particular solution
    rho = config.admm_rho
    alpha = 1.7                               # over-relaxation
    V = np.zeros((P, D, K))
    Z = np.zeros((P, D, K))
    U = np.zeros((P, D, K))
    ok = np.zeros(P, dtype=bool)
    tol = config.feas_tol
    iterations = 0
    check_every = 10
    for it in range(1, config.max_iters + 1):
        iterations = it
        W = Z - U
        V = W - (W @ phis) @ pinv + base      # projection onto {V : V phi = psi_n}
        Vr = alpha * V + (1.0 - alpha) * Z
        Z_prev = Z
        Z = _shrink_columns(Vr + U, 1.0 / rho)
        U = U + Vr - Z
        if it % check_every == 0 or it == config.max_iters:
            prim = np.linalg.norm((V - Z).reshape(P, -1), axis=1)
            dual = rho * np.linalg.norm((Z - Z_prev).reshape(P, -1), axis=1)
            ok = (prim <= tol) & (dual <= tol)
            if bool(np.all(ok)):
                break
    values = np.sum(np.linalg.norm(V, axis=1), axis=1) * scale
    return V * scale, values, iterations, ok


def solve_constrained(problem: MtlProblem, config: SolverConfig = SolverConfig(),
                      polish: bool = True) -> Solution:
    """Exactly feasible minimizer of the summed column norms.

    The V block of the ADMM splitting is the orthogonal projection onto
    the affine constraint set, so the returned iterate satisfies
    V phi = psi up to the pseudoinverse's numerical error; the Z block is
    the column-wise shrinkage. After convergence the solve is repeated on
    the identified support at a much tighter residual target, which zeroes
    the off-support columns exactly and sharpens the optimality of the
    survivors (the downstream support reduction needs that precision);
    the polished iterate is kept only when it does not cost more. Raises
    InfeasibleError when the row space of psi is not contained in that of
    phi, and ConstrainedSolveError with the final residuals when the
    residual target is not met in max_iters.
    """
    phi, psi = problem.phi, problem.psi
    if not row_space_contained(psi, phi):
        raise InfeasibleError("row space of psi is not contained in the row space of phi")
    V, values, iterations, ok = _admm_constrained_batch(phi[None, :, :], psi, config)
    V0 = V[0]
    obj = float(values[0])
    scale = max(1.0, float(np.linalg.norm(psi)))
    feas = float(np.linalg.norm(V0 @ phi - psi))
    if not bool(ok[0]):
        prim = feas / scale
        raise ConstrainedSolveError(
            f"ADMM did not converge in {iterations} iterations "
            f"(primal {prim:.3e}, target {config.feas_tol:.1e})",
            primal_residual=prim, dual_residual=float("nan"))
    if feas > config.feas_tol * scale * 10.0:
        raise InfeasibleError(
            f"projected iterate violates the constraint: residual {feas:.3e}")

    sup = support(V0, config.support_eps)
    if polish and 0 < len(sup) < problem.K:
        cols = list(sup)
        tight = SolverConfig(max_iters=config.max_iters, tol=config.tol,
                             accelerate=config.accelerate, support_eps=config.support_eps,
                             feas_tol=min(config.feas_tol, 1e-12), admm_rho=config.admm_rho)
        Vp, vp, it_p, ok_p = _admm_constrained_batch(phi[cols][None, :, :], psi, tight)
        cand = np.zeros_like(V0)
        cand[:, cols] = Vp[0]
        feas_p = float(np.linalg.norm(cand @ phi - psi))
        if bool(ok_p[0]) and feas_p <= config.feas_tol * scale * 10.0 \
                and float(vp[0]) <= obj * (1.0 + 1e-9):
            V0, obj, feas = cand, float(vp[0]), feas_p
            iterations += it_p

    res = kkt_residual(problem, V0, mode="constrained", support_eps=config.support_eps)
    return Solution(v=V0, objective=obj, iterations=iterations,
                    kkt_residual=res, support=support(V0, config.support_eps),
                    converged=True)


def kkt_residual(problem: MtlProblem, v, mode: str, support_eps: float = 1e-6) -> float:
    """First-order optimality violation of v for the chosen problem.

    Regularized mode: with G the smooth gradient, zero columns must have
    ||g_k|| <= lam and active columns must align g_k with -lam v_k/||v_k||;
    the worst violation is reported relative to lam. Constrained mode:
    fits the best rank-one multiplier to the active columns' unit vectors
    by least squares and reports the larger of the dual-feasibility excess
    on zero columns and the alignment error on active columns.
    """
    v = as_matrix(v, "v")
    phi, psi = problem.phi, problem.psi
    D, K, N = problem.D, problem.K, problem.N
    if v.shape != (D, K):
        raise ShapeError(f"v must be {D} x {K}, got {v.shape}")
    active = np.array(support(v, support_eps), dtype=int)
    active_mask = np.zeros(K, dtype=bool)
    active_mask[active] = True

    if mode == "regularized":
        lam = problem.lam
        if lam <= 0:
            raise ValueError("regularized KKT residual requires lam > 0")
        G = (2.0 / (N * D)) * ((v @ phi - psi) @ phi.T)
        worst = 0.0
        gnorms = np.linalg.norm(G, axis=0)
        if np.any(~active_mask):
            worst = max(worst, float(np.max(gnorms[~active_mask]) - lam))
        if active.size:
            unit = v[:, active] / np.linalg.norm(v[:, active], axis=0)
            worst = max(worst, float(np.max(np.linalg.norm(G[:, active] + lam * unit, axis=0))))
        return max(worst, 0.0) / lam

    if mode == "constrained":
        if active.size == 0:
            return 0.0 if float(np.linalg.norm(psi)) == 0.0 else float("inf")
        unit = v[:, active] / np.linalg.norm(v[:, active], axis=0)
        phi_a = phi[active]                       # |A| x N
        # least-squares multiplier M (D x N) with M phi_a^T ~ unit, then its
        # best rank-one approximation
        M, *_ = np.linalg.lstsq(phi_a, unit.T, rcond=None)
        M = M.T                                   # D x N
        Um, sm, Vm = np.linalg.svd(M, full_matrices=False)
        M1 = sm[0] * np.outer(Um[:, 0], Vm[0])
        imgs = M1 @ phi.T                         # D x K
        align = float(np.max(np.linalg.norm(imgs[:, active] - unit, axis=0)))
        viol = 0.0
        if np.any(~active_mask):
            viol = float(np.max(np.linalg.norm(imgs[:, ~active_mask], axis=0)) - 1.0)
        return max(align, viol, 0.0)

    raise ValueError(f"mode must be 'regularized' or 'constrained', got {mode!r}")
