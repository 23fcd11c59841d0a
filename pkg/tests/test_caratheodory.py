import numpy as np
import pytest

from mtlasso.caratheodory import (check_bounds, column_space_check,
                                  general_position_check, reduce)
from mtlasso.rng import Stream
from mtlasso.solver import MtlProblem, solve_constrained
from mtlasso.oracle import InstanceSpec, random_instance


def test_reduce_noop_when_already_within_bound():
    s = Stream(1, "noop")
    phi = s.normal_matrix(6, 4)
    v = np.zeros((2, 6))
    v[:, 1] = [1.0, 2.0]
    v[:, 4] = [0.5, -0.5]
    psi = v @ phi
    out, trace = reduce(phi, psi, v)
    assert np.array_equal(out, v)
    assert trace.eliminations == ()
    assert trace.final_support == 2


def test_reduce_rejects_infeasible_input():
    s = Stream(2, "bad")
    phi = s.normal_matrix(5, 3)
    psi = s.normal_matrix(2, 3)
    with pytest.raises(ValueError, match="not feasible"):
        reduce(phi, psi, np.zeros((2, 5)), tol=1e-10)


def test_reduce_merges_duplicated_rows_single_output():
    # two identical feature rows with the mass split across them collapse
    # into one column at no cost
    s = Stream(3, "dup")
    base = s.normal_matrix(3, 4)
    phi = np.vstack([base[0], base[0], base[1], base[2]])
    v_single = np.array([[2.0, 0.0, 0.0]])  # on the un-duplicated dictionary
    psi = v_single @ base
    v = np.array([[1.0, 1.0, 0.0, 0.0]])    # split across the duplicates
    out, trace = reduce(phi, psi, v, max_support=1)
    assert trace.final_support == 1
    assert trace.objective_after == pytest.approx(trace.objective_before, rel=1e-12)
    assert np.linalg.norm(out @ phi - psi) <= 1e-10


def duplicated_instance(seed: int, D: int = 2, N: int = 3, K0: int = 10, copies: int = 3):
    """Feasible instance whose mass is a duplicate-split of a sparse base
    solution, so the reduction target is reachable by construction."""
    s = Stream(seed, "over")
    base_phi = s.normal_matrix(K0, N)
    bound = min(K0, N) * min(D, N)
    v_base = np.zeros((D, K0))
    for c in s.choice(K0, min(bound, K0)):
        v_base[:, c] = s.normal(D)
    psi = v_base @ base_phi
    rows, vcols = [], []
    for k in range(K0):
        split = s.uniform(copies) + 0.1
        split /= split.sum()
        for frac in split:
            rows.append(base_phi[k])
            vcols.append(frac * v_base[:, k])
    return np.vstack(rows), psi, np.column_stack(vcols)


def test_reduce_duplicated_random_instances():
    for seed in range(20):
        phi, psi, v = duplicated_instance(seed)
        out, trace = reduce(phi, psi, v, tol=1e-8)
        assert trace.final_support <= trace.r_phi * trace.r_psi
        assert trace.objective_after <= trace.objective_before * (1 + 1e-8)
        assert trace.feasibility_residual <= 1e-7 * max(1.0, np.linalg.norm(psi))
        assert len(trace.eliminations) >= trace.initial_support - trace.final_support


def test_reduce_composes_with_constrained_solver():
    for seed in range(10):
        spec = InstanceSpec(D=3, N=6, K=40, rank_phi=4, rank_psi=3, seed=seed)
        phi, psi = random_instance(spec)
        sol = solve_constrained(MtlProblem(phi=phi, psi=psi))
        out, trace = reduce(phi, psi, sol.v, tol=1e-7)
        assert trace.final_support <= trace.r_phi * trace.r_psi
        assert trace.objective_after <= sol.objective * (1 + 1e-8)


def test_check_bounds_pass_and_violations():
    v = np.zeros((3, 20))
    for k in range(10):
        v[:, k] = [1.0, 0.5, 0.2]
    rep = check_bounds(v, r_phi=10, r_psi=10, general_position=True)
    assert rep.within and rep.support_size == 10
    assert (rep.lower, rep.upper) == (10, 100)

    v1 = np.zeros((2, 5))
    v1[:, 0] = [1.0, 1.0]
    rep = check_bounds(v1, r_phi=2, r_psi=1, general_position=True)
    assert not rep.lower_ok and rep.upper_ok and not rep.within

    v2 = np.ones((2, 150))
    rep = check_bounds(v2, r_phi=2, r_psi=10, general_position=True, reduced=True)
    assert not rep.upper_ok

    rep = check_bounds(v2, r_phi=2, r_psi=10, general_position=False, reduced=False)
    assert rep.within  # neither side applies


def test_column_space_check_cases():
    s = Stream(9, "col")
    psi = s.normal_matrix(4, 2) @ s.normal_matrix(2, 6)  # column rank 2 inside R^4
    assert column_space_check(psi, psi)
    # append a direction orthogonal to col(psi)
    q, _ = np.linalg.qr(np.hstack([psi[:, :2], s.normal_matrix(4, 1)]))
    stray = q[:, -1:]
    bad = np.hstack([psi, stray])
    assert not column_space_check(bad, psi)


def test_column_space_check_on_solver_output():
    for seed in range(5):
        spec = InstanceSpec(D=3, N=5, K=25, rank_phi=3, rank_psi=2, seed=seed)
        phi, psi = random_instance(spec)
        sol = solve_constrained(MtlProblem(phi=phi, psi=psi))
        assert column_space_check(sol.v, psi, threshold=1e-6)


def test_general_position_identity_and_repeat():
    assert general_position_check(np.eye(3), 2, mode="exhaustive")
    phi = np.vstack([np.eye(3), np.eye(3)[0]])
    assert not general_position_check(phi, 2, mode="exhaustive")


def test_general_position_sampled_gaussian():
    phi = Stream(10, "gp").normal_matrix(20, 10)
    assert general_position_check(phi, 10, mode="sampled", trials=200, seed=0)


def test_general_position_guard():
    phi = Stream(11, "gp2").normal_matrix(60, 10)
    with pytest.raises(ValueError, match="guard"):
        general_position_check(phi, 30, mode="exhaustive")
