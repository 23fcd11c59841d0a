import numpy as np
import pytest

from mtlasso.compressor import (DegenerateLayerError, LayerSnapshot, check_chain,
                                compress_layer, compress_network, extract_features,
                                make_probe_inputs, snapshots_from_network,
                                verify_compression)
from mtlasso.network import Network, init_network, make_blob_dataset, train_network
from mtlasso.rng import Stream
from mtlasso.solver import SolverConfig


def test_extract_features_identity_layer():
    inputs = np.abs(Stream(1).normal_matrix(3, 7))  # nonnegative
    w = np.hstack([np.eye(3), np.zeros((3, 1))])    # unit basis rows, zero bias
    v = np.eye(3)
    layer = LayerSnapshot(w_in=w, v_out=v, inputs=inputs)
    phi, psi = extract_features(layer)
    assert np.allclose(phi, inputs)
    assert np.allclose(psi, inputs)


def test_extract_features_dead_inputs():
    inputs = -np.abs(Stream(2).normal_matrix(2, 5))
    w = np.hstack([np.eye(2), np.zeros((2, 1))])
    layer = LayerSnapshot(w_in=w, v_out=np.ones((1, 2)), inputs=inputs)
    phi, psi = extract_features(layer)
    assert np.array_equal(phi, np.zeros((2, 5)))
    assert np.array_equal(psi, np.zeros((1, 5)))


def test_extract_features_matches_forward_pass():
    s = Stream(3, "fwd")
    layer = LayerSnapshot(w_in=s.normal_matrix(6, 4), v_out=s.normal_matrix(2, 6),
                          inputs=s.normal_matrix(3, 9))
    _, psi = extract_features(layer)
    direct = layer.outputs()
    assert np.max(np.abs(psi - direct)) <= 1e-12 * max(1.0, np.max(np.abs(direct)))


def test_extract_features_zero_weight_with_output_errors():
    w = np.zeros((1, 3))
    layer = LayerSnapshot(w_in=w, v_out=np.ones((1, 1)), inputs=np.ones((2, 4)))
    with pytest.raises(DegenerateLayerError):
        extract_features(layer)


def duplicated_layer(seed: int, K0: int = 6, copies: int = 2):
    s = Stream(seed, "dup-layer")
    w = s.normal_matrix(K0, 4)
    v = s.normal_matrix(2, K0)
    inputs = s.normal_matrix(3, 40)
    w_dup = np.repeat(w, copies, axis=0)
    v_dup = np.repeat(v / copies, copies, axis=1)
    return (LayerSnapshot(w_in=w, v_out=v, inputs=inputs),
            LayerSnapshot(w_in=w_dup, v_out=v_dup, inputs=inputs))


def test_compress_merges_duplicated_neurons():
    base, dup = duplicated_layer(4)
    new, report = compress_layer(dup, lam=1e-9)
    assert report.width_before == 12
    assert report.width_after <= 6
    assert report.output_residual <= 1e-6
    ver = verify_compression(dup, new)
    assert ver.max_output_discrepancy <= 1e-6
    assert ver.weight_sq_compressed <= ver.weight_sq_original * (1 + 1e-9)


def test_compress_exact_route_zero_residual():
    _, dup = duplicated_layer(5)
    new, report = compress_layer(dup, lam=0.0, exact=True)
    assert report.output_residual <= 1e-10
    assert report.width_after <= report.bound
    ver = verify_compression(dup, new)
    assert ver.max_output_discrepancy <= 1e-9
    assert ver.weight_sq_ok


def test_compress_zero_psi_collapses_layer():
    s = Stream(6, "zero")
    layer = LayerSnapshot(w_in=s.normal_matrix(4, 3), v_out=np.zeros((2, 4)),
                          inputs=s.normal_matrix(2, 5))
    new, report = compress_layer(layer, lam=1e-3)
    assert report.width_after == 0
    assert new.width == 0


def test_overregularized_compression_is_flagged():
    base, _ = duplicated_layer(7)
    new, report = compress_layer(base, lam=1e3)
    ver = verify_compression(base, new)
    assert report.output_residual > 0.1
    assert ver.max_output_discrepancy > 0.1


def test_width_bound_reached_for_lowrank_layer():
    # inputs confined to a plane force low feature rank; a bisected lambda
    # brings the width down to the rank product
    s = Stream(8, "lowrank")
    inputs = s.normal_matrix(5, 2) @ s.normal_matrix(2, 60)
    layer = LayerSnapshot(w_in=s.normal_matrix(20, 6), v_out=s.normal_matrix(2, 20),
                          inputs=inputs)
    phi, psi = extract_features(layer)
    from mtlasso.linalg import numerical_rank
    r_phi = numerical_rank(phi, 1e-3, relative=True).rank
    r_psi = numerical_rank(psi, 1e-3, relative=True).rank
    new, report = compress_layer(layer, lam=0.0, exact=True,
                                 rank_threshold=1e-3, relative_rank=True)
    assert report.width_after <= r_phi * r_psi
    assert verify_compression(layer, new).max_output_discrepancy <= 1e-8


def test_compress_idempotent():
    # each penalized pass shrinks surviving norms by about lam * N * D / 2,
    # so idempotence at 1e-8 needs lam well below that budget
    _, dup = duplicated_layer(9)
    once, r1 = compress_layer(dup, lam=1e-12)
    twice, r2 = compress_layer(once, lam=1e-12)
    assert r2.width_after == r1.width_after
    denom = max(1.0, float(np.max(np.abs(once.w_in))))
    assert np.max(np.abs(twice.w_in - once.w_in)) <= 1e-8 * denom
    assert np.max(np.abs(twice.v_out - once.v_out)) <= 1e-8 * denom


def test_compress_idempotent_exact_route():
    _, dup = duplicated_layer(9)
    once, r1 = compress_layer(dup, lam=0.0, exact=True)
    twice, r2 = compress_layer(once, lam=0.0, exact=True)
    assert r2.width_after == r1.width_after
    denom = max(1.0, float(np.max(np.abs(once.w_in))))
    assert np.max(np.abs(twice.w_in - once.w_in)) <= 1e-8 * denom


def small_mlp(seed: int = 13):
    X, Y = make_blob_dataset(seed, 120, 6, 4, spread=2.0, noise=0.5)
    net = init_network([6, 24, 24], 4, seed)
    net, _ = train_network(net, X, Y, lam=2e-3, lr=2e-3, iters=1500)
    return net, X, Y


def test_chain_check_and_snapshots():
    net, X, _ = small_mlp()
    snaps = snapshots_from_network(net, X)
    check_chain(snaps)
    broken = [snaps[0],
              LayerSnapshot(w_in=snaps[1].w_in, v_out=snaps[1].v_out,
                            inputs=snaps[1].inputs + 1.0)]
    with pytest.raises(ValueError, match="chain"):
        check_chain(broken)


def test_compress_network_single_unit_matches_compress_layer():
    net, X, _ = small_mlp()
    snaps = snapshots_from_network(net, X)
    direct, direct_rep = compress_layer(snaps[1], lam=1e-8)
    whole, reports = compress_network(net, X, [1e-8], units=[1])
    assert reports[1].width_after == direct_rep.width_after
    w_in, v_out = whole.unit_weights(1)
    assert np.allclose(w_in, direct.w_in)
    assert np.allclose(v_out, direct.v_out)


def test_compress_network_two_units_preserves_outputs():
    net, X, Y = small_mlp()
    out0 = net.forward(X)
    compressed, reports = compress_network(net, X, [1e-9], units=[0, 1], exact=True)
    out1 = compressed.forward(X)
    rel = np.linalg.norm(out1 - out0) / max(1.0, np.linalg.norm(out0))
    assert rel <= 1e-4
    assert set(reports) == {0, 1}
    assert compressed.weight_sq_sum() <= net.weight_sq_sum() * (1 + 1e-6)


def test_probe_inputs_shape_and_determinism():
    _, dup = duplicated_layer(10)
    p1 = make_probe_inputs(dup, seed=3, n_extra=17)
    p2 = make_probe_inputs(dup, seed=3, n_extra=17)
    assert p1.shape == (3, 40 + 17)
    assert np.array_equal(p1, p2)
