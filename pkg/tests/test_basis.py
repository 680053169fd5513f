import numpy as np
import pytest

from conftest import random_connected_graph, two_node_edge
from unifilter.basis import (
    angle_law_deviation,
    basis_spectrum,
    export_basis,
    heterophily_basis,
    homophily_basis,
    orthonormal_basis,
    orthonormality_deviation,
    unibasis,
    update_factor,
)
from unifilter.graph import propagation_operator
from unifilter.rng import stream
from unifilter.spectral import sample_regular_graph, signal_frequency


def test_homophily_basis_zero_hops_is_normalized_input(rng):
    g = random_connected_graph(20, 0.3, seed=0)
    op = propagation_operator(g)
    X = rng.standard_normal((20, 3))
    b = homophily_basis(op, X, 0)
    np.testing.assert_allclose(b.matrices[0], X / np.linalg.norm(X, axis=0), atol=1e-15)


def test_homophily_basis_two_node_hops():
    op = propagation_operator(two_node_edge())
    b = homophily_basis(op, np.array([1.0, 0.0]), 2)
    np.testing.assert_allclose(b.matrices[:, :, 0], [[1, 0], [0, 1], [1, 0]], atol=1e-15)


def test_homophily_basis_raw_keeps_scale():
    op = propagation_operator(two_node_edge(), "self-loops")
    b = homophily_basis(op, np.array([2.0, 0.0]), 1, normalize=False)
    np.testing.assert_allclose(b.matrices[0][:, 0], [2.0, 0.0])
    np.testing.assert_allclose(b.matrices[1][:, 0], [1.0, 1.0])


def test_homophily_hop_cosines_climb_toward_one():
    g = random_connected_graph(100, 0.08, seed=12)
    op = propagation_operator(g)
    x = stream(12, "sig").standard_normal(100)
    b = homophily_basis(op, x, 101)
    M = b.matrices[:, :, 0]
    cos = np.einsum("kn,kn->k", M[:-1], M[1:])
    # hops 50..100: cosine non-decreasing (floating slack) and angle near 0
    seg = cos[50:101]
    assert np.all(np.diff(seg) >= -1e-12)
    assert seg[-1] > 1 - 1e-6


def test_update_factor_first_step_closed_form():
    # at k=1 the running sum is a single unit vector, so the factor is tan(theta)
    for h in (0.2, 0.5, 0.8):
        theta = 0.5 * np.pi * (1 - h)
        t, clipped = update_factor(np.array([1.0]), 1, np.cos(theta))
        assert not clipped.any()
        assert t[0] == pytest.approx(np.tan(theta), rel=1e-12)
    t, _ = update_factor(np.array([1.0]), 1, np.cos(np.pi / 4))
    assert t[0] == pytest.approx(1.0, rel=1e-12)


def test_update_factor_clamps_negative_radicand():
    t, clipped = update_factor(np.array([0.0]), 2, 0.9)
    assert clipped.tolist() == [True]
    assert t[0] == 0.0


def test_heterophily_pairwise_angles_match_target():
    g = random_connected_graph(50, 0.15, seed=3)
    op = propagation_operator(g)
    x = stream(3, "sig").standard_normal((50, 2))
    b = heterophily_basis(op, x, 10, 0.3)
    off, diag = angle_law_deviation(b)
    gram = np.einsum("knd,jnd->kjd", b.matrices, b.matrices)
    assert np.allclose(gram[~np.eye(11, dtype=bool)], np.cos(0.35 * np.pi), atol=1e-6)
    assert off < 1e-6
    assert diag < 1e-12


def test_heterophily_h_one_collapses_to_one_direction():
    g = random_connected_graph(30, 0.2, seed=5)
    op = propagation_operator(g)
    x = stream(5, "sig").standard_normal(30)
    b = heterophily_basis(op, x, 8, 1.0)
    off, _ = angle_law_deviation(b)
    assert off < 1e-6  # all pairwise dots equal cos(0) = 1


def test_heterophily_h_zero_yields_orthogonal_vectors():
    g = random_connected_graph(30, 0.2, seed=6)
    op = propagation_operator(g)
    x = stream(6, "sig").standard_normal(30)
    b = heterophily_basis(op, x, 8, 0.0)
    off, diag = angle_law_deviation(b)
    assert off < 1e-6 and diag < 1e-12
    np.testing.assert_allclose(b.matrices[0][:, 0], x / np.linalg.norm(x), atol=1e-15)


def test_new_direction_is_orthogonal_to_previous_outputs():
    g = random_connected_graph(40, 0.2, seed=8)
    op = propagation_operator(g)
    x = stream(8, "sig").standard_normal((40, 2))
    u = heterophily_basis(op, x, 10, 0.4)
    v = orthonormal_basis(op, x, 10)
    worst = 0.0
    for k in range(10):
        for j in range(k + 1):
            dots = np.einsum("nd,nd->d", v.matrices[k + 1], u.matrices[j])
            worst = max(worst, float(np.abs(dots).max()))
    assert worst < 1e-6


def test_orthonormal_basis_gram_identity():
    g = random_connected_graph(60, 0.12, seed=9)
    op = propagation_operator(g)
    x = stream(9, "sig").standard_normal((60, 3))
    plain = orthonormal_basis(op, x, 16)
    assert orthonormality_deviation(plain) < 1e-6
    tight = orthonormal_basis(op, x, 16, reortho=True)
    assert orthonormality_deviation(tight) < 1e-10


def test_krylov_exhaustion_freezes_column():
    # the sqrt-degree direction is a fixed point of P, so its Krylov space
    # has dimension 1 and the recurrence dies at the first hop
    g = sample_regular_graph(20, 4, stream(0, "reg"))
    op = propagation_operator(g)
    x = np.ones((20, 1))
    with pytest.warns(UserWarning, match="exhaust"):
        b = heterophily_basis(op, x, 4, 0.3)
    assert b.degenerate_columns == frozenset({0})
    for k in range(1, 5):
        np.testing.assert_allclose(b.matrices[k], b.matrices[0])


def test_zero_column_flagged_and_emitted_as_zeros():
    g = random_connected_graph(15, 0.3, seed=10)
    op = propagation_operator(g)
    X = stream(10, "sig").standard_normal((15, 3))
    X[:, 1] = 0.0
    b = heterophily_basis(op, X, 5, 0.4)
    assert 1 in b.degenerate_columns
    assert np.all(b.matrices[:, :, 1] == 0.0)
    off, diag = angle_law_deviation(b)  # ignores the degenerate column
    assert off < 1e-6 and diag < 1e-12


def test_unibasis_endpoint_identities():
    g = random_connected_graph(25, 0.2, seed=11)
    op = propagation_operator(g)
    X = stream(11, "sig").standard_normal((25, 2))
    hom = homophily_basis(op, X, 6)
    het = heterophily_basis(op, X, 6, 0.3)
    assert np.array_equal(unibasis(op, X, 6, 0.3, 1.0).matrices, hom.matrices)
    assert np.array_equal(unibasis(op, X, 6, 0.3, 0.0).matrices, het.matrices)
    blend = unibasis(op, X, 6, 0.3, 0.4)
    np.testing.assert_allclose(
        blend.matrices, 0.4 * hom.matrices + 0.6 * het.matrices, atol=1e-15)


def test_unibasis_hop_zero_is_normalized_signal_for_any_tau():
    g = random_connected_graph(25, 0.2, seed=13)
    op = propagation_operator(g)
    x = stream(13, "sig").standard_normal((25, 1))
    b = unibasis(op, x, 0, 0.7, 0.5)
    np.testing.assert_allclose(b.matrices[0], x / np.linalg.norm(x), atol=1e-14)


def test_unibasis_rejects_bad_tau():
    g = random_connected_graph(10, 0.4, seed=14)
    op = propagation_operator(g)
    with pytest.raises(ValueError, match="tau"):
        unibasis(op, np.ones((10, 1)), 2, 0.5, 1.5)


def test_basis_spectrum_long_run_homophily_frequency_vanishes():
    g = random_connected_graph(60, 0.15, seed=15)
    op = propagation_operator(g)
    x = stream(15, "sig").standard_normal((60, 1))
    b = homophily_basis(op, x, 100)
    spectrum = basis_spectrum(g, b)
    assert spectrum[100] < 0.01


def test_basis_spectrum_single_column_equals_signal_frequency():
    g = random_connected_graph(30, 0.2, seed=16)
    op = propagation_operator(g)
    x = stream(16, "sig").standard_normal((30, 1))
    b = heterophily_basis(op, x, 5, 0.4)
    spectrum = basis_spectrum(g, b)
    for k in range(6):
        assert spectrum[k] == pytest.approx(
            signal_frequency(g, b.matrices[k][:, 0]), abs=1e-12)


def test_basis_spectrum_heterophily_h_zero_in_bounds():
    g = random_connected_graph(30, 0.2, seed=17)
    op = propagation_operator(g)
    x = stream(17, "sig").standard_normal((30, 1))
    b = heterophily_basis(op, x, 8, 0.0)
    spectrum = basis_spectrum(g, b)
    assert all(0.0 <= s <= 1.0 for s in spectrum)
    assert spectrum[0] == pytest.approx(signal_frequency(g, x), abs=1e-12)


def test_basis_spectrum_rejects_all_degenerate():
    g = random_connected_graph(12, 0.3, seed=18)
    op = propagation_operator(g)
    b = heterophily_basis(op, np.zeros((12, 1)), 3, 0.5)
    with pytest.raises(ValueError, match="degenerate"):
        basis_spectrum(g, b)


def test_angle_law_over_parameter_grid():
    # broad grid: sizes, hop counts, homophily levels, several seeds
    for n in (20, 50, 200):
        for hops in (4, 10, 16):
            for h in (0.1, 0.5, 0.9):
                seed = n + hops + int(10 * h)
                g = random_connected_graph(n, min(0.3, 8.0 / n + 0.05), seed=seed)
                op = propagation_operator(g)
                x = stream(seed, "grid-sig").standard_normal((n, 1))
                b = heterophily_basis(op, x, hops, h)
                off, diag = angle_law_deviation(b)
                assert off < 1e-6, (n, hops, h)
                assert diag < 1e-12, (n, hops, h)
                v = orthonormal_basis(op, x, hops)
                assert orthonormality_deviation(v) < 1e-6, (n, hops, h)


def test_export_basis_writes_matrices_and_meta(tmp_path):
    g = random_connected_graph(10, 0.4, seed=19)
    op = propagation_operator(g)
    x = stream(19, "sig").standard_normal((10, 2))
    b = heterophily_basis(op, x, 3, 0.25)
    export_basis(b, tmp_path)
    import json

    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["kind"] == "heterophily"
    assert meta["K"] == 3
    assert meta["theta"] == pytest.approx(0.375 * np.pi)
    hop0 = np.loadtxt(tmp_path / "hop_0.csv", delimiter=",")
    np.testing.assert_allclose(hop0, b.matrices[0], atol=1e-15)
