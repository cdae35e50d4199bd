import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oscgroup import fixtures
from oscgroup.coupling import (
    CouplingGraph,
    axial_difference,
    build_cluster_coupling,
    build_contour_coupling,
    build_segmentation_coupling,
    contour_gain,
    gaussian_gain,
    gaussian_matrix,
    laplacian,
    nearest_neighbors,
)
from oscgroup.errors import DegenerateInputError

finite = st.floats(-50, 50, allow_nan=False)


def random_graph(rng, n, p=0.5, scale=5.0):
    k = np.triu(rng.uniform(0, scale, (n, n)) * (rng.random((n, n)) < p), 1)
    return CouplingGraph.from_dense(k + k.T)


# -- gaussian tuning --------------------------------------------------------

def test_gaussian_gain_examples():
    assert gaussian_gain([1.0, 2.0], [1.0, 2.0], 3.0) == 1.0
    assert gaussian_gain([0.0, 0.0], [3.0, 4.0], 5.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert gaussian_gain(0.0, 6.0, 2.0) == pytest.approx(math.exp(-9), rel=1e-15)


def test_gaussian_gain_rejects_nonpositive_beta():
    with pytest.raises(ValueError):
        gaussian_gain(0.0, 1.0, 0.0)


@given(hnp.arrays(float, (6, 2), elements=finite), st.floats(0.5, 20))
def test_gaussian_matrix_matches_pairwise(points, beta):
    k = gaussian_matrix(points, beta)
    for i in range(len(points)):
        for j in range(len(points)):
            assert k[i, j] == pytest.approx(gaussian_gain(points[i], points[j], beta), abs=1e-12)


# -- graph container --------------------------------------------------------

def test_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        CouplingGraph(2, [0], [0], [1.0])
    with pytest.raises(ValueError):
        CouplingGraph(2, [0], [1], [-1.0])
    with pytest.raises(ValueError):
        CouplingGraph(2, [0, 1], [1, 0], [1.0, 1.0])
    with pytest.raises(ValueError):
        CouplingGraph(2, [0], [2], [1.0])


def test_graph_is_immutable():
    g = CouplingGraph(2, [0], [1], [1.0])
    with pytest.raises(AttributeError):
        g.n = 3
    with pytest.raises(ValueError):
        g.gains[0] = 2.0


def test_graph_gain_lookup_is_symmetric(rng):
    g = random_graph(rng, 8)
    for i, j, k in g.edges():
        assert g.gain(i, j) == g.gain(j, i) == k


def test_permuted_graph(rng):
    g = random_graph(rng, 6)
    perm = rng.permutation(6)
    h = g.permuted(perm)
    a, b = g.adjacency().toarray(), h.adjacency().toarray()
    np.testing.assert_array_equal(b[np.ix_(perm, perm)], a)


# -- clustering graph -------------------------------------------------------

def test_cluster_two_points_single_edge():
    g = build_cluster_coupling([[0.0, 0.0], [2.0, 0.0]], 1, 2.0)
    assert g.edges() == [(0, 1, pytest.approx(math.exp(-1), rel=1e-15))]


def test_cluster_union_symmetrization():
    g = build_cluster_coupling([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], 1, 1.0)
    # ties broken by lower index, so 1 lists 0; 2 lists 1; union gives 0-1 and 1-2
    assert [(i, j) for i, j, _ in g.edges()] == [(0, 1), (1, 2)]


def test_nearest_neighbor_ties_go_to_lower_index():
    nbr = nearest_neighbors([[0.0, 0.0], [-1.0, 0.0], [1.0, 0.0]], 1)
    assert nbr[0, 0] == 1


def test_cluster_requires_valid_m():
    with pytest.raises(DegenerateInputError):
        build_cluster_coupling([[0.0, 0.0], [1.0, 1.0]], 2, 1.0)
    with pytest.raises(DegenerateInputError):
        build_cluster_coupling(np.zeros((0, 2)), 1, 1.0)


def test_cluster_coincident_points_gain_one():
    g = build_cluster_coupling([[1.0, 1.0], [1.0, 1.0], [5.0, 5.0]], 1, 1.0)
    assert g.gain(0, 1) == 1.0


def test_cluster_graph_matches_brute_force(rng):
    pts = rng.uniform(0, 20, (40, 2))
    m, beta = 4, 3.0
    g = build_cluster_coupling(pts, m, beta)
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    np.fill_diagonal(d, np.inf)
    expected = {}
    for i in range(40):
        for j in np.argsort(d[i], kind="stable")[:m]:
            a, b = min(i, j), max(i, j)
            expected[(a, b)] = math.exp(-d[a, b] ** 2 / beta**2)
    got = {(i, j): k for i, j, k in g.edges()}
    assert got.keys() == expected.keys()
    for key, k in expected.items():
        assert got[key] == pytest.approx(k, rel=1e-12)


def test_two_blob_cross_gains_negligible():
    pts, truth = fixtures.two_blobs(0)
    g = build_cluster_coupling(pts, 16, 2.0)
    cross = [k for i, j, k in g.edges() if truth[i] != truth[j]]
    d = np.linalg.norm(pts[truth == 0][:, None] - pts[truth == 1][None], axis=2)
    assert math.exp(-d.min() ** 2 / 4.0) < 1e-8
    assert all(k < 1e-8 for k in cross)


# -- contour graph ----------------------------------------------------------

def test_contour_gain_examples():
    v = math.pi / 2
    assert contour_gain(v, v, 1, 0, math.radians(20), math.radians(10)) == pytest.approx(1.0)
    horiz = contour_gain(v, v, 0, 1, math.radians(20), math.radians(10))
    assert horiz == pytest.approx(math.exp(-81.0), rel=1e-9)


def test_axial_difference_wraps():
    assert abs(axial_difference(0.0, math.pi - 0.1)) == pytest.approx(0.1)


def test_contour_window_and_gains():
    theta = np.full((3, 3), math.pi / 2)
    g = build_contour_coupling(theta, w=1)
    # vertically adjacent cells are perfectly aligned
    assert g.gain(1, 4) == pytest.approx(1.0)
    assert g.gain(0, 6) == 0.0  # two rows apart, outside w=1
    g2 = build_contour_coupling(theta, w=2)
    assert g2.gain(0, 6) == pytest.approx(1.0)


@given(hnp.arrays(float, (5, 5), elements=st.floats(0, math.pi, exclude_max=True)),
       hnp.arrays(bool, (5, 5)))
def test_contour_invariant_under_pi_shift(theta, flip):
    a = build_contour_coupling(theta).adjacency().toarray()
    b = build_contour_coupling(theta + math.pi * flip).adjacency().toarray()
    np.testing.assert_allclose(a, b, atol=1e-12)


# -- segmentation graph -----------------------------------------------------

def test_segmentation_constant_image_unit_gains():
    g = build_segmentation_coupling(np.full((6, 6), 77.0), 5.0, w=3)
    assert g.n_edges > 0
    assert np.all(g.gains == 1.0)


def test_segmentation_window_is_strict():
    img = np.zeros((1, 6))
    g = build_segmentation_coupling(img, 1.0, w=3)
    assert {(i, j) for i, j, _ in g.edges()} == {(i, j) for i in range(6) for j in range(i + 1, min(i + 3, 6))}


def test_segmentation_gain_value():
    g = build_segmentation_coupling(np.array([[0.0, 10.0]]), 10.0, w=2)
    assert g.gain(0, 1) == pytest.approx(math.exp(-1))


def test_segmentation_three_level_gains():
    img, truth = fixtures.three_level(sigma=0.0, size=16)
    g = build_segmentation_coupling(img, 10.0, w=5)
    t = truth.ravel()
    same = t[g.rows] == t[g.cols]
    assert np.all(g.gains[same] == 1.0)
    # cross-region gains fall below the dropping floor
    assert not np.any(~same)


# -- laplacian --------------------------------------------------------------

def test_laplacian_examples():
    np.testing.assert_array_equal(laplacian(CouplingGraph(2, [0], [1], [2.0]), dense=True), [[2, -2], [-2, 2]])
    np.testing.assert_array_equal(laplacian(CouplingGraph.empty(3), dense=True), np.zeros((3, 3)))


@given(st.integers(2, 30), st.integers(0, 10_000))
def test_builders_symmetric_gains_in_unit_interval(n, seed):
    rng = np.random.default_rng(seed)
    graphs = [
        build_cluster_coupling(rng.uniform(0, 10, (n, 2)), min(3, n - 1), 2.0),
        build_contour_coupling(rng.uniform(0, math.pi, (4, max(2, n // 4)))),
        build_segmentation_coupling(rng.uniform(0, 255, (3, max(2, n // 3))), 30.0, 3),
    ]
    for g in graphs:
        adj = g.adjacency()
        assert (adj - adj.T).nnz == 0
        assert g.gains.min(initial=0.0) >= 0.0 and g.gains.max(initial=0.0) <= 1.0


@given(st.integers(1, 50), st.integers(0, 10_000))
def test_laplacian_row_sums_and_spectrum(n, seed):
    g = random_graph(np.random.default_rng(seed), n)
    lap = laplacian(g, dense=True)
    assert np.abs(lap.sum(axis=1)).max() < 1e-12
    vals, vecs = np.linalg.eigh(lap)
    assert vals.min() > -1e-10
    # the constant vector is in the kernel
    np.testing.assert_allclose(lap @ np.ones(n), 0.0, atol=1e-12)


def test_full_gaussian_matrix_positive_definite(rng):
    for _ in range(20):
        n = int(rng.integers(1, 31))
        k = gaussian_matrix(rng.uniform(0, 10, (n, 2)), float(rng.uniform(0.5, 3)))
        assert np.allclose(k, k.T)
        assert np.linalg.eigvalsh(k)[0] > 0
