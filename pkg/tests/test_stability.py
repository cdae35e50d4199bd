import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oscgroup.coupling import CouplingGraph, laplacian
from oscgroup.errors import RangeError
from oscgroup.network import NetworkSpec, simulate
from oscgroup.oscillator import OscParams, OscState, input_range, jacobian
from oscgroup.stability import (
    NOT_NECESSARY_NOTE,
    check_sync_condition,
    generalized_bound,
    jacobian_sup,
    metric_gain_bound,
    restricted_lambda_min,
    schoenberg_pd_check,
    sync_subspace_basis,
    transformed_lambda_max,
)

MID = float(np.mean(input_range()))


def random_graph(rng, n, p=0.6, scale=8.0):
    k = np.triu(rng.uniform(0, scale, (n, n)) * (rng.random((n, n)) < p), 1)
    return CouplingGraph.from_dense(k + k.T)


def test_basis_n2_dim1():
    v = sync_subspace_basis(2, 1).V
    np.testing.assert_allclose(np.abs(v), [[1 / math.sqrt(2), 1 / math.sqrt(2)]])
    assert v[0, 0] * v[0, 1] < 0


@given(st.integers(2, 12), st.integers(1, 3))
def test_basis_orthonormal_and_annihilates_sync(n, dim):
    basis = sync_subspace_basis(n, dim)
    np.testing.assert_allclose(basis.V @ basis.V.T, np.eye((n - 1) * dim), atol=1e-12)
    state = np.random.default_rng(n).normal(size=dim)
    np.testing.assert_allclose(basis.V @ np.tile(state, n), 0.0, atol=1e-12)


def test_basis_needs_two():
    with pytest.raises(ValueError):
        sync_subspace_basis(1)


@given(st.integers(2, 10), st.integers(0, 10_000))
def test_restricted_lambda_is_algebraic_connectivity(n, seed):
    g = random_graph(np.random.default_rng(seed), n)
    # oracle: second-smallest Laplacian eigenvalue from a dense solver
    fiedler = np.linalg.eigvalsh(laplacian(g, dense=True))[1]
    assert restricted_lambda_min(g) == pytest.approx(fiedler, abs=1e-9)


def test_empty_graph_fails_condition():
    rep = check_sync_condition(CouplingGraph.empty(2))
    assert rep.lhs == pytest.approx(0.0, abs=1e-12)
    assert rep.rhs >= 3.0
    assert not rep.satisfied and rep.margin < 0
    assert rep.note == NOT_NECESSARY_NOTE


def test_pair_lhs_linear_in_gain():
    lhs = [check_sync_condition(CouplingGraph(2, [0], [1], [k])).lhs for k in (1.0, 2.0, 5.0)]
    np.testing.assert_allclose(lhs, [2.0, 4.0, 10.0], rtol=1e-12)
    assert check_sync_condition(CouplingGraph(2, [0], [1], [10.0])).satisfied


def test_satisfied_iff_positive_margin(rng):
    for _ in range(20):
        rep = check_sync_condition(random_graph(rng, int(rng.integers(2, 8))))
        assert rep.satisfied == (rep.margin > 0)


def test_sup_matches_jacobian_eigen_sweep():
    v = np.linspace(-3, 3, 2001)
    oracle = max(np.linalg.eigvalsh(0.5 * (j + j.T))[-1]
                 for j in (jacobian(OscState(x, 0.0)) for x in v))
    assert jacobian_sup(samples=2001) == pytest.approx(oracle, rel=1e-9)


@given(st.floats(-3, 3), st.floats(-10, 10))
def test_rhs_independent_of_w(v, w):
    a = jacobian(OscState(v, w))
    b = jacobian(OscState(v, 0.0))
    assert np.linalg.eigvalsh(0.5 * (a + a.T))[-1] == np.linalg.eigvalsh(0.5 * (b + b.T))[-1]


def test_range_error_when_traces_leave_range():
    with pytest.raises(RangeError):
        check_sync_condition(CouplingGraph.empty(2), traces=np.array([[0.0, 3.5]]))
    check_sync_condition(CouplingGraph.empty(2), traces=np.array([[0.0, 2.5]]))


def test_simulated_traces_within_default_range():
    g = CouplingGraph(2, [0], [1], [20.0])
    tr = simulate(NetworkSpec.random(g, seed=0, inputs=[MID, MID]), 300.0)
    check_sync_condition(g, traces=tr)


@given(st.integers(0, 10_000))
def test_margin_monotone_in_gain(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    g = random_graph(rng, n)
    i, j = sorted(rng.choice(n, 2, replace=False))
    k = g.adjacency().toarray()
    k[i, j] += rng.uniform(0.1, 3.0)
    k[j, i] = k[i, j]
    bumped = CouplingGraph.from_dense(k)
    assert check_sync_condition(bumped).margin >= check_sync_condition(g).margin - 1e-9


def test_metric_bound_values():
    assert metric_gain_bound() == 15.0
    assert metric_gain_bound(OscParams(alpha=4.0, beta_s=1.0)) == 4.0
    assert generalized_bound(3.0) == 15.0


def test_metric_bound_negative_definite_above():
    v = np.linspace(-3, 3, 1000)
    assert np.all(transformed_lambda_max(v, 1.01 * metric_gain_bound()) < 0)


def test_transformed_matrix_oracle():
    # direct construction of Theta J Theta^-1 - diag(k, 0) at v = 0
    p = OscParams()
    s = math.sqrt(p.c * p.alpha * p.beta_s)
    m = np.array([[3.0 - 15.0, -s], [p.c * p.alpha * p.beta_s / s, -p.c]])
    expected = np.linalg.eigvalsh(0.5 * (m + m.T))[-1]
    assert transformed_lambda_max(0.0, 15.0)[0] == pytest.approx(expected, rel=1e-12)


def test_gain_above_bound_synchronizes_pair(rng):
    g = CouplingGraph(2, [0], [1], [1.05 * metric_gain_bound()])
    for _ in range(3):
        v0, w0 = rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2)
        # |dv/dv| reaches ~5100 at v=3, so the step must be small for RK4
        tr = simulate(NetworkSpec(g, [MID, MID], v0, w0), 100.0, dt=5e-4, sample_dt=0.5, record_w=True)
        assert abs(tr.v[-1, 0] - tr.v[-1, 1]) < 1e-6
        assert abs(tr.w[-1, 0] - tr.w[-1, 1]) < 1e-6


def test_schoenberg_examples(rng):
    assert schoenberg_pd_check([[0.0, 0.0]], 1.0) == (True, 1.0)
    ok, lam = schoenberg_pd_check(rng.uniform(0, 10, (20, 2)), 2.0)
    assert ok and lam > 0
    ok, lam = schoenberg_pd_check([[1.0, 1.0], [1.0, 1.0], [4.0, 0.0]], 2.0)
    assert lam == pytest.approx(0.0, abs=1e-12)
    assert not schoenberg_pd_check([[1.0, 1.0], [1.0, 1.0]], 2.0, tol=1e-12)[0]
