import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import loop_contract
from ttn_apply.tensor import (
    CHI,
    EntryBudgetExceeded,
    LegId,
    Tensor,
    TensorError,
    TruncationConfig,
    contract,
    contract_shared,
    entry_budget,
    fuse,
    isometry_error,
    qr,
    random_tensor,
    split,
    svd_trunc,
)


def L(i, kind=CHI):
    return LegId(kind, "t", i)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_tensor_rejects_duplicate_legs_and_rank_mismatch():
    with pytest.raises(TensorError):
        Tensor(np.zeros((2, 2)), [L(0), L(0)])
    with pytest.raises(TensorError):
        Tensor(np.zeros((2, 2)), [L(0)])


def test_contract_identity_with_vector():
    v = Tensor([1.0, 2.0j], [L(1)])
    eye = Tensor(np.eye(2), [L(0), L(1)])
    out = contract(eye, v, [(L(1), L(1))])
    assert out.legs == (L(0),)
    np.testing.assert_array_equal(out.data, v.data)


def test_contract_matrix_product_matches_triple_loop(rng):
    a, b = crandn(rng, 2, 3), crandn(rng, 3, 4)
    out = contract(Tensor(a, [L(0), L(1)]), Tensor(b, [L(2), L(3)]), [(L(1), L(2))])
    ref = np.zeros((2, 4), dtype=complex)
    for i in range(2):
        for k in range(4):
            for j in range(3):
                ref[i, k] += a[i, j] * b[j, k]
    np.testing.assert_allclose(out.data, ref, atol=1e-13)
    assert out.legs == (L(0), L(3))


def test_full_self_contraction_is_squared_norm(rng):
    t = Tensor(crandn(rng, 2, 3, 2), [L(0), L(1), L(2)])
    out = contract(t, t.conj(), [(leg, leg) for leg in t.legs])
    assert out.data.shape == ()
    assert abs(out.data.imag) < 1e-12
    assert out.data.real == pytest.approx(t.norm() ** 2, rel=1e-12)


def test_contract_errors():
    a = Tensor(np.zeros((2, 3)), [L(0), L(1)])
    b = Tensor(np.zeros((4,)), [L(2)])
    with pytest.raises(TensorError, match="extent mismatch"):
        contract(a, b, [(L(1), L(2))])
    with pytest.raises(TensorError, match="unknown leg"):
        contract(a, b, [(L(5), L(2))])


@st.composite
def contraction_case(draw):
    n_a = draw(st.integers(1, 3))
    n_b = draw(st.integers(1, 3))
    n_pair = draw(st.integers(0, min(n_a, n_b)))
    dims_a = draw(st.lists(st.integers(1, 3), min_size=n_a, max_size=n_a))
    dims_b = draw(st.lists(st.integers(1, 3), min_size=n_b, max_size=n_b))
    axes_a = draw(st.permutations(range(n_a)))[:n_pair]
    axes_b = draw(st.permutations(range(n_b)))[:n_pair]
    for i, j in zip(axes_a, axes_b):
        dims_b[j] = dims_a[i]
    seed = draw(st.integers(0, 2**31))
    return dims_a, dims_b, list(axes_a), list(axes_b), seed


@settings(max_examples=60, deadline=None)
@given(contraction_case())
def test_contract_matches_loop_oracle(case):
    dims_a, dims_b, axes_a, axes_b, seed = case
    rng = np.random.default_rng(seed)
    a, b = crandn(rng, *dims_a), crandn(rng, *dims_b)
    ta = Tensor(a, [LegId(CHI, "a", i) for i in range(a.ndim)])
    tb = Tensor(b, [LegId(CHI, "b", i) for i in range(b.ndim)])
    pairs = [(ta.legs[i], tb.legs[j]) for i, j in zip(axes_a, axes_b)]
    out = contract(ta, tb, pairs)
    np.testing.assert_allclose(out.data, loop_contract(a, b, axes_a, axes_b), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_contract_is_bilinear(seed):
    rng = np.random.default_rng(seed)
    legs_a, legs_b = [L(0), L(1), L(2)], [L(2), L(3)]
    a1, a2 = Tensor(crandn(rng, 2, 3, 4), legs_a), Tensor(crandn(rng, 2, 3, 4), legs_a)
    b = Tensor(crandn(rng, 4, 2), legs_b)
    lhs = contract_shared(a1 + a2, b)
    rhs = contract_shared(a1, b) + contract_shared(a2, b)
    np.testing.assert_allclose(lhs.data, rhs.data, rtol=1e-12, atol=1e-12)


def test_fuse_single_leg_renames(rng):
    t = Tensor(crandn(rng, 2, 3), [L(0), L(1)])
    f = fuse(t, [L(1)], L(9))
    assert f.legs == (L(0), L(9))
    np.testing.assert_array_equal(f.data, t.data)


def test_fuse_index_map(rng):
    t = Tensor(crandn(rng, 4, 5, 3), [L(0), L(1), L(2)])  # (chi=4, x=5, sigma'=3)
    f = fuse(t, [L(0), L(2)], L(9))
    assert f.legs == (L(9), L(1)) and f.dim(L(9)) == 12
    for c in range(4):
        for s in range(3):
            np.testing.assert_array_equal(f.data[c * 3 + s], t.data[c, :, s])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=2, max_size=5), st.data())
def test_fuse_split_round_trip(dims, data):
    rng = np.random.default_rng(len(dims))
    legs = [L(i) for i in range(len(dims))]
    t = Tensor(crandn(rng, *dims), legs)
    group = data.draw(st.permutations(legs))[: data.draw(st.integers(1, len(dims)))]
    f = fuse(t, group, L(99))
    back = split(f, L(99), [(leg, t.dim(leg)) for leg in group]).transpose(legs)
    np.testing.assert_array_equal(back.data, t.data)


def test_split_extent_mismatch():
    t = Tensor(np.zeros(6), [L(0)])
    with pytest.raises(TensorError):
        split(t, L(0), [(L(1), 4), (L(2), 2)])
    single = split(t, L(0), [(L(1), 6)])
    assert single.legs == (L(1),)


def test_svd_rank_one():
    u, v = np.array([1.0, 2.0, 0.5]), np.array([0.3, -1.0j])
    t = Tensor(np.outer(u, v), [L(0), L(1)])
    U, S, V, dw = svd_trunc(t, [L(0)], TruncationConfig(1))
    assert dw == pytest.approx(0.0, abs=1e-24)
    rec = contract(Tensor(U.data * S, U.legs), V, [(U.legs[-1], V.legs[0])])
    np.testing.assert_allclose(rec.data, t.data, atol=1e-12)


def test_svd_diagonal():
    t = Tensor(np.diag([3.0, 2.0, 1.0]), [L(0), L(1)])
    _, S, _, dw = svd_trunc(t, [L(0)], TruncationConfig(2))
    np.testing.assert_allclose(S, [3.0, 2.0])
    assert dw == pytest.approx(1.0)


def test_svd_eckart_young(rng):
    m = crandn(rng, 6, 5)
    t = Tensor(m, [L(0), L(1)])
    U, S, V, dw = svd_trunc(t, [L(0)], TruncationConfig(3))
    s_ref = np.linalg.svd(m, compute_uv=False)
    rec = (U.data * S) @ V.data
    assert np.linalg.norm(m - rec) ** 2 == pytest.approx(np.sum(s_ref[3:] ** 2), rel=1e-10)
    assert dw == pytest.approx(np.sum(s_ref[3:] ** 2), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=2, max_size=6), st.integers(1, 6), st.integers(0, 2**31))
def test_svd_residual_equals_discarded_weight(dims, keep, seed):
    rng = np.random.default_rng(seed)
    legs = [L(i) for i in range(len(dims))]
    t = Tensor(crandn(rng, *dims), legs)
    rows = legs[: max(1, len(legs) // 2)]
    U, S, V, dw = svd_trunc(t, rows, TruncationConfig(keep), bond=L(50))
    assert len(S) <= keep and np.all(np.diff(S) <= 1e-12) and np.all(S >= 0)
    assert isometry_error(U, L(50)) < 1e-10
    rec = contract(Tensor(U.data * S, U.legs), V, [(L(50), L(50))]).transpose(legs)
    err2 = np.linalg.norm(rec.data - t.data) ** 2
    assert err2 == pytest.approx(dw, rel=1e-10, abs=1e-12 * t.norm() ** 2)


def test_svd_row_legs_must_be_proper_subset():
    t = Tensor(np.zeros((2, 2)), [L(0), L(1)])
    with pytest.raises(TensorError):
        svd_trunc(t, [], TruncationConfig(1))
    with pytest.raises(TensorError):
        svd_trunc(t, [L(0), L(1)], TruncationConfig(1))


def test_truncation_tolerance_takes_minimum():
    cfg = TruncationConfig(3, tol=0.25)
    assert cfg.keep(np.array([4.0, 2.0, 0.9, 0.5])) == 2
    assert TruncationConfig(1, tol=0.25).keep(np.array([4.0, 2.0])) == 1
    with pytest.raises(ValueError):
        TruncationConfig(0)
    with pytest.raises(ValueError):
        TruncationConfig(2, tol=1.0)


def _rq(Q, R, r_leg):
    return contract(R, Q, [(R.legs[1], Q.legs[0])])


def test_qr_random_reconstruction(rng):
    t = Tensor(crandn(rng, 4, 3, 2), [L(0), L(1), L(2)])
    Q, R = qr(t, L(0))
    assert isometry_error(Q, Q.legs[0]) < 1e-12
    rec = _rq(Q, R, L(0)).transpose(t.legs)
    assert np.linalg.norm(rec.data - t.data) < 1e-12 * t.norm()
    assert np.all(np.diagonal(R.data).real >= 0) and np.allclose(np.diagonal(R.data).imag, 0)


def test_qr_identity_is_trivial():
    Q, R = qr(Tensor(np.eye(3), [L(0), L(1)]), L(0))
    np.testing.assert_allclose(Q.data, np.eye(3), atol=1e-14)
    np.testing.assert_allclose(R.data, np.eye(3), atol=1e-14)


def test_qr_isometric_input_gives_unitary_r(rng):
    q, _ = np.linalg.qr(crandn(rng, 6, 3))
    t = Tensor(q.T, [L(0), L(1)])  # isometric over leg 1
    Q, R = qr(t, L(0))
    np.testing.assert_allclose(R.data.conj().T @ R.data, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(_rq(Q, R, L(0)).transpose(t.legs).data, t.data, atol=1e-12)


def test_random_tensor_range_and_determinism():
    a = random_tensor((3, 4), np.random.default_rng(5))
    b = random_tensor((3, 4), np.random.default_rng(5))
    np.testing.assert_array_equal(a.data, b.data)
    big = random_tensor((10**5,), np.random.default_rng(6)).data
    for part in (big.real, big.imag):
        assert part.min() >= -0.5 and part.max() < 1.0
    assert big.real.mean() == pytest.approx(0.25, abs=0.01)


def test_entry_budget_blocks_large_contractions():
    a = Tensor(np.ones((20, 20)), [L(0), L(1)])
    b = Tensor(np.ones((20, 20)), [L(2), L(3)])
    with entry_budget(1000):
        with pytest.raises(EntryBudgetExceeded):
            contract(a, b, [])
        assert contract(a, b, [(L(1), L(2))]).size == 400
    assert contract(a, b, []).size == 160000
