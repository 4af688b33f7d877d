import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SMALL_SHAPES
from ttn_apply.tensor import isometry_error
from ttn_apply.tree import (
    TTNO,
    TTNS,
    TopologyError,
    TreeTopology,
    add,
    alpha,
    applied_norm_sq,
    canonicalize,
    distance,
    expectation,
    from_json,
    identity_ttno,
    inner,
    make_balanced_binary,
    make_chain,
    make_ftps,
    make_structure,
    make_t_tree,
    norm,
    product_state,
    random_ttno,
    random_ttns,
    rerooted,
    to_dense,
    to_dense_op,
    to_json,
)


def test_chain_generator():
    one = make_chain(1, 3)
    assert len(one) == 1 and one.root == 0
    psi = random_ttns(one, 5, np.random.default_rng(0))
    assert psi[0].dims == (1, 3)
    topo = make_chain(50, 3)
    assert topo.preorder() == list(range(50))
    assert all(topo.degree(n) <= 2 for n in topo.nodes)


def test_t_tree_generator():
    small = make_t_tree(1, 2)
    assert len(small) == 4
    assert small.phys_dim[small.root] == 1 and small.degree(small.root) == 3
    topo = make_t_tree(20, 3)
    assert len(topo) == 61
    ends = [n for n in topo.nodes if n != topo.root and topo.is_leaf(n)]
    assert len(ends) == 3
    assert all(topo.degree(n) == 2 for n in topo.nodes if n != topo.root and n not in ends)


@pytest.mark.parametrize("depth", [1, 2, 6])
def test_balanced_binary_generator(depth):
    topo = make_balanced_binary(depth, 3)
    leaves = [n for n in topo.nodes if topo.is_leaf(n)]
    assert len(leaves) == 2**depth
    assert all(len(topo.children[n]) in (0, 2) for n in topo.nodes)
    assert all(topo.phys_dim[n] == (3 if topo.is_leaf(n) else 1) for n in topo.nodes)


@pytest.mark.parametrize("L", [1, 2, 8])
def test_ftps_generator(L):
    topo = make_ftps(L, 3)
    assert len(topo) == L + L * L
    backbone = [n for n in topo.nodes if topo.phys_dim[n] == 1]
    assert len(backbone) == L and topo.root in backbone
    assert len(topo.physical_nodes()) == L * L


def test_topology_validation():
    with pytest.raises(TopologyError):
        TreeTopology(0, {0: [1], 2: [1]}, {0: 1, 1: 1, 2: 1})
    with pytest.raises(TopologyError):
        TreeTopology(0, {0: []}, {0: 1, 1: 2})
    with pytest.raises(TopologyError):
        TreeTopology(5, {}, {0: 1})
    with pytest.raises(TopologyError):
        make_structure("loop", 3, 2)


def test_tree_paths_and_subtrees():
    topo = make_t_tree(2, 2)
    arm0, arm1 = topo.children[topo.root][:2]
    leaf0 = topo.children[arm0][0]
    assert topo.path(leaf0, arm1) == [leaf0, arm0, topo.root, arm1]
    assert set(topo.subtree(arm0)) == {arm0, leaf0}
    assert topo.edge_between(arm0, topo.root) == arm0
    assert sorted(topo.postorder()) == sorted(topo.preorder())


def test_random_networks_deterministic_and_boundary_rules():
    topo = make_t_tree(2, 3)
    a = random_ttns(topo, 4, np.random.default_rng(7))
    b = random_ttns(topo, 4, np.random.default_rng(7))
    assert all(np.array_equal(a[n].data, b[n].data) for n in topo.nodes)
    assert a[topo.root].dim(alpha(topo.root)) == 1
    assert all(a.bond_dim(e) == 4 for e in topo.edges())
    op = random_ttno(topo, 3, np.random.default_rng(7))
    assert all(op.bond_dim(e) == 3 for e in topo.edges())


def test_bond_one_chain_is_product_state():
    topo = make_chain(4, 2)
    psi = random_ttns(topo, 1, np.random.default_rng(3))
    expected = np.prod([psi[n].norm() for n in topo.nodes])
    assert np.linalg.norm(to_dense(psi)) == pytest.approx(expected, rel=1e-12)


def test_dense_of_product_and_identity():
    topo = make_chain(3, 2)
    v = to_dense(product_state(topo))
    assert v[0] == 1 and np.count_nonzero(v) == 1
    np.testing.assert_array_equal(to_dense_op(identity_ttno(topo)), np.eye(8))


def test_dense_matches_loop_oracle():
    topo = make_chain(4, 2)
    psi = random_ttns(topo, 2, np.random.default_rng(11))
    T = [psi[n].data for n in range(4)]
    ref = np.zeros((2,) * 4, dtype=complex)
    for s in itertools.product(range(2), repeat=4):
        for a1, a2, a3 in itertools.product(range(2), repeat=3):
            ref[s] += T[0][0, a1, s[0]] * T[1][a1, a2, s[1]] * T[2][a2, a3, s[2]] * T[3][a3, s[3]]
    np.testing.assert_allclose(to_dense(psi), ref.reshape(-1), atol=1e-12)


def test_dense_guards():
    topo = make_chain(15, 2)
    psi = product_state(topo)
    with pytest.raises(ValueError):
        to_dense(psi)
    with pytest.raises(ValueError):
        to_dense_op(identity_ttno(make_chain(8, 2)))


@pytest.mark.parametrize("family,L", SMALL_SHAPES)
def test_contractions_match_dense(family, L):
    rng = np.random.default_rng(2)
    topo = make_structure(family, L, 2)
    a, b = random_ttns(topo, 2, rng), random_ttns(topo, 3, rng)
    op = random_ttno(topo, 2, rng)
    va, vb, m = to_dense(a), to_dense(b), to_dense_op(op)
    assert inner(a, b) == pytest.approx(np.vdot(va, vb), rel=1e-10)
    assert inner(a, b) == pytest.approx(np.conj(inner(b, a)), rel=1e-12)
    assert norm(a) == pytest.approx(np.linalg.norm(va), rel=1e-12)
    assert expectation(a, op, b) == pytest.approx(np.vdot(va, m @ vb), rel=1e-10)
    assert applied_norm_sq(op, b) == pytest.approx(np.linalg.norm(m @ vb) ** 2, rel=1e-10)
    assert distance(a, b) == pytest.approx(np.linalg.norm(va - vb), rel=1e-10)
    np.testing.assert_allclose(to_dense(add(a, b, 2.0, -1j)), 2.0 * va - 1j * vb, atol=1e-12)


def test_inner_is_real_nonnegative_and_orthogonal():
    topo = make_chain(3, 2)
    x = random_ttns(topo, 2, np.random.default_rng(4))
    assert inner(x, x).real >= 0 and abs(inner(x, x).imag) < 1e-12
    zero = product_state(topo)
    one = product_state(topo, {1: [0.0, 1.0]})
    assert inner(zero, one) == 0


def test_inner_six_site_chain():
    topo = make_chain(6, 2)
    rng = np.random.default_rng(9)
    a, b = random_ttns(topo, 3, rng), random_ttns(topo, 3, rng)
    assert inner(a, b) == pytest.approx(np.vdot(to_dense(a), to_dense(b)), rel=1e-10)


def test_distance_of_equal_states_is_tiny():
    topo = make_chain(6, 2)
    a = random_ttns(topo, 3, np.random.default_rng(0))
    assert distance(a, a) < 1e-13 * norm(a)


@pytest.mark.parametrize("family,L", SMALL_SHAPES)
def test_canonicalize_preserves_state_and_isometries(family, L):
    topo = make_structure(family, L, 2)
    psi = random_ttns(topo, 3, np.random.default_rng(5))
    for center in (topo.root, topo.postorder()[0]):
        c = canonicalize(psi, center)
        np.testing.assert_allclose(to_dense(c), to_dense(psi), atol=1e-12 * norm(psi))
        for node in topo.nodes:
            if node == center:
                continue
            towards = topo.path(node, center)[1]
            assert isometry_error(c[node], alpha(topo.edge_between(node, towards))) < 1e-10


@pytest.mark.parametrize("family,L", SMALL_SHAPES)
def test_reroot_preserves_dense_state(family, L):
    topo = make_structure(family, L, 2)
    psi = random_ttns(topo, 2, np.random.default_rng(8))
    base = to_dense(psi)
    order = [n for n in topo.preorder()]
    for new_root in topo.nodes:
        moved = rerooted(psi, new_root)
        assert moved.topology.root == new_root
        dims = [topo.phys_dim[n] for n in moved.topology.preorder()]
        v = to_dense(moved).reshape(dims)
        perm = [moved.topology.preorder().index(n) for n in order]
        np.testing.assert_allclose(v.transpose(perm).reshape(-1), base, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(SMALL_SHAPES), st.integers(0, 2**31), st.booleans())
def test_json_round_trip(shape, seed, as_op):
    family, L = shape
    topo = make_structure(family, L, 2)
    rng = np.random.default_rng(seed)
    net = random_ttno(topo, 2, rng) if as_op else random_ttns(topo, 2, rng)
    doc = json.loads(json.dumps(to_json(net)))
    back = from_json(doc)
    assert isinstance(back, TTNO if as_op else TTNS)
    assert back.topology == topo
    assert all(np.array_equal(back[n].data, net[n].data) for n in topo.nodes)


def test_json_rejects_unknown_version():
    doc = to_json(product_state(make_chain(2, 2)))
    doc["format_version"] = 99
    with pytest.raises(ValueError):
        from_json(doc)


def test_networks_check_leg_extents():
    topo = make_chain(2, 2)
    psi = random_ttns(topo, 2, np.random.default_rng(0))
    bad = dict(psi.tensors)
    bad[1] = random_ttns(topo, 3, np.random.default_rng(0))[1]
    with pytest.raises((TopologyError, ValueError)):
        TTNS(topo, bad)
