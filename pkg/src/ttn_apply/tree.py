"""Rooted trees and the tree tensor network states and operators living on them.

Conventions
-----------
* Nodes are hashable ids (the generators use integers); every node has an
  ordered tuple of children fixed at construction.
* A virtual leg is named after the child end of its edge:
  ``LegId(ALPHA, c)`` for the state edge above ``c``, ``LegId(BETA, c)`` for
  the operator edge. The root carries a parent leg of extent 1 named after
  itself, so every tensor has the same layout.
* State tensors are stored as ``(alpha(node), alpha(c) for c in children,
  phys(node))``; operator tensors as ``(beta(node), beta(c)..., phys_out(node),
  phys(node))``.
* Dense vectors and matrices order their sites depth-first from the root,
  children in stored order (:meth:`TreeTopology.preorder`).
"""

from __future__ import annotations

import math
from collections.abc import Hashable, Mapping, Sequence

import numpy as np

from .tensor import (
    ALPHA,
    BETA,
    CHI,
    PHYS,
    PHYS_OUT,
    LegId,
    Tensor,
    TensorError,
    contract,
    contract_shared,
    qr,
    random_tensor,
)

FORMAT_VERSION = 1
FAMILIES = ("chain", "t-tree", "balanced-binary", "ftps", "custom")

MAX_DENSE_STATE = 2**14
MAX_DENSE_OP_SIDE = 2**7


class TopologyError(ValueError):
    """Raised for malformed trees and mismatched networks."""


class TreeTopology:
    """A rooted tree with ordered children and a physical dimension per node."""

    def __init__(
        self,
        root: Hashable,
        children: Mapping[Hashable, Sequence[Hashable]],
        phys_dim: Mapping[Hashable, int],
        family: str = "custom",
    ):
        self.root = root
        self.children = {n: tuple(children.get(n, ())) for n in phys_dim}
        self.phys_dim = {n: int(d) for n, d in phys_dim.items()}
        self.family = family
        self.parent: dict = {}
        for node, kids in self.children.items():
            for c in kids:
                if c in self.parent:
                    raise TopologyError(f"node {c!r} has two parents")
                if c not in self.phys_dim:
                    raise TopologyError(f"child {c!r} of {node!r} has no physical dimension")
                self.parent[c] = node
        if root not in self.phys_dim:
            raise TopologyError(f"root {root!r} is not a node")
        if root in self.parent:
            raise TopologyError("the root cannot have a parent")
        if any(d < 1 for d in self.phys_dim.values()):
            raise TopologyError("physical dimensions must be positive")
        order = self.preorder()
        if len(order) != len(self.phys_dim):
            raise TopologyError("tree is not connected to the root")

    @classmethod
    def from_parents(cls, root, parents: Mapping, phys_dim: Mapping, family="custom"):
        """Build from a child -> parent map; children keep insertion order."""
        children: dict = {n: [] for n in phys_dim}
        for c, p in parents.items():
            if p is not None:
                children[p].append(c)
        return cls(root, children, phys_dim, family)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TreeTopology)
            and self.root == other.root
            and self.children == other.children
            and self.phys_dim == other.phys_dim
        )

    def __hash__(self):
        return hash((self.root, tuple(sorted(map(repr, self.children.items())))))

    def __len__(self) -> int:
        return len(self.phys_dim)

    def __repr__(self) -> str:
        return f"TreeTopology(family={self.family!r}, nodes={len(self)}, root={self.root!r})"

    @property
    def nodes(self) -> list:
        return self.preorder()

    def is_leaf(self, node) -> bool:
        return not self.children[node]

    def preorder(self) -> list:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(reversed(self.children[node]))
        return out

    def postorder(self) -> list:
        """Children before parents, children visited in stored order."""
        out = []

        def visit(node):
            for c in self.children[node]:
                visit(c)
            out.append(node)

        visit(self.root)
        return out

    def edges(self) -> list:
        """Non-root nodes in preorder; each names the edge to its parent."""
        return [n for n in self.preorder() if n != self.root]

    def neighbours(self, node) -> list:
        out = list(self.children[node])
        if node != self.root:
            out.insert(0, self.parent[node])
        return out

    def degree(self, node) -> int:
        return len(self.neighbours(node))

    def subtree(self, node) -> list:
        out, stack = [], [node]
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(reversed(self.children[n]))
        return out

    def depth(self, node) -> int:
        k = 0
        while node != self.root:
            node = self.parent[node]
            k += 1
        return k

    def path(self, a, b) -> list:
        """Nodes on the unique path from ``a`` to ``b``, inclusive."""
        up_a = [a]
        while up_a[-1] != self.root:
            up_a.append(self.parent[up_a[-1]])
        seen = {n: i for i, n in enumerate(up_a)}
        up_b = [b]
        while up_b[-1] not in seen:
            up_b.append(self.parent[up_b[-1]])
        return up_a[: seen[up_b[-1]]] + list(reversed(up_b))

    def edge_between(self, a, b):
        """Name (child end) of the edge joining neighbours ``a`` and ``b``."""
        if self.parent.get(a) == b:
            return a
        if self.parent.get(b) == a:
            return b
        raise TopologyError(f"{a!r} and {b!r} are not neighbours")

    def total_phys_dim(self) -> int:
        return math.prod(self.phys_dim.values())

    def physical_nodes(self) -> list:
        return [n for n in self.preorder() if self.phys_dim[n] > 1]

    def rerooted(self, new_root) -> TreeTopology:
        """Same tree rooted at ``new_root``; neighbour order starts at the old parent side."""
        children: dict = {}

        def visit(node, came_from):
            nbrs = [n for n in self.neighbours(node) if n != came_from]
            children[node] = nbrs
            for n in nbrs:
                visit(n, node)

        visit(new_root, None)
        return TreeTopology(new_root, children, self.phys_dim, self.family)


# ---------------------------------------------------------------------------
# structure generators


def make_chain(L: int, d: int = 2) -> TreeTopology:
    """Path ``0 - 1 - ... - L-1`` rooted at site 0."""
    if L < 1:
        raise TopologyError("chain length must be at least 1")
    children = {i: ([i + 1] if i + 1 < L else []) for i in range(L)}
    return TreeTopology(0, children, {i: d for i in range(L)}, "chain")


def make_t_tree(L: int, d: int = 2) -> TreeTopology:
    """Virtual centre ``0`` with three arms of ``L`` physical nodes.

    Arm ``a`` holds nodes ``1 + a*L + j`` for ``j = 0..L-1``; ``j = 0`` touches
    the centre.
    """
    if L < 1:
        raise TopologyError("arm length must be at least 1")
    children: dict = {0: []}
    phys = {0: 1}
    for a in range(3):
        arm = [1 + a * L + j for j in range(L)]
        children[0].append(arm[0])
        for j, n in enumerate(arm):
            children[n] = [arm[j + 1]] if j + 1 < L else []
            phys[n] = d
    return TreeTopology(0, children, phys, "t-tree")


def make_balanced_binary(depth: int, d: int = 2) -> TreeTopology:
    """Perfect binary tree in heap numbering; only the ``2**depth`` leaves are physical."""
    if depth < 1:
        raise TopologyError("depth must be at least 1")
    n_nodes = 2 ** (depth + 1) - 1
    first_leaf = 2**depth - 1
    children = {i: ([2 * i + 1, 2 * i + 2] if i < first_leaf else []) for i in range(n_nodes)}
    phys = {i: (d if i >= first_leaf else 1) for i in range(n_nodes)}
    return TreeTopology(0, children, phys, "balanced-binary")


def make_ftps(L: int, d: int = 2) -> TreeTopology:
    """Backbone of ``L`` virtual nodes, each carrying a chain of ``L`` physical nodes.

    Backbone node ``b`` is ``b`` (root ``0``); its chain is ``L + b*L + j``.
    Each backbone node lists its chain head before the next backbone node.
    """
    if L < 1:
        raise TopologyError("L must be at least 1")
    children: dict = {}
    phys: dict = {}
    for b in range(L):
        chain = [L + b * L + j for j in range(L)]
        children[b] = [chain[0]] + ([b + 1] if b + 1 < L else [])
        phys[b] = 1
        for j, n in enumerate(chain):
            children[n] = [chain[j + 1]] if j + 1 < L else []
            phys[n] = d
    return TreeTopology(0, children, phys, "ftps")


GENERATORS = {
    "chain": make_chain,
    "mps": make_chain,
    "t-tree": make_t_tree,
    "balanced-binary": make_balanced_binary,
    "binary": make_balanced_binary,
    "ftps": make_ftps,
}


def make_structure(family: str, L: int, d: int) -> TreeTopology:
    try:
        return GENERATORS[family](L, d)
    except KeyError:
        raise TopologyError(f"unknown structure family {family!r}") from None


# ---------------------------------------------------------------------------
# leg naming


def alpha(node) -> LegId:
    return LegId(ALPHA, node)


def beta(node) -> LegId:
    return LegId(BETA, node)


def phys(node) -> LegId:
    return LegId(PHYS, node)


def phys_out(node) -> LegId:
    return LegId(PHYS_OUT, node)


def state_legs(topo: TreeTopology, node) -> list:
    return [alpha(node)] + [alpha(c) for c in topo.children[node]] + [phys(node)]


def op_legs(topo: TreeTopology, node) -> list:
    return [beta(node)] + [beta(c) for c in topo.children[node]] + [phys_out(node), phys(node)]


# ---------------------------------------------------------------------------
# networks


class _TreeNetwork:
    _legs = staticmethod(state_legs)

    def __init__(self, topology: TreeTopology, tensors: Mapping):
        self.topology = topology
        missing = set(topology.phys_dim) - set(tensors)
        if missing:
            raise TopologyError(f"no tensor for nodes {sorted(map(repr, missing))}")
        self.tensors = {}
        for node in topology.preorder():
            t = tensors[node]
            legs = self._legs(topology, node)
            try:
                t = t.transpose(legs)
            except TensorError:
                raise TopologyError(f"tensor at {node!r} has legs {t.legs}, expected {legs}") from None
            self.tensors[node] = t
        self._check()

    def _check(self):
        topo = self.topology
        kind = self._legs(topo, topo.root)[0].kind
        if self.tensors[topo.root].dim(LegId(kind, topo.root)) != 1:
            raise TopologyError("the root's parent leg must have extent 1")
        for c in topo.edges():
            leg = LegId(kind, c)
            up = self.tensors[topo.parent[c]].dim(leg)
            down = self.tensors[c].dim(leg)
            if up != down:
                raise TopologyError(f"edge above {c!r} has extents {up} and {down}")
        for node, t in self.tensors.items():
            for leg in t.legs:
                if leg.kind in (PHYS, PHYS_OUT) and t.dim(leg) != topo.phys_dim[node]:
                    raise TopologyError(f"physical leg at {node!r} has wrong extent")

    def bond_dim(self, edge) -> int:
        kind = self._legs(self.topology, edge)[0].kind
        return self.tensors[edge].dim(LegId(kind, edge))

    def bond_dims(self) -> dict:
        return {c: self.bond_dim(c) for c in self.topology.edges()}

    def max_bond_dim(self) -> int:
        return max(self.bond_dims().values(), default=1)

    def entry_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def __getitem__(self, node) -> Tensor:
        return self.tensors[node]

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.topology!r}, max_bond={self.max_bond_dim()})"


class TTNS(_TreeNetwork):
    """Tree tensor network state: one physical and one virtual leg per incident edge."""

    _legs = staticmethod(state_legs)

    def copy(self) -> TTNS:
        return TTNS(self.topology, {n: Tensor(t.data.copy(), t.legs) for n, t in self.tensors.items()})

    def scaled(self, factor) -> TTNS:
        tensors = dict(self.tensors)
        tensors[self.topology.root] = tensors[self.topology.root] * factor
        return TTNS(self.topology, tensors)


class TTNO(_TreeNetwork):
    """Tree tensor network operator: output and input physical legs per node."""

    _legs = staticmethod(op_legs)


def _check_same(a: _TreeNetwork, b: _TreeNetwork):
    if a.topology != b.topology:
        raise TopologyError("networks live on different topologies")


# ---------------------------------------------------------------------------
# construction


def random_ttns(topo: TreeTopology, D: int, rng: np.random.Generator) -> TTNS:
    """Every internal edge has extent ``D``; entries from :func:`random_tensor`."""
    if D < 1:
        raise ValueError("bond dimension must be at least 1")
    tensors = {}
    for node in topo.preorder():
        legs = state_legs(topo, node)
        dims = [1 if node == topo.root else D] + [D] * len(topo.children[node]) + [topo.phys_dim[node]]
        tensors[node] = random_tensor(dims, rng, legs)
    return TTNS(topo, tensors)


def random_ttno(topo: TreeTopology, D: int, rng: np.random.Generator) -> TTNO:
    if D < 1:
        raise ValueError("bond dimension must be at least 1")
    tensors = {}
    for node in topo.preorder():
        legs = op_legs(topo, node)
        d = topo.phys_dim[node]
        dims = [1 if node == topo.root else D] + [D] * len(topo.children[node]) + [d, d]
        tensors[node] = random_tensor(dims, rng, legs)
    return TTNO(topo, tensors)


def product_state(topo: TreeTopology, local: Mapping | None = None) -> TTNS:
    """Bond-dimension-1 state; ``local[node]`` defaults to the basis vector ``|0>``."""
    tensors = {}
    for node in topo.preorder():
        d = topo.phys_dim[node]
        vec = np.zeros(d, dtype=complex)
        vec[0] = 1.0
        if local is not None and node in local:
            vec = np.asarray(local[node], dtype=complex)
        shape = [1] * (1 + len(topo.children[node])) + [d]
        tensors[node] = Tensor(vec.reshape(shape), state_legs(topo, node))
    return TTNS(topo, tensors)


def product_operator(topo: TreeTopology, local: Mapping | None = None) -> TTNO:
    """Bond-dimension-1 operator; ``local[node]`` defaults to the identity."""
    tensors = {}
    for node in topo.preorder():
        d = topo.phys_dim[node]
        mat = np.eye(d, dtype=complex)
        if local is not None and node in local:
            mat = np.asarray(local[node], dtype=complex)
        shape = [1] * (1 + len(topo.children[node])) + [d, d]
        tensors[node] = Tensor(mat.reshape(shape), op_legs(topo, node))
    return TTNO(topo, tensors)


def identity_ttno(topo: TreeTopology) -> TTNO:
    return product_operator(topo)


# ---------------------------------------------------------------------------
# dense oracle


def _dense_subtree(net: _TreeNetwork, node) -> Tensor:
    t = net.tensors[node]
    for c in net.topology.children[node]:
        t = contract_shared(t, _dense_subtree(net, c))
    return t


def to_dense(state: TTNS, max_size: int = MAX_DENSE_STATE) -> np.ndarray:
    """Full state vector, sites in preorder."""
    topo = state.topology
    if topo.total_phys_dim() > max_size:
        raise ValueError(f"state of dimension {topo.total_phys_dim()} exceeds the dense guard {max_size}")
    t = _dense_subtree(state, topo.root)
    order = [alpha(topo.root)] + [phys(n) for n in topo.preorder()]
    return t.transpose(order).data.reshape(-1)


def to_dense_op(op: TTNO, max_side: int = MAX_DENSE_OP_SIDE) -> np.ndarray:
    """Full operator matrix ``M[out, in]``, sites in preorder on both sides."""
    topo = op.topology
    if topo.total_phys_dim() > max_side:
        raise ValueError(f"operator side {topo.total_phys_dim()} exceeds the dense guard {max_side}")
    t = _dense_subtree(op, topo.root)
    nodes = topo.preorder()
    order = [beta(topo.root)] + [phys_out(n) for n in nodes] + [phys(n) for n in nodes]
    n = topo.total_phys_dim()
    return t.transpose(order).data.reshape(n, n)


# ---------------------------------------------------------------------------
# contractions between networks


def _bra_leg(leg: LegId) -> LegId:
    return LegId(leg.kind, leg.site, 1)


def inner(a: TTNS, b: TTNS) -> complex:
    """``<a|b>`` by a leaves-to-root environment sweep."""
    _check_same(a, b)
    topo = a.topology
    env: dict = {}
    for node in topo.postorder():
        bra = a.tensors[node].conj()
        bra = bra.relabel({leg: _bra_leg(leg) for leg in bra.legs if leg.kind == ALPHA})
        t = b.tensors[node]
        for c in topo.children[node]:
            t = contract_shared(t, env.pop(c))
        t = contract_shared(bra, t)
        env[node] = t
    return complex(env[topo.root].data.reshape(-1)[0])


def expectation(bra: TTNS, op: TTNO, ket: TTNS) -> complex:
    """``<bra| op |ket>`` by a three-layer environment sweep."""
    _check_same(bra, ket)
    _check_same(op, ket)
    topo = ket.topology
    env: dict = {}
    for node in topo.postorder():
        t = ket.tensors[node]
        for c in topo.children[node]:
            t = contract_shared(t, env.pop(c))
        t = contract_shared(t, op.tensors[node])
        b = bra.tensors[node].conj()
        b = b.relabel({leg: _bra_leg(leg) for leg in b.legs if leg.kind == ALPHA})
        b = b.relabel({phys(node): phys_out(node)})
        env[node] = contract_shared(t, b)
    return complex(env[topo.root].data.reshape(-1)[0])


def applied_norm_sq(op: TTNO, ket: TTNS) -> float:
    """``|| op |ket> ||^2`` by a four-layer environment sweep, never forming the product."""
    _check_same(op, ket)
    topo = ket.topology
    env: dict = {}
    for node in topo.postorder():
        t = ket.tensors[node]
        for c in topo.children[node]:
            t = contract_shared(t, env.pop(c))
        t = contract_shared(t, op.tensors[node])
        o = op.tensors[node].conj()
        o = o.relabel({leg: _bra_leg(leg) for leg in o.legs if leg.kind != PHYS_OUT})
        t = contract_shared(t, o)
        k = ket.tensors[node].conj()
        k = k.relabel({leg: _bra_leg(leg) for leg in k.legs})
        env[node] = contract_shared(t, k)
    return float(env[topo.root].data.reshape(-1)[0].real)


def canonicalize(state: TTNS, center=None) -> TTNS:
    """Gauge-transform so every tensor is isometric toward ``center`` (default root).

    Bond dimensions may shrink to the local rank bound.
    """
    topo = state.topology
    center = topo.root if center is None else center
    tensors = dict(state.tensors)
    order = sorted(topo.preorder(), key=lambda n: -len(topo.path(n, center)))
    for node in order:
        if node == center:
            continue
        towards = topo.path(node, center)[1]
        edge = alpha(topo.edge_between(node, towards))
        q, r = qr(tensors[node], edge, new=LegId(CHI, node))
        tensors[node] = q.relabel({LegId(CHI, node): edge})
        nb = contract(tensors[towards], r, [(edge, edge)])
        tensors[towards] = nb.relabel({LegId(CHI, node): edge})
    return TTNS(topo, tensors)


def norm(state: TTNS) -> float:
    """Norm via canonical form; avoids the cancellation of ``sqrt(<a|a>)`` near zero."""
    return canonicalize(state)[state.topology.root].norm()


def add(a: TTNS, b: TTNS, coef_a=1.0, coef_b=1.0) -> TTNS:
    """``coef_a |a> + coef_b |b>`` with bonds the direct sum of both networks' bonds."""
    _check_same(a, b)
    topo = a.topology
    tensors = {}
    for node in topo.preorder():
        ta, tb = a.tensors[node], b.tensors[node]
        va, vb = ta.dims[:-1], tb.dims[:-1]
        d = ta.dims[-1]
        is_root = node == topo.root
        shape = [n + m for n, m in zip(va, vb)]
        if is_root:
            shape[0] = 1
        data = np.zeros(tuple(shape) + (d,), dtype=complex)
        sl_a = tuple(slice(0, n) for n in va)
        sl_b = tuple(slice(n, n + m) for n, m in zip(va, vb))
        if is_root:
            sl_b = (slice(0, 1),) + sl_b[1:]
        data[sl_a] += coef_a * ta.data if is_root else ta.data
        data[sl_b] += coef_b * tb.data if is_root else tb.data
        tensors[node] = Tensor(data, ta.legs)
    return TTNS(topo, tensors)


def distance(a: TTNS, b: TTNS) -> float:
    """``|| a - b ||`` computed from the canonical form of the difference network."""
    return norm(add(a, b, 1.0, -1.0))


def rerooted(net: TTNS, new_root) -> TTNS:
    """The same state expressed on the tree rooted at ``new_root``."""
    old = net.topology
    topo = old.rerooted(new_root)
    mapping = {}
    for c in old.edges():
        p = old.parent[c]
        new_child = c if topo.parent.get(c) == p else p
        mapping[alpha(c)] = alpha(new_child)
    tensors = {}
    for node in old.preorder():
        t = net.tensors[node]
        if node == old.root:
            t = contract(t, Tensor(np.ones(1), [alpha(old.root)]), [(alpha(old.root), alpha(old.root))])
        t = t.relabel(mapping)
        if node == new_root:
            t = Tensor(t.data[np.newaxis], [alpha(new_root)] + list(t.legs))
        tensors[node] = t
    return TTNS(topo, tensors)


# ---------------------------------------------------------------------------
# JSON exchange format


def to_json(net: _TreeNetwork) -> dict:
    """Exchange dict: one entry per node in preorder with its legs and row-major data."""
    topo = net.topology
    is_op = isinstance(net, TTNO)
    nodes = []
    for node in topo.preorder():
        t = net.tensors[node]
        legs = [{"kind": "virtual", "peer": topo.parent.get(node), "extent": t.dims[0]}]
        for i, c in enumerate(topo.children[node]):
            legs.append({"kind": "virtual", "peer": c, "extent": t.dims[1 + i]})
        phys_kinds = ["phys_out", "phys"] if is_op else ["phys"]
        for k in phys_kinds:
            legs.append({"kind": k, "peer": None, "extent": topo.phys_dim[node]})
        flat = np.empty(2 * t.size)
        flat[0::2] = t.data.real.ravel()
        flat[1::2] = t.data.imag.ravel()
        nodes.append(
            {
                "id": node,
                "parent": topo.parent.get(node),
                "phys_dim": topo.phys_dim[node],
                "legs": legs,
                "tensor": {"dims": list(t.dims), "data": flat.tolist()},
            }
        )
    return {
        "format_version": FORMAT_VERSION,
        "kind": "ttno" if is_op else "ttns",
        "family": topo.family,
        "root": topo.root,
        "nodes": nodes,
    }


def from_json(doc: Mapping) -> TTNS | TTNO:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {doc.get('format_version')!r}")
    children = {}
    phys_dim = {}
    for entry in doc["nodes"]:
        node = entry["id"]
        phys_dim[node] = entry["phys_dim"]
        children[node] = [leg["peer"] for leg in entry["legs"][1:] if leg["kind"] == "virtual"]
    topo = TreeTopology(doc["root"], children, phys_dim, doc.get("family", "custom"))
    is_op = doc.get("kind") == "ttno"
    legs_of = op_legs if is_op else state_legs
    tensors = {}
    for entry in doc["nodes"]:
        node = entry["id"]
        dims = tuple(entry["tensor"]["dims"])
        flat = np.asarray(entry["tensor"]["data"], dtype=float)
        data = (flat[0::2] + 1j * flat[1::2]).reshape(dims)
        tensors[node] = Tensor(data, legs_of(topo, node))
    return (TTNO if is_op else TTNS)(topo, tensors)
