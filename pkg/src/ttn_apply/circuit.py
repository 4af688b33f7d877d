"""Tree-like random circuits, their per-level TTNOs and the U·U† simulation loop.

Qubits are split into three groups of nearly equal size plus three connector
qubits, laid out as ``[group0, c0, group1, c1, group2, c2]``. Inside a group
the gates form a binary reduction onto the group's last qubit (its hub); the
hubs then talk to their connectors and the connectors to each other. Every
batch therefore has a tree as its interaction graph.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .apply import ApplyMethod, apply
from .tensor import BETA, LegId, Tensor, TruncationConfig, contract, fuse
from .tree import (
    TTNO,
    TTNS,
    TopologyError,
    TreeTopology,
    beta,
    distance,
    identity_ttno,
    op_legs,
    phys,
    phys_out,
    product_state,
)

UNITARY_ATOL = 1e-12
MIN_QUBITS = 6
STRUCTURES = ("mps", "t3ns-chains", "t3ns-leaves")

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def _is_unitary(m: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=atol)


def haar_1q(rng: np.random.Generator) -> np.ndarray:
    """Haar-random 2×2 unitary (QR of a complex Gaussian with the R phases removed)."""
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


@dataclass(frozen=True)
class Gate2Q:
    """Two-qubit gate; ``matrix`` acts on ``|control, target>`` with control as the major index."""

    control: int
    target: int
    matrix: np.ndarray = field(compare=False)
    v1: np.ndarray | None = field(default=None, compare=False)
    v2: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.control == self.target:
            raise ValueError("control and target must differ")
        if np.shape(self.matrix) != (4, 4) or not _is_unitary(self.matrix):
            raise ValueError("gate matrix must be a 4x4 unitary")

    @property
    def support(self) -> tuple:
        return (self.control, self.target)

    def dagger(self) -> Gate2Q:
        return Gate2Q(self.control, self.target, self.matrix.conj().T)


def make_gate(v1, v2, control: int = 0, target: int = 1) -> Gate2Q:
    """``CNOT · (v1 ⊗ v2)`` on ``(control, target)``."""
    v1 = np.asarray(v1, dtype=complex)
    v2 = np.asarray(v2, dtype=complex)
    for name, v in (("v1", v1), ("v2", v2)):
        if v.shape != (2, 2) or not _is_unitary(v):
            raise ValueError(f"{name} must be a 2x2 unitary")
    return Gate2Q(control, target, CNOT @ np.kron(v1, v2), v1, v2)


@dataclass(frozen=True)
class CircuitLevel:
    gates: tuple = ()

    def __post_init__(self):
        seen: set = set()
        for g in self.gates:
            if seen & set(g.support):
                raise ValueError(f"gate on {g.support} overlaps another gate of the level")
            seen.update(g.support)

    def dagger(self) -> CircuitLevel:
        return CircuitLevel(tuple(g.dagger() for g in reversed(self.gates)))


@dataclass(frozen=True)
class CircuitBatch:
    n_qubits: int
    levels: tuple = ()

    def gates(self) -> list:
        return [g for lvl in self.levels for g in lvl.gates]


def qubit_layout(n_qubits: int) -> tuple:
    """``(groups, connectors)``; group sizes differ by at most one, larger ones first."""
    if n_qubits < MIN_QUBITS:
        raise ValueError(f"need at least {MIN_QUBITS} qubits, got {n_qubits}")
    rest = n_qubits - 3
    sizes = [rest // 3 + (1 if g < rest % 3 else 0) for g in range(3)]
    groups, connectors = [], []
    q = 0
    for m in sizes:
        groups.append(list(range(q, q + m)))
        connectors.append(q + m)
        q += m + 1
    return groups, connectors


def _reduction_levels(group: list) -> list:
    """Pairs per level of a binary reduction of ``group`` onto its last qubit."""
    m = len(group)
    levels = []
    s = 1
    while s < m:
        pairs = []
        for j in range(0, m, 2 * s):
            a, b = min(j + s - 1, m - 1), min(j + 2 * s - 1, m - 1)
            if a < b:
                pairs.append((group[a], group[b]))
        levels.append(pairs)
        s *= 2
    return levels


def batch_pattern(n_qubits: int) -> list:
    """Qubit pairs of every level of one batch, without the random single-qubit gates."""
    groups, conn = qubit_layout(n_qubits)
    per_group = [_reduction_levels(g) for g in groups]
    depth = max(len(p) for p in per_group)
    levels = []
    for ell in range(depth):
        levels.append([pair for p in per_group if ell < len(p) for pair in p[ell]])
    levels.append([(groups[g][-1], conn[g]) for g in range(3)])
    levels.append([(conn[0], conn[1])])
    levels.append([(conn[1], conn[2])])
    return levels


def make_batch(n_qubits: int, rng: np.random.Generator) -> CircuitBatch:
    levels = []
    for pairs in batch_pattern(n_qubits):
        gates = tuple(make_gate(haar_1q(rng), haar_1q(rng), a, b) for a, b in pairs)
        levels.append(CircuitLevel(gates))
    return CircuitBatch(n_qubits, tuple(levels))


def interaction_is_tree(batch: CircuitBatch) -> bool:
    """Union-find check that the batch's gate supports form a spanning tree of the qubits."""
    parent = list(range(batch.n_qubits))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = {tuple(sorted(g.support)) for g in batch.gates()}
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return len(edges) == batch.n_qubits - 1


# ---------------------------------------------------------------------------
# tree structures


def _binary_over(leaves: list, next_id, parents: dict, phys_dim: dict):
    """Attach a balanced binary tree over ``leaves``; returns its top node."""
    if len(leaves) == 1:
        return leaves[0]
    mid = (len(leaves) + 1) // 2
    node = next_id()
    phys_dim[node] = 1
    for part in (leaves[:mid], leaves[mid:]):
        parents[_binary_over(part, next_id, parents, phys_dim)] = node
    return node


def structure_for(kind: str, n_qubits: int) -> TreeTopology:
    """Tree on which the circuit is simulated; node ``q`` carries qubit ``q``, virtual nodes count up from ``n_qubits``."""
    groups, conn = qubit_layout(n_qubits)
    phys_dim = {q: 2 for q in range(n_qubits)}
    parents: dict = {}
    counter = iter(range(n_qubits, 10 * n_qubits + 10))

    def next_id():
        return next(counter)

    if kind == "mps":
        for q in range(1, n_qubits):
            parents[q] = q - 1
        return TreeTopology.from_parents(0, parents, phys_dim, family="chain")
    if kind == "t3ns-chains":
        root = next_id()
        phys_dim[root] = 1
        parents[root] = None
        for g, c in enumerate(conn):
            parents[c] = root
            prev = c
            for q in reversed(groups[g]):
                parents[q] = prev
                prev = q
        return TreeTopology.from_parents(root, parents, phys_dim)
    if kind == "t3ns-leaves":
        root = next_id()
        phys_dim[root] = 1
        parents[root] = None
        for g, c in enumerate(conn):
            hub = next_id()
            phys_dim[hub] = 1
            parents[hub] = root
            parents[c] = hub
            parents[_binary_over(list(groups[g]), next_id, parents, phys_dim)] = hub
        return TreeTopology.from_parents(root, parents, phys_dim)
    raise TopologyError(f"unknown circuit structure {kind!r}; expected one of {', '.join(STRUCTURES)}")


# ---------------------------------------------------------------------------
# levels as operators


def _gate_ttno(gate: Gate2Q, topo: TreeTopology) -> TTNO:
    """One gate as a TTNO: operator-SVD factors at both ends, identity passthrough in between."""
    a, b = gate.control, gate.target
    for q in (a, b):
        if q not in topo.phys_dim or topo.phys_dim[q] != 2:
            raise TopologyError(f"qubit {q!r} is not a two-dimensional node of the topology")
    g = gate.matrix.reshape(2, 2, 2, 2)  # (a_out, b_out, a_in, b_in)
    m = g.transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(m)
    r = int(np.count_nonzero(s > 1e-14 * s[0]))
    fa = (u[:, :r] * np.sqrt(s[:r])).reshape(2, 2, r)  # (a_out, a_in, k)
    fb = (np.sqrt(s[:r])[:, None] * vh[:r]).reshape(r, 2, 2)  # (k, b_out, b_in)

    path = topo.path(a, b)
    on_path = {topo.edge_between(x, y) for x, y in zip(path[:-1], path[1:])}
    tensors = {}
    for node in topo.preorder():
        legs = op_legs(topo, node)
        bonds = [e for e in [node, *topo.children[node]] if e in on_path]
        d = topo.phys_dim[node]
        if node == a:
            local = fa.transpose(2, 0, 1)  # (k, out, in)
        elif node == b:
            local = fb
        elif bonds:
            local = None
        else:
            local = np.eye(d).reshape(1, d, d)
        if local is None:
            # passthrough: the two path bonds carry the same index
            data = np.einsum("kl,oi->kloi", np.eye(r), np.eye(d))
            shape = [r if leg.site in bonds else 1 for leg in legs[:-2]] + [d, d]
            data = data.reshape(shape)
        else:
            shape = [r if leg.site in bonds else 1 for leg in legs[:-2]] + [d, d]
            data = local.reshape(shape)
        tensors[node] = Tensor(data.astype(complex), legs)
    return TTNO(topo, tensors)


def compose(first: TTNO, second: TTNO) -> TTNO:
    """TTNO of ``second · first`` with Kronecker-product bonds."""
    topo = first.topology
    if second.topology != topo:
        raise TopologyError("operators live on different topologies")
    tensors = {}
    for node in topo.preorder():
        mid = LegId("mid", node)
        lo = first[node].relabel({phys_out(node): mid})
        shifted = {beta(e): LegId(BETA, e, 1) for e in [node, *topo.children[node]]}
        shifted[phys(node)] = mid
        hi = second[node].relabel(shifted)
        t = contract(lo, hi, [(mid, mid)])
        for e in [node, *topo.children[node]]:
            t = fuse(t, [beta(e), LegId(BETA, e, 1)], beta(e))
        tensors[node] = t
    return TTNO(topo, tensors)


def level_to_ttno(level: CircuitLevel, topo: TreeTopology) -> TTNO:
    op = identity_ttno(topo)
    for gate in level.gates:
        op = compose(op, _gate_ttno(gate, topo))
    return op


def exact_bond_bound(topo: TreeTopology, batches) -> int:
    """Largest bond any edge can need while running ``U`` and then ``U†``.

    Midway through ``U†`` the state equals a prefix of ``U`` applied to the
    input, so the rank across an edge is bounded by both the smaller Hilbert
    space on either side and ``2 ** (gates of U crossing the edge)``; every
    gate here has operator Schmidt rank at most 2.
    """
    gates = [g for batch in batches for g in batch.gates()]
    all_q = set(topo.physical_nodes())
    best = 1
    for e in topo.edges():
        inside = {n for n in topo.subtree(e) if topo.phys_dim[n] > 1}
        side = min(len(inside), len(all_q - inside))
        crossing = sum(1 for g in gates if (g.control in inside) != (g.target in inside))
        best = max(best, 2 ** min(side, crossing))
    return best


# ---------------------------------------------------------------------------
# simulation


@dataclass
class SimConfig:
    n_qubits: int
    n_batches: int
    method: ApplyMethod
    cfg: TruncationConfig
    structure: str = "t3ns-leaves"
    seed: int = 0
    batches: tuple | None = None

    def __post_init__(self):
        if self.n_batches < 1 and self.batches is None:
            raise ValueError("need at least one batch")
        if isinstance(self.method, str):
            self.method = ApplyMethod(self.method)


@dataclass
class SimResult:
    err: float
    wall_time: float
    peak_entries: int
    max_bond: int
    n_applies: int
    state: TTNS


def circuit_batches(simcfg: SimConfig) -> tuple:
    if simcfg.batches is not None:
        return tuple(simcfg.batches)
    rng = np.random.default_rng(simcfg.seed)
    return tuple(make_batch(simcfg.n_qubits, rng) for _ in range(simcfg.n_batches))


def simulate(simcfg: SimConfig) -> SimResult:
    """Run ``U`` then ``U†`` level by level from ``|0...0>`` and report ``‖ψ0 − U U† ψ0‖``.

    Wall time covers the apply calls only; the peak is the largest single
    apply's entry count.
    """
    topo = structure_for(simcfg.structure, simcfg.n_qubits)
    batches = circuit_batches(simcfg)
    forward = [lvl for batch in batches for lvl in batch.levels]
    schedule = forward + [lvl.dagger() for lvl in reversed(forward)]
    psi0 = product_state(topo)
    psi = psi0
    wall, peak, max_bond, n = 0.0, psi0.entry_count(), 1, 0
    seeds = np.random.SeedSequence(simcfg.seed).spawn(len(schedule))
    for lvl, ss in zip(schedule, seeds):
        if not lvl.gates:
            continue
        op = level_to_ttno(lvl, topo)
        t0 = time.perf_counter()
        rep = apply(simcfg.method, op, psi, simcfg.cfg, rng=np.random.default_rng(ss))
        wall += time.perf_counter() - t0
        psi = rep.result
        peak = max(peak, rep.peak_entry_count)
        max_bond = max(max_bond, psi.max_bond_dim())
        n += 1
    err = 0.0 if n == 0 else distance(psi0, psi)
    return SimResult(err, wall, peak, max_bond, n, psi)


# ---------------------------------------------------------------------------
# circuit files


def _mat_to_json(m) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(m).reshape(-1)]


def _mat_from_json(doc, n: int) -> np.ndarray:
    return np.array([complex(re, im) for re, im in doc]).reshape(n, n)


def circuit_to_json(batches) -> dict:
    batches = list(batches)
    n = batches[0].n_qubits if batches else 0
    out = []
    for batch in batches:
        levels = []
        for lvl in batch.levels:
            gates = []
            for g in lvl.gates:
                entry = {"control": g.control, "target": g.target}
                if g.v1 is not None:
                    entry["v1"], entry["v2"] = _mat_to_json(g.v1), _mat_to_json(g.v2)
                else:
                    entry["matrix"] = _mat_to_json(g.matrix)
                gates.append(entry)
            levels.append(gates)
        out.append(levels)
    return {"n_qubits": n, "batches": out}


def circuit_from_json(doc: dict) -> tuple:
    n = int(doc["n_qubits"])
    batches = []
    for levels in doc["batches"]:
        lv = []
        for gates in levels:
            made = []
            for e in gates:
                if "v1" in e:
                    made.append(make_gate(_mat_from_json(e["v1"], 2), _mat_from_json(e["v2"], 2), e["control"], e["target"]))
                else:
                    made.append(Gate2Q(e["control"], e["target"], _mat_from_json(e["matrix"], 4)))
            lv.append(CircuitLevel(tuple(made)))
        batches.append(CircuitBatch(n, tuple(lv)))
    return tuple(batches)


def save_circuit(batches, path) -> None:
    Path(path).write_text(json.dumps(circuit_to_json(batches)))


def load_circuit(path) -> tuple:
    return circuit_from_json(json.loads(Path(path).read_text()))
