from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..tensor import CHI, LegId, Tensor, check_budget, contract_shared, isometry_error
from ..tree import TTNO, TTNS, TopologyError, alpha, beta, phys, phys_out

ISOMETRY_ATOL = 1e-8


def res(node) -> LegId:
    """Bond of the result state above ``node`` while it is being built."""
    return LegId(CHI, node, 0)


def chi_down(node) -> LegId:
    """Compressed leg of the environment of everything outside ``subtree(node)``."""
    return LegId(CHI, node, 1)


def chi_up(node) -> LegId:
    """Compressed leg of the environment of ``subtree(node)``."""
    return LegId(CHI, node, 2)


def bra(leg: LegId) -> LegId:
    return LegId(leg.kind, leg.site, leg.slot + 10)


@dataclass
class ApplyReport:
    """Outcome of one operator application.

    ``peak_entry_count`` is the largest number of tensor entries held by the
    algorithm at any sampling point (inputs excluded). ``discarded`` maps an
    edge (its child node) to the weight dropped when compressing it;
    ``spectra`` holds the kept singular values (or density-matrix eigenvalues)
    where a method produces them. ``trace`` lists ``(stage, node, dims)``.
    """

    result: TTNS
    method: str
    wall_time: float = 0.0
    peak_entry_count: int = 0
    discarded: dict = field(default_factory=dict)
    spectra: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)


class Workspace:
    """Per-call bookkeeping: live tensors for the memory proxy, trace, discards."""

    def __init__(self, method: str, record_trace: bool = False):
        self.method = method
        self.live: dict = {}
        self.peak = 0
        self.record_trace = record_trace
        self.trace: list = []
        self.discarded: dict = {}
        self.spectra: dict = {}
        self._t0 = time.perf_counter()

    def hold(self, key, t: Tensor):
        self.live[key] = t.size
        self.sample()

    def drop(self, *keys):
        for key in keys:
            self.live.pop(key, None)

    def sample(self, *temps: Tensor):
        total = sum(self.live.values()) + sum(t.size for t in temps)
        check_budget([total])
        if total > self.peak:
            self.peak = total

    def log(self, stage: str, node, t: Tensor):
        if self.record_trace:
            self.trace.append((stage, node, t.shape_of()))

    def report(self, result: TTNS) -> ApplyReport:
        self.sample()
        return ApplyReport(
            result=result,
            method=self.method,
            wall_time=time.perf_counter() - self._t0,
            peak_entry_count=max(self.peak, result.entry_count()),
            discarded=self.discarded,
            spectra=self.spectra,
            trace=self.trace,
        )


def check_inputs(op: TTNO, state: TTNS):
    if not isinstance(op, TTNO) or not isinstance(state, TTNS):
        raise TypeError("expected a TTNO and a TTNS")
    if op.topology != state.topology:
        raise TopologyError("operator and state live on different topologies")


def local_product(state_t: Tensor, op_t: Tensor, envs, ws: Workspace | None = None) -> Tensor:
    """``T · 𝒯 · env_1 · env_2 ...`` contracted in a fixed order.

    The first environment is absorbed into the state tensor before the operator
    so the virtual legs of ``T`` and ``𝒯`` on that edge are never combined.
    """
    x = state_t
    envs = list(envs)
    if envs:
        x = contract_shared(x, envs[0])
        if ws is not None:
            ws.sample(x)
    x = contract_shared(x, op_t)
    if ws is not None:
        ws.sample(x)
    for env in envs[1:]:
        x = contract_shared(x, env)
        if ws is not None:
            ws.sample(x)
    return x


def trivial_env(node, leg) -> Tensor:
    """Extent-1 environment above the root."""
    return Tensor(np.ones((1, 1, 1)), [leg, alpha(node), beta(node)])


def assert_isometry(t: Tensor, open_leg, what: str):
    err = isometry_error(t, open_leg)
    scale = max(1.0, np.sqrt(t.dim(open_leg)))
    if not err <= ISOMETRY_ATOL * scale:
        raise AssertionError(f"{what} is not isometric (error {err:.3e})")


def finish_state(topo, tensors: dict) -> TTNS:
    """Rename result bonds to state bonds and output legs to physical legs."""
    out = {}
    for node, t in tensors.items():
        mapping = {phys_out(node): phys(node)}
        for leg in t.legs:
            if leg.kind == CHI:
                mapping[leg] = alpha(leg.site)
        out[node] = t.relabel(mapping)
    return TTNS(topo, out)


def needs_up_env(topo) -> set:
    """Nodes whose subtree environment is used by a sibling's downward environment."""
    need = set()
    for node in topo.preorder():
        kids = topo.children[node]
        if len(kids) > 1:
            for c in kids:
                need.update(topo.subtree(c))
    return need

