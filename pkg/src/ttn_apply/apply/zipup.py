"""Zip-Up: one leaves-to-root sweep, each site compressed as soon as it is reached."""

from __future__ import annotations

import numpy as np

from ..tensor import Tensor, TruncationConfig, contract, svd_trunc
from ..tree import TTNO, TTNS, alpha, beta, canonicalize
from ._common import ApplyReport, Workspace, check_inputs, finish_state, local_product, res
from .direct import truncate_sweep


def apply_zipup(
    op: TTNO,
    state: TTNS,
    cfg: TruncationConfig,
    fudge: float = 1.0,
    canonical: bool = True,
) -> ApplyReport:
    """Single sweep that only sees the already compressed part of the network.

    With ``canonical`` the state is first gauged so its orthogonality centre
    sits on the first leaf of the sweep. Intermediate truncations keep
    ``ceil(fudge * max_dim)`` values; when ``fudge > 1`` a final truncation
    sweep brings every bond down to ``max_dim``.
    """
    check_inputs(op, state)
    if fudge < 1.0:
        raise ValueError("fudge must be at least 1")
    topo = state.topology
    ws = Workspace("zipup")
    if canonical:
        state = canonicalize(state, center=topo.postorder()[0])
        ws.sample(*state.tensors.values())
    local_cfg = cfg.scaled(fudge) if fudge > 1.0 else cfg

    new = {}
    carry: dict = {}
    for node in topo.postorder():
        kids = topo.children[node]
        x = local_product(state[node], op[node], [carry.pop(c) for c in kids], ws)
        ws.drop(*[("C", c) for c in kids])
        if node == topo.root:
            x = contract(x, Tensor(np.ones(1), [beta(node)]), [(beta(node), beta(node))])
            new[node] = x
            ws.hold(("T", node), x)
            continue
        u, s, v, dw = svd_trunc(x, [alpha(node), beta(node)], local_cfg, bond=res(node))
        ws.sample(x, u, v)
        ws.discarded[node] = dw
        ws.spectra[node] = s
        new[node] = v
        carry[node] = Tensor(u.data * s, u.legs)
        ws.hold(("T", node), v)
        ws.hold(("C", node), carry[node])
    result = finish_state(topo, new)
    if fudge > 1.0:
        result = truncate_sweep(result, cfg, ws)
    return ws.report(result)
