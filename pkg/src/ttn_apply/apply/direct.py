"""Exact contraction followed by a truncated-SVD sweep."""

from __future__ import annotations

from ..tensor import CHI, LegId, TruncationConfig, contract, contract_shared, fuse, qr, svd_trunc
from ..tree import TTNO, TTNS, alpha, beta, canonicalize
from ._common import ApplyReport, Workspace, check_inputs, finish_state, res

_TMP = LegId(CHI, "sweep", 3)


def contract_exact(op: TTNO, state: TTNS, ws: Workspace | None = None) -> TTNS:
    """Node-wise product; state and operator bonds of each edge fused into one leg."""
    check_inputs(op, state)
    topo = state.topology
    out = {}
    for node in topo.preorder():
        x = contract_shared(state[node], op[node])
        for e in [node, *topo.children[node]]:
            x = fuse(x, [alpha(e), beta(e)], res(e))
        out[node] = x
        if ws is not None:
            ws.hold(("P", node), x)
    return finish_state(topo, out)


def truncate_sweep(state: TTNS, cfg: TruncationConfig, ws: Workspace | None = None) -> TTNS:
    """Compress every bond of a root-canonical state, moving the centre from the root outward.

    Each edge is cut by a truncated SVD while the orthogonality centre sits on
    its parent, so each cut is the optimal one for the current state. The
    centre returns to the parent through a QR after the child's subtree is done,
    leaving every non-root tensor isometric toward the root.
    """
    topo = state.topology
    tensors = dict(state.tensors)

    def visit(node):
        for c in topo.children[node]:
            edge = alpha(c)
            rows = [leg for leg in tensors[node].legs if leg != edge]
            u, s, v, dw = svd_trunc(tensors[node], rows, cfg, bond=_TMP)
            tensors[node] = u.relabel({_TMP: edge})
            sv = v * 1.0
            sv.data *= s.reshape((-1,) + (1,) * (sv.data.ndim - 1))
            tensors[c] = contract(sv, tensors[c], [(edge, edge)]).relabel({_TMP: edge})
            if ws is not None:
                ws.sample(u, v, *tensors.values())
                ws.discarded[c] = dw
                ws.spectra[c] = s
            visit(c)
            q, r = qr(tensors[c], edge, new=_TMP)
            tensors[c] = q.relabel({_TMP: edge})
            tensors[node] = contract(tensors[node], r, [(edge, edge)]).relabel({_TMP: edge})

    visit(topo.root)
    return TTNS(topo, tensors)


def apply_direct(op: TTNO, state: TTNS, cfg: TruncationConfig) -> ApplyReport:
    ws = Workspace("direct")
    exact = contract_exact(op, state, ws)
    canon = canonicalize(exact)
    ws.sample(*canon.tensors.values())
    ws.drop(*[("P", n) for n in state.topology.preorder()])
    result = truncate_sweep(canon, cfg, ws)
    return ws.report(result)
