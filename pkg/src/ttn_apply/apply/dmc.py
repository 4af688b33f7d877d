"""Density matrix compression (DMC) on trees.

Double-layer environments of ``O|psi>`` are built for every edge (subtree
environments from the leaves up where siblings need them, outside
environments from the root down). A final leaves-to-root pass forms each
site's reduced density matrix with the already compressed children projected
out, keeps its leading eigenvectors as the new isometric site tensor and
projects the site into the environment handed to its parent.
"""

from __future__ import annotations

import numpy as np

from ..tensor import PHYS_OUT, Tensor, TruncationConfig, contract, contract_shared
from ..tree import TTNO, TTNS, alpha, beta, phys_out
from ._common import ApplyReport, Workspace, bra, check_inputs, finish_state, local_product, needs_up_env, res


def _bra_layer(t: Tensor, keep_out_open: bool = False) -> Tensor:
    """Complex conjugate with every leg moved to the bra copy.

    ``phys_out`` stays shared with the ket layer (a partial trace) unless
    ``keep_out_open``.
    """
    c = t.conj()
    return c.relabel({leg: bra(leg) for leg in c.legs if keep_out_open or leg.kind != PHYS_OUT})


def _double_env(state_t, op_t, envs, ws: Workspace) -> Tensor:
    """Sandwich ``T 𝒯 (T 𝒯)^*`` of one site with double-layer environments, tracing ``σ'``."""
    x = state_t
    for env in envs:
        x = contract_shared(x, env)
        ws.sample(x)
    x = contract_shared(x, op_t)
    ws.sample(x)
    x = contract_shared(x, _bra_layer(op_t))
    ws.sample(x)
    x = contract_shared(x, _bra_layer(state_t))
    ws.sample(x)
    return x


def _trivial_double(node) -> Tensor:
    legs = [alpha(node), beta(node), bra(alpha(node)), bra(beta(node))]
    return Tensor(np.ones((1, 1, 1, 1)), legs)


def _eig_truncate(rho: Tensor, rows, cfg: TruncationConfig, bond):
    """Leading eigenvectors of the Hermitised density matrix on ``rows``."""
    cols = [bra(leg) for leg in rows]
    m = rho.transpose(list(rows) + cols)
    shape = m.dims[: len(rows)]
    n = int(np.prod(shape))
    mat = m.data.reshape(n, n)
    mat = 0.5 * (mat + mat.conj().T)
    w, v = np.linalg.eigh(mat)
    w = np.clip(w[::-1], 0.0, None)
    # eigh noise on a rank-deficient matrix is not weight worth keeping
    w[w <= n * np.finfo(float).eps * w[0]] = 0.0
    v = v[:, ::-1]
    k = min(cfg.keep(np.sqrt(w)), max(1, int(np.count_nonzero(w))))
    q = Tensor(v[:, :k].reshape(shape + (k,)), list(rows) + [bond])
    return q, w[:k], float(np.sum(w[k:]))


def apply_dmc(op: TTNO, state: TTNS, cfg: TruncationConfig) -> ApplyReport:
    check_inputs(op, state)
    topo = state.topology
    ws = Workspace("dmc")
    need_up = needs_up_env(topo)

    up: dict = {}
    for node in topo.postorder():
        if node in need_up:
            up[node] = _double_env(state[node], op[node], [up[c] for c in topo.children[node]], ws)
            ws.hold(("U", node), up[node])

    down = {topo.root: _trivial_double(topo.root)}
    for node in topo.preorder():
        kids = topo.children[node]
        for k in kids:
            envs = [down[node]] + [up[c] for c in kids if c != k]
            down[k] = _double_env(state[node], op[node], envs, ws)
            ws.hold(("D", k), down[k])
        ws.drop(*[("U", c) for c in kids])

    new = {}
    proj: dict = {}
    for node in topo.postorder():
        kids = topo.children[node]
        m = local_product(state[node], op[node], [proj.pop(c) for c in kids], ws)
        ws.drop(*[("P", c) for c in kids])
        if node == topo.root:
            new[node] = contract(m, Tensor(np.ones(1), [beta(node)]), [(beta(node), beta(node))])
            ws.hold(("T", node), new[node])
            continue
        rho = contract_shared(m, down[node])
        ws.sample(m, rho)
        rho = contract_shared(rho, _bra_layer(m, keep_out_open=True))
        ws.sample(m, rho)
        rows = [phys_out(node)] + [res(c) for c in kids]
        q, kept, dw = _eig_truncate(rho, rows, cfg, res(node))
        ws.discarded[node] = dw
        ws.spectra[node] = kept
        new[node] = q
        proj[node] = contract_shared(q.conj(), m)
        ws.hold(("T", node), q)
        ws.hold(("P", node), proj[node])
        ws.drop(("D", node))
    return ws.report(finish_state(topo, new))
