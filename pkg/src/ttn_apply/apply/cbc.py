"""Cholesky based compression (CBC).

Only the factor ``M`` of every local Gram tensor ``G = M^dagger M`` is
formed. Each environment is truncated right away on the leg that would
connect to the adjoint, the isometric part of the truncation is dropped, and
the compressed environments then drive a QR sweep from the leaves to the
root that yields the new network.
"""

from __future__ import annotations

from ..tensor import CHI, Tensor, TruncationConfig, contract_shared, qr, svd_trunc
from ..tree import TTNO, TTNS, TopologyError, alpha, beta, phys_out
from ._common import (
    ApplyReport,
    Workspace,
    assert_isometry,
    check_inputs,
    chi_down,
    chi_up,
    finish_state,
    local_product,
    needs_up_env,
    res,
    trivial_env,
)


def _compress(x: Tensor, node, edge, out_leg, cfg: TruncationConfig, ws: Workspace | None):
    """Truncate the combined ``(σ', χ...)`` leg of ``x`` against the edge legs of ``edge``.

    Returns the environment ``S · V`` on ``(out_leg, alpha(edge), beta(edge))``
    and the discarded weight.
    """
    rows = [phys_out(node)] + [leg for leg in x.legs if leg.kind == CHI]
    u, s, v, dw = svd_trunc(x, rows, cfg, bond=out_leg)
    # the dropped factor is cancelled by its adjoint later only if it is an isometry
    assert_isometry(u, out_leg, f"dropped factor on edge {edge!r}")
    env = Tensor(s.reshape((-1,) + (1,) * (v.data.ndim - 1)) * v.data, v.legs)
    env = env.transpose([out_leg, alpha(edge), beta(edge)])
    if ws is not None:
        ws.sample(x, u, v)
    return env, dw


def cbc_left_env_tt(prev: Tensor, op_tensor: Tensor, state_tensor: Tensor, cfg: TruncationConfig, ws=None):
    """One step of the left sweep on a tensor train.

    ``prev`` is the environment on the site's left bond (the trivial
    extent-1 tensor at the first site). Returns ``(env, discarded_weight)``
    where ``env`` lives on the site's right bond.
    """
    site = next(leg.site for leg in state_tensor.legs if leg.kind == "phys")
    right = [leg.site for leg in state_tensor.legs if leg.kind == "alpha" and leg not in prev.legs]
    if len(right) != 1:
        raise TopologyError(f"site {site!r} is not an inner tensor-train site for this environment")
    x = local_product(state_tensor, op_tensor, [prev], ws)
    return _compress(x, site, right[0], chi_down(right[0]), cfg, ws)


def cbc_up_env_tree(site, child_envs, op_tensor: Tensor, state_tensor: Tensor, cfg: TruncationConfig, ws=None):
    """Environment of ``subtree(site)``, compressed on the edge above ``site``.

    ``child_envs`` must hold one environment per child, in child order.
    """
    kids = [leg.site for leg in state_tensor.legs if leg.kind == "alpha" and leg.site != site]
    have = [env.legs[0].site for env in child_envs]
    if sorted(map(repr, have)) != sorted(map(repr, kids)):
        raise TopologyError(f"site {site!r} needs environments for children {kids}, got {have}")
    x = local_product(state_tensor, op_tensor, child_envs, ws)
    return _compress(x, site, site, chi_up(site), cfg, ws)


def cbc_down_env_tree(site, parent_env, sibling_envs, op_tensor, state_tensor, child_k, cfg, ws=None):
    """Environment of everything outside ``subtree(child_k)``, compressed on its edge.

    ``parent_env`` covers everything outside ``subtree(site)``; at the root it
    is the trivial extent-1 environment. ``sibling_envs`` are the subtree
    environments of the other children of ``site``.
    """
    if parent_env is None:
        raise TopologyError(f"missing parent environment at {site!r}")
    kids = [leg.site for leg in state_tensor.legs if leg.kind == "alpha" and leg.site != site]
    if child_k not in kids:
        raise TopologyError(f"{child_k!r} is not a child of {site!r}")
    if len(sibling_envs) != len(kids) - 1:
        raise TopologyError(f"site {site!r} needs {len(kids) - 1} sibling environments")
    x = local_product(state_tensor, op_tensor, [parent_env, *sibling_envs], ws)
    return _compress(x, site, child_k, chi_down(child_k), cfg, ws)


def _project_site(node, is_root, state_t, op_t, child_rs, down_env, ws: Workspace):
    """Form the site tensor, split off its isometry and build the projected environment.

    Returns ``(new_tensor, r_env)``; ``r_env`` is ``None`` at the root.
    """
    x = local_product(state_t, op_t, child_rs, ws)
    s = contract_shared(x, down_env)
    ws.sample(x, s)
    ws.log("S", node, s)
    if is_root:
        return s, None
    q, _ = qr(s, chi_down(node), new=res(node))
    ws.log("Q", node, q)
    r_env = contract_shared(q.conj(), x)
    ws.sample(x, s, q, r_env)
    ws.log("R", node, r_env)
    return q, r_env


def cbc_sweep_tt(op: TTNO, state: TTNS, cfg: TruncationConfig, record_trace: bool = False) -> ApplyReport:
    """CBC on a tensor train rooted at its first site."""
    check_inputs(op, state)
    topo = state.topology
    if any(len(kids) > 1 for kids in topo.children.values()):
        raise TopologyError("cbc_sweep_tt needs a chain topology")
    ws = Workspace("cbc", record_trace)
    sites = topo.preorder()

    left = {sites[0]: trivial_env(sites[0], chi_down(sites[0]))}
    for i, nxt in zip(sites[:-1], sites[1:]):
        left[nxt], ws.discarded[nxt] = cbc_left_env_tt(left[i], op[i], state[i], cfg, ws)
        ws.hold(("L", nxt), left[nxt])
        ws.log("L", nxt, left[nxt])

    new = {}
    right = []
    for k, i in reversed(list(enumerate(sites))):
        t, r_env = _project_site(i, k == 0, state[i], op[i], right, left[i], ws)
        new[i] = t
        ws.hold(("T", i), t)
        ws.drop(("L", i), ("R", sites[k + 1] if k + 1 < len(sites) else None))
        right = [] if r_env is None else [r_env]
        if r_env is not None:
            ws.hold(("R", i), r_env)
    return ws.report(finish_state(topo, new))


def cbc_apply_tree(op: TTNO, state: TTNS, cfg: TruncationConfig, record_trace: bool = False) -> ApplyReport:
    """CBC on an arbitrary rooted tree.

    Three passes: subtree environments from the leaves up (only where a
    sibling needs them), outside environments from the root down, then the
    site/QR/projection pass from the leaves to the root.
    """
    check_inputs(op, state)
    topo = state.topology
    ws = Workspace("cbc", record_trace)
    need_up = needs_up_env(topo)

    up: dict = {}
    for node in topo.postorder():
        if node not in need_up:
            continue
        envs = [up[c] for c in topo.children[node]]
        up[node], _ = cbc_up_env_tree(node, envs, op[node], state[node], cfg, ws)
        ws.hold(("U", node), up[node])
        ws.log("U", node, up[node])

    down = {topo.root: trivial_env(topo.root, chi_down(topo.root))}
    for node in topo.preorder():
        kids = topo.children[node]
        for k in kids:
            siblings = [up[c] for c in kids if c != k]
            down[k], ws.discarded[k] = cbc_down_env_tree(
                node, down[node], siblings, op[node], state[node], k, cfg, ws
            )
            ws.hold(("L", k), down[k])
            ws.log("L", k, down[k])
        for c in kids:
            ws.drop(("U", c))

    new = {}
    r_envs: dict = {}
    for node in topo.postorder():
        kids = topo.children[node]
        t, r_env = _project_site(
            node, node == topo.root, state[node], op[node], [r_envs.pop(c) for c in kids], down[node], ws
        )
        new[node] = t
        ws.hold(("T", node), t)
        ws.drop(("L", node), *[("R", c) for c in kids])
        if r_env is not None:
            r_envs[node] = r_env
            ws.hold(("R", node), r_env)
    return ws.report(finish_state(topo, new))


def apply_cbc(op: TTNO, state: TTNS, cfg: TruncationConfig, record_trace: bool = False) -> ApplyReport:
    return cbc_apply_tree(op, state, cfg, record_trace)

