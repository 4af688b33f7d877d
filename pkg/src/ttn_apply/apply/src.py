"""Successive randomized compression (SRC) on trees.

Every site draws one Gaussian matrix on its output physical leg. All sketch
environments share a single batch index, so the per-site matrices combine as
a Khatri-Rao product: sketches of disjoint parts of the network are
multiplied elementwise in that index instead of being summed over. The
sketched environments follow the same up/down schedule as CBC and then
drive the same leaves-to-root range-finding pass, with the sketch taking the
place of the compressed environment.
"""

from __future__ import annotations

import string

import numpy as np

from ..tensor import CHI, LegId, Tensor, check_budget, TruncationConfig, contract, contract_shared, qr, svd_trunc
from ..tree import TTNO, TTNS, alpha, beta, phys_out
from ._common import ApplyReport, Workspace, check_inputs, finish_state, local_product, needs_up_env, res

SKETCH = LegId(CHI, "sketch", 4)
DEFAULT_RETRIES = 3


class SketchError(RuntimeError):
    """The random sketch carries no usable information (non-finite or identically zero)."""


def hadamard_contract(a: Tensor, b: Tensor, batch: LegId = SKETCH) -> Tensor:
    """Contract the shared legs of ``a`` and ``b`` except ``batch``, which is kept elementwise."""
    letters = iter(string.ascii_letters)
    names = {leg: next(letters) for leg in dict.fromkeys(a.legs + b.legs)}
    shared = set(a.legs) & set(b.legs)
    out = [leg for leg in a.legs if leg not in shared or leg == batch]
    out += [leg for leg in b.legs if leg not in shared or (leg == batch and batch not in a.legs)]
    spec = "{},{}->{}".format(
        "".join(names[l] for l in a.legs), "".join(names[l] for l in b.legs), "".join(names[l] for l in out)
    )
    check_budget([(a.shape_of() | b.shape_of())[leg] for leg in out])
    return Tensor(np.einsum(spec, a.data, b.data, optimize=True), out)


def _draw_sketches(topo, width: int, rng: np.random.Generator) -> dict:
    out = {}
    for node in topo.preorder():
        shape = (topo.phys_dim[node], width)
        g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        out[node] = Tensor(g, [phys_out(node), SKETCH])
    return out


def _sketch_env(state_t, op_t, omega, envs, ws: Workspace) -> Tensor:
    """Same contraction order as ``local_product``, with the sketch applied right after the operator."""
    x = state_t
    envs = list(envs)
    if envs:
        x = hadamard_contract(x, envs[0])
        ws.sample(x)
    x = hadamard_contract(x, op_t)
    ws.sample(x)
    x = hadamard_contract(x, omega)
    ws.sample(x)
    for env in envs[1:]:
        x = hadamard_contract(x, env)
        ws.sample(x)
    return x


def _check(t: Tensor, node):
    if not np.all(np.isfinite(t.data)) or not np.any(t.data):
        raise SketchError(f"degenerate sketch at node {node!r}")


def _src_once(op: TTNO, state: TTNS, cfg: TruncationConfig, width: int, rng) -> ApplyReport:
    topo = state.topology
    ws = Workspace("src")
    omega = _draw_sketches(topo, width, rng)
    need_up = needs_up_env(topo)

    up: dict = {}
    for node in topo.postorder():
        if node in need_up:
            up[node] = _sketch_env(state[node], op[node], omega[node], [up[c] for c in topo.children[node]], ws)
            ws.hold(("U", node), up[node])

    root = topo.root
    down = {root: Tensor(np.ones((width, 1, 1)), [SKETCH, alpha(root), beta(root)])}
    for node in topo.preorder():
        kids = topo.children[node]
        for k in kids:
            envs = [down[node]] + [up[c] for c in kids if c != k]
            down[k] = _sketch_env(state[node], op[node], omega[node], envs, ws)
            ws.hold(("D", k), down[k])
        ws.drop(*[("U", c) for c in kids])

    new = {}
    r_envs: dict = {}
    for node in topo.postorder():
        kids = topo.children[node]
        x = local_product(state[node], op[node], [r_envs.pop(c) for c in kids], ws)
        ws.drop(*[("R", c) for c in kids])
        if node == root:
            new[node] = contract(x, Tensor(np.ones(1), [beta(node)]), [(beta(node), beta(node))])
            ws.hold(("T", node), new[node])
            continue
        y = contract_shared(x, down[node])
        ws.sample(x, y)
        if np.any(x.data):
            _check(y, node)
        if width > cfg.max_dim or cfg.tol > 0.0:
            rows = [leg for leg in y.legs if leg != SKETCH]
            q, _, _, dw = svd_trunc(y, rows, cfg, bond=res(node))
            ws.discarded[node] = dw
        else:
            q, _ = qr(y, SKETCH, new=res(node))
            q = q.transpose([leg for leg in q.legs if leg != res(node)] + [res(node)])
        r_envs[node] = contract_shared(q.conj(), x)
        new[node] = q
        ws.sample(x, y, q, r_envs[node])
        ws.hold(("T", node), q)
        ws.hold(("R", node), r_envs[node])
        ws.drop(("D", node))
    return ws.report(finish_state(topo, new))


def apply_src(
    op: TTNO,
    state: TTNS,
    cfg: TruncationConfig,
    rng=None,
    oversampling: int = 0,
    retries: int = DEFAULT_RETRIES,
) -> ApplyReport:
    """Randomized application; ``rng`` is a Generator or an integer seed (default 0).

    The sketch width is ``max_dim + oversampling``; with oversampling the
    sketched range is cut back to ``max_dim`` by an SVD. A degenerate sketch
    is redrawn from the same generator up to ``retries`` times.
    """
    check_inputs(op, state)
    if oversampling < 0:
        raise ValueError("oversampling must be nonnegative")
    rng = np.random.default_rng(0 if rng is None else rng)
    width = cfg.max_dim + oversampling
    for attempt in range(retries + 1):
        try:
            return _src_once(op, state, cfg, width, rng)
        except SketchError:
            if attempt == retries:
                raise
    raise AssertionError("unreachable")
