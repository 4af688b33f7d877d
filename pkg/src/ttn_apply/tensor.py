"""Dense complex tensors with named legs.

Every tensor stores a ``numpy`` array in row-major layout over its leg order.
Legs are addressed by :class:`LegId`, never by position, so contractions and
decompositions are written in terms of leg names only.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass
from typing import Hashable, Iterable, NamedTuple, Sequence

import numpy as np
import scipy.linalg

DTYPE = np.complex128


class LegId(NamedTuple):
    """Name of one tensor leg.

    ``kind`` is one of :data:`LEG_KINDS`; ``site`` is a node id; ``slot``
    disambiguates several legs of the same kind on the same site. Virtual
    legs are named after the child end of their edge with slot 0, so both
    tensors on an edge carry the same leg id.
    """

    kind: str
    site: Hashable
    slot: int = 0


PHYS_OUT = "phys_out"
PHYS = "phys"
ALPHA = "alpha"
BETA = "beta"
CHI = "chi"
LEG_KINDS = (PHYS_OUT, PHYS, ALPHA, BETA, CHI)

_ENTRY_LIMIT: contextvars.ContextVar = contextvars.ContextVar("entry_limit", default=None)


class EntryBudgetExceeded(MemoryError):
    """A single tensor would exceed the active entry budget."""


@contextlib.contextmanager
def entry_budget(limit: int | None):
    """Refuse to allocate any contraction result with more than ``limit`` entries."""
    token = _ENTRY_LIMIT.set(limit)
    try:
        yield
    finally:
        _ENTRY_LIMIT.reset(token)


def check_budget(shape) -> None:
    limit = _ENTRY_LIMIT.get()
    if limit is not None:
        n = int(np.prod([int(x) for x in shape], dtype=float))
        if n > limit:
            raise EntryBudgetExceeded(f"tensor of {n} entries exceeds the budget of {limit}")


class TensorError(ValueError):
    """Raised for leg mismatches, unknown legs and inconsistent shapes."""


class Tensor:
    """A dense complex array whose axes are labelled by unique leg ids."""

    __slots__ = ("data", "legs")

    def __init__(self, data, legs: Sequence[Hashable]):
        data = np.asarray(data, dtype=DTYPE)
        legs = tuple(legs)
        if data.ndim != len(legs):
            raise TensorError(f"{data.ndim}-dimensional data given {len(legs)} legs")
        if len(set(legs)) != len(legs):
            raise TensorError(f"duplicate leg ids in {legs}")
        self.data = data
        self.legs = legs

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def dim(self, leg) -> int:
        return self.data.shape[self.axis(leg)]

    def axis(self, leg) -> int:
        try:
            return self.legs.index(leg)
        except ValueError:
            raise TensorError(f"unknown leg {leg!r}; tensor has {self.legs}") from None

    def shape_of(self) -> dict:
        return dict(zip(self.legs, self.data.shape))

    def conj(self) -> Tensor:
        return Tensor(self.data.conj(), self.legs)

    def relabel(self, mapping: dict) -> Tensor:
        """Rename legs; legs absent from ``mapping`` keep their name."""
        return Tensor(self.data, [mapping.get(leg, leg) for leg in self.legs])

    def transpose(self, legs: Sequence[Hashable]) -> Tensor:
        legs = tuple(legs)
        if len(legs) != len(self.legs) or set(legs) != set(self.legs):
            raise TensorError(f"cannot reorder {self.legs} into {legs}")
        perm = [self.axis(leg) for leg in legs]
        if perm == list(range(len(perm))):
            return self
        return Tensor(np.ascontiguousarray(self.data.transpose(perm)), legs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data.ravel()))

    def __add__(self, other: Tensor) -> Tensor:
        other = other.transpose(self.legs)
        return Tensor(self.data + other.data, self.legs)

    def __mul__(self, scalar) -> Tensor:
        return Tensor(self.data * scalar, self.legs)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        inner = ", ".join(f"{leg}:{n}" for leg, n in zip(self.legs, self.dims))
        return f"Tensor({inner})"


@dataclass(frozen=True)
class TruncationConfig:
    """Target bond dimension plus an optional relative singular-value cutoff.

    A singular value ``s_k`` survives when ``k < max_dim`` and
    ``s_k > tol * s_0``; the kept rank is the smaller of the two counts.
    """

    max_dim: int
    tol: float = 0.0

    def __post_init__(self):
        if int(self.max_dim) != self.max_dim or self.max_dim < 1:
            raise ValueError(f"max_dim must be a positive integer, got {self.max_dim}")
        if not 0.0 <= self.tol < 1.0:
            raise ValueError(f"tol must lie in [0, 1), got {self.tol}")

    def keep(self, s: np.ndarray) -> int:
        """Number of leading entries of the nonincreasing ``s`` to keep."""
        n = min(len(s), self.max_dim)
        if self.tol > 0.0 and n > 0:
            n = min(n, int(np.count_nonzero(s > self.tol * s[0])))
            n = max(n, 1)
        return max(n, 1) if len(s) else 0

    def scaled(self, factor: float) -> TruncationConfig:
        return TruncationConfig(max(1, int(np.ceil(factor * self.max_dim))), self.tol)


def contract(a: Tensor, b: Tensor, pairs: Iterable[tuple]) -> Tensor:
    """Sum over each ``(leg_of_a, leg_of_b)`` pair.

    The result carries the unpaired legs of ``a`` followed by those of ``b``,
    each in their original order.
    """
    pairs = list(pairs)
    axes_a = [a.axis(la) for la, _ in pairs]
    axes_b = [b.axis(lb) for _, lb in pairs]
    for (la, lb), ia, ib in zip(pairs, axes_a, axes_b):
        if a.dims[ia] != b.dims[ib]:
            raise TensorError(
                f"extent mismatch contracting {la!r} ({a.dims[ia]}) with {lb!r} ({b.dims[ib]})"
            )
    paired_a = {la for la, _ in pairs}
    paired_b = {lb for _, lb in pairs}
    free = [leg for leg in a.legs if leg not in paired_a] + [
        leg for leg in b.legs if leg not in paired_b
    ]
    if len(set(free)) != len(free):
        raise TensorError(f"contraction would produce duplicate legs {free}")
    out_a = [n for i, n in enumerate(a.dims) if i not in axes_a]
    check_budget(out_a + [n for i, n in enumerate(b.dims) if i not in axes_b])
    data = np.tensordot(a.data, b.data, axes=(axes_a, axes_b))
    return Tensor(data, free)


def contract_shared(a: Tensor, b: Tensor) -> Tensor:
    """Contract every leg id that appears on both tensors."""
    shared = [leg for leg in a.legs if leg in b.legs]
    return contract(a, b, [(leg, leg) for leg in shared])


def fuse(t: Tensor, group: Sequence[Hashable], new) -> Tensor:
    """Combine ``group`` (in the given order) into one leg named ``new``.

    The fused leg sits where the first group leg was; the other legs keep their
    relative order. Its index runs row-major over the group legs.
    """
    group = list(group)
    if not group:
        raise TensorError("cannot fuse an empty group")
    for leg in group:
        t.axis(leg)
    first = t.axis(group[0])
    rest = [leg for leg in t.legs if leg not in group]
    before = [leg for leg in t.legs[:first] if leg not in group]
    after = [leg for leg in rest if leg not in before]
    moved = t.transpose(before + group + after)
    extent = int(np.prod([t.dim(leg) for leg in group]))
    shape = [t.dim(leg) for leg in before] + [extent] + [t.dim(leg) for leg in after]
    return Tensor(moved.data.reshape(shape), before + [new] + after)


def split(t: Tensor, leg, parts: Sequence[tuple]) -> Tensor:
    """Inverse of :func:`fuse`: replace ``leg`` by ``parts = [(leg_id, extent), ...]``."""
    ax = t.axis(leg)
    extents = [int(n) for _, n in parts]
    if int(np.prod(extents)) != t.dims[ax]:
        raise TensorError(f"parts {extents} do not multiply to extent {t.dims[ax]} of {leg!r}")
    shape = t.dims[:ax] + tuple(extents) + t.dims[ax + 1 :]
    legs = t.legs[:ax] + tuple(p for p, _ in parts) + t.legs[ax + 1 :]
    return Tensor(t.data.reshape(shape), legs)


def _as_matrix(t: Tensor, row_legs: Sequence[Hashable]):
    row_legs = list(row_legs)
    for leg in row_legs:
        t.axis(leg)
    col_legs = [leg for leg in t.legs if leg not in row_legs]
    if not row_legs or not col_legs:
        raise TensorError("row legs must be a nonempty proper subset of the tensor legs")
    moved = t.transpose(row_legs + col_legs)
    nrow = int(np.prod(moved.dims[: len(row_legs)]))
    return moved.data.reshape(nrow, -1), row_legs, col_legs, moved.dims


def _svd(mat: np.ndarray):
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but robust
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def svd_trunc(
    t: Tensor,
    row_legs: Sequence[Hashable],
    cfg: TruncationConfig,
    bond=LegId(CHI, None, 0),
):
    """Truncated singular value decomposition ``t ≈ U · diag(S) · V``.

    Returns:
        ``(U, S, V, discarded_weight)``. ``U`` carries ``row_legs`` then
        ``bond``; ``V`` carries ``bond`` then the remaining legs; ``S`` is a
        real nonincreasing vector; ``discarded_weight`` is the sum of the
        squared dropped singular values.
    """
    mat, row_legs, col_legs, dims = _as_matrix(t, row_legs)
    u, s, vh = _svd(mat)
    k = cfg.keep(s)
    discarded = float(np.sum(s[k:] ** 2))
    nr = len(row_legs)
    U = Tensor(u[:, :k].reshape(dims[:nr] + (k,)), row_legs + [bond])
    V = Tensor(vh[:k].reshape((k,) + dims[nr:]), [bond] + col_legs)
    return U, s[:k].copy(), V, discarded


def qr(t: Tensor, r_leg, new=LegId(CHI, None, 1)):
    """Factor ``t = R · Q`` with ``Q`` isometric over all legs but ``r_leg``.

    ``R`` has legs ``(r_leg, new)`` and a nonnegative real diagonal; ``Q`` has
    ``new`` followed by the remaining legs of ``t`` in order, and satisfies
    ``sum_rest Q[n, rest] conj(Q[m, rest]) = delta(n, m)``.
    """
    rest = [leg for leg in t.legs if leg != r_leg]
    t.axis(r_leg)
    if not rest:
        raise TensorError("qr needs at least one leg besides r_leg")
    mat, _, _, dims = _as_matrix(t, rest)
    q, r = np.linalg.qr(mat, mode="reduced")
    diag = np.diagonal(r)
    phase = np.ones_like(diag)
    nz = np.abs(diag) > 0
    phase[nz] = diag[nz] / np.abs(diag[nz])
    q = q * phase[np.newaxis, :]
    r = phase.conj()[:, np.newaxis] * r
    k = q.shape[1]
    Q = Tensor(q.T.reshape((k,) + dims[: len(rest)]), [new] + rest)
    R = Tensor(r.T, [r_leg, new])
    return Q, R


def isometry_error(t: Tensor, open_leg) -> float:
    """``|| Q Q^dagger - I ||_F`` where the sum runs over every leg except ``open_leg``."""
    rest = [leg for leg in t.legs if leg != open_leg]
    mat = t.transpose([open_leg] + rest).data.reshape(t.dim(open_leg), -1)
    gram = mat.conj() @ mat.T
    return float(np.linalg.norm(gram - np.eye(gram.shape[0])))


def random_tensor(dims: Sequence[int], rng: np.random.Generator, legs=None) -> Tensor:
    """Entries with real and imaginary parts drawn independently from U[-0.5, 1)."""
    dims = tuple(int(n) for n in dims)
    if any(n < 1 for n in dims):
        raise TensorError(f"dims must be positive, got {dims}")
    data = rng.uniform(-0.5, 1.0, size=dims) + 1j * rng.uniform(-0.5, 1.0, size=dims)
    if legs is None:
        legs = [LegId(CHI, "random", i) for i in range(len(dims))]
    return Tensor(data, legs)
