"""Operator-times-state with compression: direct, DMC, Zip-Up, SRC and CBC."""

from __future__ import annotations

from dataclasses import dataclass

from ..tensor import TruncationConfig
from ..tree import TTNO, TTNS
from ._common import ApplyReport
from .cbc import apply_cbc, cbc_apply_tree, cbc_down_env_tree, cbc_left_env_tt, cbc_sweep_tt, cbc_up_env_tree
from .direct import apply_direct, contract_exact, truncate_sweep
from .dmc import apply_dmc
from .src import SketchError, apply_src
from .zipup import apply_zipup

METHODS = ("direct", "dmc", "zipup", "src", "cbc")


@dataclass(frozen=True)
class ApplyMethod:
    """A method name plus its knobs.

    ``oversampling`` (src) is the number of extra sketch columns, ``fudge``
    (zipup) scales the bond dimension kept during the sweep and
    ``canonical`` (zipup) gauges the state before sweeping.
    """

    name: str
    oversampling: int = 0
    fudge: float = 1.0
    canonical: bool = True

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; expected one of {', '.join(METHODS)}")
        if self.oversampling < 0:
            raise ValueError("oversampling must be nonnegative")
        if self.fudge < 1.0:
            raise ValueError("fudge must be at least 1")


def apply(method, op: TTNO, state: TTNS, cfg: TruncationConfig, rng=None) -> ApplyReport:
    """Apply ``op`` to ``state`` with ``method`` (an ApplyMethod or a method name)."""
    if isinstance(method, str):
        method = ApplyMethod(method)
    if method.name == "direct":
        return apply_direct(op, state, cfg)
    if method.name == "dmc":
        return apply_dmc(op, state, cfg)
    if method.name == "zipup":
        return apply_zipup(op, state, cfg, fudge=method.fudge, canonical=method.canonical)
    if method.name == "src":
        return apply_src(op, state, cfg, rng=rng, oversampling=method.oversampling)
    return apply_cbc(op, state, cfg)


__all__ = [
    "METHODS",
    "ApplyMethod",
    "ApplyReport",
    "SketchError",
    "apply",
    "apply_cbc",
    "apply_direct",
    "apply_dmc",
    "apply_src",
    "apply_zipup",
    "cbc_apply_tree",
    "cbc_down_env_tree",
    "cbc_left_env_tt",
    "cbc_sweep_tt",
    "cbc_up_env_tree",
    "contract_exact",
    "truncate_sweep",
]
