"""Benchmark orchestration: random-instance sweeps, circuit sweeps and result files.

Seeds: every plan has one master seed. A cell's instance is drawn from
``SeedSequence(master, spawn_key=(seed,))`` and a method's own randomness
(SRC sketches) from ``spawn_key=(seed, method index, D̄)``, so any single
cell can be rerun in isolation.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .apply import METHODS, ApplyMethod, apply, contract_exact
from .circuit import STRUCTURES as CIRCUIT_STRUCTURES
from .circuit import SimConfig, simulate
from .tensor import EntryBudgetExceeded, TruncationConfig, entry_budget
from .tree import (
    GENERATORS,
    MAX_DENSE_OP_SIDE,
    applied_norm_sq,
    distance,
    expectation,
    make_structure,
    norm,
    random_ttno,
    random_ttns,
    to_dense,
    to_dense_op,
)

DEFAULT_MAX_ENTRIES = 10**8
REFERENCES = ("auto", "dense", "exact", "sandwich")
STATUS_OK = "ok"


@dataclass
class BenchRecord:
    """One measurement. ``status`` is ``ok`` or ``failed: <reason>``; failed rows carry NaN metrics.

    Circuit rows use ``L`` for the qubit count, ``D_S = 1`` for the product
    input and ``D_O = 2``, the operator Schmidt rank of each gate.
    """

    experiment: str
    structure: str
    method: str
    D_S: int
    D_O: int
    Dbar: int
    d: int
    L: int
    N: int
    seed: int
    rel_error: float
    wall_time_seconds: float
    peak_entries: int
    status: str = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    def key(self) -> tuple:
        return (self.experiment, self.structure, self.seed, METHODS.index(self.method), self.Dbar)


FIELDS = [f.name for f in fields(BenchRecord)]


@dataclass
class BenchPlan:
    experiment: str
    structures: list
    dbars: list
    methods: list
    seeds: list
    out: str | None = None
    L: int = 6
    d: int = 2
    D_S: int = 2
    D_O: int = 2
    n_batches: int = 1
    master_seed: int = 0
    reference: str = "auto"
    oversampling: int = 0
    fudge: float = 1.0
    max_entries: int | None = DEFAULT_MAX_ENTRIES
    serial_timing: bool = False

    def __post_init__(self):
        if self.experiment not in ("random", "circuit"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        for name in ("structures", "dbars", "methods", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"plan needs a nonempty {name} list")
        known = CIRCUIT_STRUCTURES if self.experiment == "circuit" else tuple(GENERATORS)
        for s in self.structures:
            if s not in known:
                raise ValueError(f"unknown structure {s!r} for the {self.experiment} experiment")
        for m in self.methods:
            ApplyMethod(m)
        if any(int(D) < 1 for D in self.dbars):
            raise ValueError("bond dimensions must be positive")
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown reference {self.reference!r}")

    def method(self, name: str) -> ApplyMethod:
        return ApplyMethod(name, oversampling=self.oversampling, fudge=self.fudge)


def worker_count(serial: bool = False) -> int:
    if serial:
        return 1
    raw = os.environ.get("TTN_APPLY_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, min(4, os.cpu_count() or 1))


def _cell_rng(master: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key)))


def _failure(exc: BaseException) -> str:
    kind = "out of memory" if isinstance(exc, MemoryError) else type(exc).__name__
    return f"failed: {kind}: {exc}".replace("\n", " ")


def _run_cells(cells, run, workers: int) -> list:
    if workers <= 1:
        out = [run(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(run, cells))
    return sorted(out, key=BenchRecord.key)


# ---------------------------------------------------------------------------
# random operators on random states


class _Reference:
    """Exact ``O|psi>`` in whichever form the instance size allows."""

    def __init__(self, op, state, mode: str):
        topo = state.topology
        if mode == "auto":
            mode = "dense" if topo.total_phys_dim() <= MAX_DENSE_OP_SIDE else "exact"
        self.mode = mode
        self.op, self.state = op, state
        if mode == "dense":
            self.vec = to_dense_op(op, max_side=topo.total_phys_dim()) @ to_dense(state, max_size=topo.total_phys_dim())
            self.scale = float(np.linalg.norm(self.vec))
        elif mode == "exact":
            self.exact = contract_exact(op, state)
            self.scale = norm(self.exact)
        else:
            self.sq = applied_norm_sq(op, state)
            self.scale = math.sqrt(max(self.sq, 0.0))

    def rel_error(self, result) -> float:
        if self.mode == "dense":
            diff = to_dense(result, max_size=result.topology.total_phys_dim()) - self.vec
            err = float(np.linalg.norm(diff))
        elif self.mode == "exact":
            err = distance(result, self.exact)
        else:
            cross = expectation(result, self.op, self.state).real
            err = math.sqrt(max(norm(result) ** 2 - 2.0 * cross + self.sq, 0.0))
        return err / self.scale if self.scale > 0 else err


def _make_reference(op, state, mode: str, budget) -> _Reference:
    """Dense or exact reference, falling back to inner products when the exact network is too big."""
    try:
        with entry_budget(budget):
            return _Reference(op, state, mode)
    except MemoryError:
        if mode not in ("auto", "exact"):
            raise
        return _Reference(op, state, "sandwich")


def random_instance(plan: BenchPlan, structure: str, seed: int):
    rng = _cell_rng(plan.master_seed, seed)
    topo = make_structure(structure, plan.L, plan.d)
    state = random_ttns(topo, plan.D_S, rng)
    op = random_ttno(topo, plan.D_O, rng)
    return op, state


def run_random_bench(plan: BenchPlan) -> list:
    """One record per (structure, seed, method, D̄); the reference is built once per instance."""
    records = []
    for structure in plan.structures:
        for seed in plan.seeds:
            op, state = random_instance(plan, structure, seed)
            ref = _make_reference(op, state, plan.reference, plan.max_entries)
            cells = [(m, int(D)) for m in plan.methods for D in plan.dbars]

            def run(cell, structure=structure, seed=seed, op=op, state=state, ref=ref):
                m, D = cell
                base = dict(
                    experiment="random", structure=structure, method=m,
                    D_S=plan.D_S, D_O=plan.D_O, Dbar=D, d=plan.d, L=plan.L, N=1, seed=seed,
                )
                rng = _cell_rng(plan.master_seed, seed, METHODS.index(m), D)
                try:
                    with entry_budget(plan.max_entries):
                        t0 = time.perf_counter()
                        rep = apply(plan.method(m), op, state, TruncationConfig(D), rng=rng)
                        wall = time.perf_counter() - t0
                    err = ref.rel_error(rep.result)
                except (MemoryError, EntryBudgetExceeded) as exc:
                    return BenchRecord(**base, rel_error=math.nan, wall_time_seconds=math.nan,
                                       peak_entries=0, status=_failure(exc))
                return BenchRecord(**base, rel_error=err, wall_time_seconds=wall, peak_entries=rep.peak_entry_count)

            records.extend(_run_cells(cells, run, worker_count(plan.serial_timing)))
    return sorted(records, key=BenchRecord.key)


# ---------------------------------------------------------------------------
# circuits


def run_circuit_bench(plan: BenchPlan) -> list:
    """``Err = ‖ψ0 − U U† ψ0‖`` per (structure, seed, method, D̄); ``L`` is the qubit count."""
    cells = [(s, seed, m, int(D)) for s in plan.structures for seed in plan.seeds for m in plan.methods for D in plan.dbars]

    def run(cell):
        structure, seed, m, D = cell
        base = dict(
            experiment="circuit", structure=structure, method=m, D_S=1, D_O=2, Dbar=D, d=2,
            L=plan.L, N=plan.n_batches, seed=seed,
        )
        cfg = SimConfig(plan.L, plan.n_batches, plan.method(m), TruncationConfig(D), structure, seed=seed)
        try:
            with entry_budget(plan.max_entries):
                res = simulate(cfg)
        except (MemoryError, EntryBudgetExceeded) as exc:
            return BenchRecord(**base, rel_error=math.nan, wall_time_seconds=math.nan,
                               peak_entries=0, status=_failure(exc))
        return BenchRecord(**base, rel_error=res.err, wall_time_seconds=res.wall_time, peak_entries=res.peak_entries)

    return _run_cells(cells, run, worker_count(plan.serial_timing))


def run_plan(plan: BenchPlan) -> list:
    records = run_random_bench(plan) if plan.experiment == "random" else run_circuit_bench(plan)
    if plan.out:
        emit(records, plan.out)
    return records


# ---------------------------------------------------------------------------
# result files


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def json_path_for(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json") if path.suffix != ".json" else path.with_suffix(".mirror.json")


def emit(records, path) -> tuple:
    """Write ``path`` as CSV and a JSON mirror next to it; returns both paths."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in FIELDS])
    mirror = json_path_for(path)
    doc = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(r).items()} for r in records]
    mirror.write_text(json.dumps(doc, indent=1))
    return path, mirror


def load_records_json(path) -> list:
    out = []
    for row in json.loads(Path(path).read_text()):
        row = {k: (math.nan if v is None else v) for k, v in row.items()}
        out.append(BenchRecord(**row))
    return out


def load_records_csv(path) -> list:
    types = {f.name: f.type for f in fields(BenchRecord)}
    conv = {"int": int, "float": float, "str": str}
    out = []
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            out.append(BenchRecord(**{k: conv[types[k]](v) for k, v in row.items()}))
    return out


def mean_errors(records, ok_only: bool = True) -> dict:
    """``{(structure, method, Dbar): mean rel_error}`` over seeds."""
    acc: dict = {}
    for r in records:
        if ok_only and not r.ok:
            continue
        acc.setdefault((r.structure, r.method, r.Dbar), []).append(r.rel_error)
    return {k: float(np.mean(v)) for k, v in acc.items()}


@dataclass
class SelftestCase:
    method: str
    structure: str
    rel_error: float
    passed: bool = field(default=False)


def selftest(tol: float = 1e-8) -> list:
    """Dense-oracle exactness of every method on the four small topologies."""
    shapes = {"chain": 6, "t-tree": 1, "balanced-binary": 2, "ftps": 2}
    out = []
    for structure, L in shapes.items():
        plan = BenchPlan("random", [structure], [4], list(METHODS), [0], L=L, d=2, D_S=2, D_O=2, reference="dense")
        for r in run_random_bench(plan):
            out.append(SelftestCase(r.method, structure, r.rel_error, r.ok and r.rel_error < tol))
    return out
