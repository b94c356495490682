"""Benchmark sweeps: paired method comparisons over seeded problem families.

A sweep is a grid of *cells* (family parameters x rtol). In every cell the
correction maps are trained on instances drawn from a separate index range,
then every method solves the same held-out instances. Runs that do not
converge are counted at ``max_iters`` in the summary statistics.
"""
from __future__ import annotations

import configparser
import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .correction import FourierDiagMap, OptimalScalarMap
from .families import CdrFamily, HelmholtzFamily, NewtonFamily
from .iterate import Format, IterationConfig, Termination, run
from .train import LossKind, TrainConfig, train_map

log = logging.getLogger(__name__)

METHODS = {
    "cbs": (Format.CBS, None),
    "direct-dir": (Format.DIRECT, LossKind.DIR),
    "npbs-bsl2": (Format.NPBS, LossKind.BSL2),
    "npbs-bsreta": (Format.NPBS, LossKind.BSRETA),
}
TRAIN_OFFSET = 1_000_000  # training instances use indices >= this; test indices start at 0

SAMPLE_HEADER = "cell,family,ppw,contrast,rtol,method,sample,iters,terminated,final_residual"
SUMMARY_HEADER = ("cell,family,ppw,contrast,rtol,method,n,converged,mean_iters,median_iters,"
                  "min_iters,max_iters,mean_final_residual,ratio")


def threads() -> int:
    """Worker count from ``BP_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("BP_THREADS", "1")))
    except ValueError:
        raise ValueError(f"BP_THREADS must be an integer, got {os.environ['BP_THREADS']!r}") from None


def _floats(text) -> list:
    return [float(t) for t in str(text).replace(",", " ").split()]


@dataclass
class BenchConfig:
    family: str = "helmholtz"
    methods: tuple = tuple(METHODS)
    samples: int = 20
    n: int = 64
    rtol: tuple = (1e-6,)
    max_iters: int = 1000
    ppw: tuple = (12.0,)
    contrast: tuple = (2.0,)
    train_instances: int = 8
    epochs: int = 100
    batch: int = 8
    step_size: float = 1.0

    def __post_init__(self):
        if self.family not in ("helmholtz", "cdr", "newton"):
            raise ValueError(f"unknown family {self.family!r}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {', '.join(METHODS)}")
        if self.samples < 1 or self.train_instances < 1:
            raise ValueError("samples and train_instances must be >= 1")

    @classmethod
    def from_ini(cls, path) -> "BenchConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise FileNotFoundError(path)
        return cls.from_parser(cp)

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "BenchConfig":
        b = cp["bench"] if cp.has_section("bench") else {}
        t = cp["train"] if cp.has_section("train") else {}
        kw = {}
        if "family" in b:
            kw["family"] = b["family"].strip()
        if "methods" in b:
            kw["methods"] = tuple(m.strip() for m in b["methods"].replace(",", " ").split())
        for key in ("samples", "n", "max_iters"):
            if key in b:
                kw[key] = int(b[key])
        for key in ("rtol", "ppw", "contrast"):
            if key in b:
                kw[key] = tuple(_floats(b[key]))
        for key, name in (("instances", "train_instances"), ("epochs", "epochs"), ("batch", "batch")):
            if key in t:
                kw[name] = int(t[key])
        if "step_size" in t:
            kw["step_size"] = float(t["step_size"])
        return cls(**kw)


@dataclass(frozen=True)
class Cell:
    index: int
    family: str
    ppw: float | None
    contrast: float | None
    rtol: float

    def build(self, config: BenchConfig):
        if self.family == "helmholtz":
            return HelmholtzFamily(n=config.n, ppw=self.ppw, contrast=self.contrast)
        if self.family == "cdr":
            return CdrFamily(n=config.n)
        return NewtonFamily(n=config.n if config.n % 2 else config.n - 1)

    def prefix(self) -> str:
        fmt = lambda v: "" if v is None else f"{v:g}"
        return f"{self.index},{self.family},{fmt(self.ppw)},{fmt(self.contrast)},{self.rtol:g}"


def cells(config: BenchConfig) -> list:
    if config.family == "helmholtz":
        grid = itertools.product(config.ppw, config.contrast, config.rtol)
    else:
        grid = ((None, None, r) for r in config.rtol)
    return [Cell(i, config.family, p, c, r) for i, (p, c, r) in enumerate(grid)]


@dataclass
class SampleResult:
    cell: Cell
    method: str
    sample: int
    iters: int
    terminated: str
    final: float

    def row(self) -> str:
        return (f"{self.cell.prefix()},{self.method},{self.sample},{self.iters},"
                f"{self.terminated},{self.final:.10e}")


@dataclass
class BenchResult:
    samples: list = field(default_factory=list)
    summary: list = field(default_factory=list)  # dict rows
    warnings: list = field(default_factory=list)
    losses: dict = field(default_factory=dict)  # (cell index, method) -> training losses

    def samples_csv(self) -> str:
        rows = sorted(self.samples, key=lambda s: (s.cell.index, s.method, s.sample))
        return "\n".join([SAMPLE_HEADER] + [s.row() for s in rows]) + "\n"

    def summary_csv(self) -> str:
        lines = [SUMMARY_HEADER]
        for r in self.summary:
            ratio = "" if r["ratio"] is None else f"{r['ratio']:.6f}"
            lines.append(
                f"{r['cell'].prefix()},{r['method']},{r['n']},{r['converged']},{r['mean']:.4f},"
                f"{r['median']:.1f},{r['min']},{r['max']},{r['final']:.10e},{ratio}"
            )
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "samples.csv"), "w") as fh:
            fh.write(self.samples_csv())
        with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
            fh.write(self.summary_csv())


def capped_iters(iters: int, terminated: str, max_iters: int) -> int:
    return iters if terminated == Termination.CONVERGED.value else max_iters


def train_cell_maps(family, config: BenchConfig, seed: int, methods) -> tuple:
    """Train one map per learned method on the cell's training instances."""
    problems = [family.sample(seed, TRAIN_OFFSET + i)[0] for i in range(config.train_instances)]
    tc = TrainConfig(epochs=config.epochs, batch=config.batch, step_size=config.step_size, seed=seed)
    maps, losses = {}, {}
    for m in methods:
        kind = METHODS[m][1]
        if kind is None:
            continue
        init = None
        if kind is LossKind.DIR:
            # Direct applies M to the raw residual, so start from the Green operator
            init = FourierDiagMap(1.0 / problems[0].symbol.values, problems[0].kind)
        res = train_map(kind, problems, tc, init=init)
        maps[m], losses[m] = res.cmap, res.losses
    return maps, losses


def solve_sample(problem, f, method: str, cmap, rtol: float, max_iters: int):
    fmt, _ = METHODS[method]
    cmap = OptimalScalarMap() if cmap is None else cmap
    _, trace = run(problem, cmap, f, IterationConfig(format=fmt, rtol=rtol, max_iters=max_iters))
    return trace


def _evaluate(cell, family, config, seed, maps, methods, index) -> list:
    out = []
    try:
        problem, f = family.sample(seed, index)
    except Exception as exc:  # instance generation failure is a partial failure of the cell
        log.error("cell %d sample %d: %s", cell.index, index, exc)
        return [SampleResult(cell, m, index, config.max_iters, "error", float("nan")) for m in methods]
    for m in methods:
        try:
            tr = solve_sample(problem, f, m, maps.get(m), cell.rtol, config.max_iters)
            out.append(SampleResult(cell, m, index, tr.iters, tr.terminated.value, tr.final))
        except Exception as exc:
            log.error("cell %d sample %d method %s: %s", cell.index, index, m, exc)
            out.append(SampleResult(cell, m, index, config.max_iters, "error", float("nan")))
    return out


def summarize(results, cell_list, methods, max_iters) -> list:
    rows = []
    for cell in cell_list:
        capped = {}
        for m in methods:
            rs = [r for r in results if r.cell == cell and r.method == m]
            its = np.array([capped_iters(r.iters, r.terminated, max_iters) for r in rs], dtype=float)
            capped[m] = its
            finals = np.array([r.final for r in rs])
            rows.append({
                "cell": cell, "method": m, "n": len(rs),
                "converged": sum(r.terminated == Termination.CONVERGED.value for r in rs),
                "mean": float(its.mean()), "median": float(np.median(its)),
                "min": int(its.min()), "max": int(its.max()),
                "final": float(np.nanmean(finals)) if np.any(np.isfinite(finals)) else float("nan"),
                "ratio": None,
            })
        if "direct-dir" in capped and "npbs-bsreta" in capped:
            ratio = capped["direct-dir"].mean() / capped["npbs-bsreta"].mean()
            for r in rows:
                if r["cell"] == cell:
                    r["ratio"] = float(ratio)
    return rows


def ppw_trend_warnings(summary) -> list:
    """Soft check: the ratio should not decrease as ppw decreases (other levels fixed)."""
    by_group = {}
    for r in summary:
        c = r["cell"]
        if r["ratio"] is None or c.ppw is None or r["method"] != "npbs-bsreta":
            continue
        by_group.setdefault((c.contrast, c.rtol), []).append((c.ppw, r["ratio"]))
    msgs = []
    for (contrast, rtol), pts in sorted(by_group.items()):
        pts.sort(key=lambda p: -p[0])
        for (p0, r0), (p1, r1) in zip(pts, pts[1:]):
            if r1 < r0:
                msgs.append(f"ratio decreases from {r0:.3f} (ppw {p0:g}) to {r1:.3f} (ppw {p1:g}) "
                            f"at contrast {contrast:g}, rtol {rtol:g}")
    return msgs


def run_bench(config: BenchConfig, seed: int = 0, workers: int | None = None) -> BenchResult:
    workers = workers or threads()
    methods = list(config.methods)
    cell_list = cells(config)
    result = BenchResult()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        families = {c.index: c.build(config) for c in cell_list}
        trained = list(pool.map(lambda c: train_cell_maps(families[c.index], config, seed, methods), cell_list))
        jobs = []
        for cell, (maps, losses) in zip(cell_list, trained):
            for m, curve in losses.items():
                result.losses[(cell.index, m)] = curve
            for i in range(config.samples):
                jobs.append((cell, maps, i))
        for rows in pool.map(lambda j: _evaluate(j[0], families[j[0].index], config, seed, j[1], methods, j[2]),
                             jobs):
            result.samples.extend(rows)
    result.samples.sort(key=lambda s: (s.cell.index, s.method, s.sample))
    result.summary = summarize(result.samples, cell_list, methods, config.max_iters)
    result.warnings = ppw_trend_warnings(result.summary)
    for w in result.warnings:
        log.warning(w)
    return result
