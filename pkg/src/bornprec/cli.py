"""``bornprec`` command-line entry point.

Subcommands: verify, generate, solve, train, bench, newton. Every command
takes ``--config PATH --seed N --out DIR`` and writes ``manifest.ini`` next
to its outputs. Config files are INI documents; see docs/config.md.
"""
from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import logging
import sys
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

from . import verify as _verify
from .bench import BenchConfig, run_bench
from .correction import FourierDiagMap, OptimalScalarMap, ScalarMap
from .families import CdrFamily, HelmholtzFamily, NewtonFamily
from .fields import read_field, write_field
from .iterate import Format, IterationConfig, run
from .newton import (
    NewtonConfig,
    default_grid,
    distinct_solutions,
    factorized_born_map,
    perturbed_starts,
    solution_bank,
    solve_newton,
)
from .problems import read_problem, write_problem
from .train import LossKind, ProbeKind, TrainConfig, TrainingError, train_map

log = logging.getLogger("bornprec")


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunManifest:
    command: str
    config: str
    seed: int
    out: str
    version: str
    timestamp: str

    @classmethod
    def create(cls, args) -> "RunManifest":
        argv = " ".join(getattr(args, "argv", []) or [args.command])
        return cls(argv, str(args.config or ""), args.seed, str(args.out), tool_version(),
                   _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {k: str(v) for k, v in self.__dict__.items()}
        path = out_dir / "manifest.ini"
        with open(path, "w") as fh:
            cp.write(fh)
        return path

    @classmethod
    def read(cls, path) -> "RunManifest":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read(path)
        r = cp["run"]
        return cls(r["command"], r["config"], int(r["seed"]), r["out"], r["version"], r["timestamp"])


def _load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None and not cp.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    return cp


def _section(cp, name) -> dict:
    return dict(cp[name]) if cp.has_section(name) else {}


def _family(name: str, cp, n: int | None = None):
    sec = _section(cp, "family")
    kw = {}
    if n is not None:
        kw["n"] = n
    elif "n" in sec:
        kw["n"] = int(sec["n"])
    if name == "helmholtz":
        for key in ("ppw", "contrast", "sponge_strength", "eta_factor"):
            if key in sec:
                kw[key] = float(sec[key])
        for key in ("n_layers", "sponge_points"):
            if key in sec:
                kw[key] = int(sec[key])
        return HelmholtzFamily(**kw)
    if name == "cdr":
        for key in ("corr", "log_kappa_std", "psi_std", "sigma_mean", "log_sigma_std"):
            if key in sec:
                kw[key] = float(sec[key])
        return CdrFamily(**kw)
    if name == "newton":
        if "s" in sec:
            kw["s"] = float(sec["s"])
        return NewtonFamily(**kw)
    raise ValueError(f"unknown family {name!r}")


# -- verify ----------------------------------------------------------------


def cmd_verify(args) -> int:
    checks = _verify.run_suite(args.suite, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"verify_{args.suite}.csv", "w") as fh:
        fh.write("suite,check,case,value,threshold,status\n")
        for c in checks:
            fh.write(f"{c.suite},{c.name},{c.case},{c.value:.6e},{c.threshold:.6e},{c.status}\n")
    for c in checks:
        print(f"[{c.status.upper():4}] {c.name:16} {c.case:18} value={c.value:.3e} threshold={c.threshold:.3e}")
        if c.status == "n/a":
            print(f"warning: {c.name} not applicable for {c.case} (rho >= 1 or estimate not converged)",
                  file=sys.stderr)
    failed = [c for c in checks if not c.ok]
    for c in failed:
        print(f"FAILED {c.suite}/{c.name} on {c.case}: {c.value:.6e} > {c.threshold:.6e}", file=sys.stderr)
    worst = max((c.value for c in checks if c.status == "pass"), default=0.0)
    print(f"{args.suite}: {len(checks) - len(failed)}/{len(checks)} checks ok, largest passing value {worst:.3e}")
    return 1 if failed else 0


# -- generate / solve ------------------------------------------------------


def cmd_generate(args) -> int:
    cp = _load_config(args.config)
    fam = _family(args.family, cp, args.n)
    out = Path(args.out)
    for i in range(args.index, args.index + args.count):
        problem, f = fam.sample(args.seed, i)
        name = f"{args.family}_{i:04d}"
        path = write_problem(problem, out, name)
        write_field(out / f"{name}_rhs.bpf", f)
        man = configparser.ConfigParser()
        man.read(path)
        man["problem"]["rhs"] = f"{name}_rhs.bpf"
        with open(path, "w") as fh:
            man.write(fh)
        print(path)
    return 0


def _read_rhs(problem_path: Path, explicit):
    if explicit:
        return read_field(explicit)
    cp = configparser.ConfigParser()
    cp.read(problem_path)
    if "rhs" not in cp["problem"]:
        raise ValueError(f"{problem_path} names no rhs; pass --rhs")
    return read_field(problem_path.parent / cp["problem"]["rhs"])


def cmd_solve(args) -> int:
    cp = _load_config(args.config)
    sec = _section(cp, "solve")
    path = Path(args.problem)
    problem = read_problem(path)
    f = _read_rhs(path, args.rhs)
    fmt = Format(args.format or sec.get("format", "npbs"))
    rtol = args.rtol if args.rtol is not None else float(sec.get("rtol", 1e-6))
    max_iters = args.max_iters if args.max_iters is not None else int(sec.get("max_iters", 1000))
    map_path = args.map or sec.get("map")
    if map_path:
        cmap = FourierDiagMap.load(map_path, problem.kind)
    elif args.scalar is not None:
        cmap = ScalarMap(complex(args.scalar))
    else:
        cmap = OptimalScalarMap()
    u, trace = run(problem, cmap, f, IterationConfig(format=fmt, rtol=rtol, max_iters=max_iters))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    write_field(out / "solution.bpf", u)
    print(f"{fmt.value}: {trace.terminated.value} after {trace.iters} iterations, "
          f"final relative residual {trace.final:.3e}")
    return 0


# -- train -----------------------------------------------------------------


def cmd_train(args) -> int:
    cp = _load_config(args.config)
    sec = _section(cp, "train")
    fam = _family(args.family, cp, args.n)
    instances = args.instances if args.instances is not None else int(sec.get("instances", 8))
    config = TrainConfig(
        epochs=args.epochs if args.epochs is not None else int(sec.get("epochs", 200)),
        batch=args.batch if args.batch is not None else int(sec.get("batch", 32)),
        step_size=float(sec.get("step_size", 1.0)),
        step_decay=float(sec.get("step_decay", 0.5)),
        decay_every=int(sec.get("decay_every", 0)),
        seed=args.seed,
        probe_kind=ProbeKind(sec.get("probe_kind", "white")),
    )
    if isinstance(fam, NewtonFamily):
        problems = fam.problems(args.seed)[:instances]
    else:
        problems = [fam.sample(args.seed, i)[0] for i in range(instances)]
    try:
        result = train_map(args.loss, problems, config)
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.cmap.save(out / f"map_{args.loss}.bpf")
    result.to_csv(out / f"loss_{args.loss}.csv")
    print(f"{args.loss}: loss {result.losses[0]:.4e} -> {result.losses[-1]:.4e} "
          f"over {len(result.losses) - 1} epochs")
    return 0


# -- bench -----------------------------------------------------------------


def cmd_bench(args) -> int:
    cp = _load_config(args.config)
    config = BenchConfig.from_parser(cp)
    result = run_bench(config, seed=args.seed)
    result.write(args.out)
    print(result.summary_csv(), end="")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


# -- newton ----------------------------------------------------------------


def cmd_newton(args) -> int:
    cp = _load_config(args.config)
    sec = _section(cp, "newton")
    n = args.n or int(sec.get("n", 63))
    s = float(sec.get("s", 1600.0))
    grid = default_grid(n)
    bank = solution_bank(grid, s)
    starts = perturbed_starts(bank, grid, args.starts, args.seed, alpha=float(sec.get("alpha", 4.0)))
    inner = IterationConfig(format=Format.NPBS, rtol=float(sec.get("inner_rtol", 1e-4)), max_iters=2000)
    config = NewtonConfig(s=s, oracle=args.oracle, inner=inner, inner_map=factorized_born_map,
                          max_outer=int(sec.get("max_outer", 25)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    finals = []
    for k, u0 in enumerate(starts):
        tr = solve_newton(u0, config, grid)
        tr.to_csv(out / f"newton_{k:02d}.csv")
        status = "converged" if tr.converged else "not converged"
        print(f"start {k}: {status} in {tr.steps} steps, ||F|| = {tr.residuals[-1]:.3e}")
        if tr.converged:
            finals.append(tr.u)
            write_field(out / f"solution_{k:02d}.bpf", tr.u)
    print(f"{len(finals)}/{len(starts)} converged, {len(distinct_solutions(finals))} distinct solutions")
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--seed", type=int, default=0, help="root seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bornprec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run an invariant suite")
    v.add_argument("suite", choices=_verify.SUITES)
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("generate", parents=[common], help="write problem manifests")
    g.add_argument("family", choices=("helmholtz", "cdr", "newton"))
    g.add_argument("--index", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--n", type=int, default=None)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", parents=[common], help="run one iteration on a problem manifest")
    s.add_argument("problem", help="problem manifest (.txt)")
    s.add_argument("--rhs", default=None, help="right-hand side field (default: from manifest)")
    s.add_argument("--format", choices=[f.value for f in Format], default=None)
    s.add_argument("--map", default=None, help="FourierDiag map file")
    s.add_argument("--scalar", default=None, help="fixed scalar map, e.g. 0.5 or 0.5-0.1j")
    s.add_argument("--rtol", type=float, default=None)
    s.add_argument("--max-iters", type=int, default=None)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", parents=[common], help="train a FourierDiag correction map")
    t.add_argument("family", choices=("helmholtz", "cdr", "newton"))
    t.add_argument("--loss", choices=[k.value for k in LossKind], required=True)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch", type=int, default=None)
    t.add_argument("--instances", type=int, default=None)
    t.add_argument("--n", type=int, default=None)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", parents=[common], help="run a benchmark sweep")
    b.set_defaults(func=cmd_bench)

    nw = sub.add_parser("newton", parents=[common], help="Newton runs from perturbed branch roots")
    nw.add_argument("--starts", type=int, default=10)
    nw.add_argument("--n", type=int, default=None)
    nw.add_argument("--oracle", action="store_true", help="sparse direct inner solves")
    nw.set_defaults(func=cmd_newton)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = ["bornprec", *argv]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    RunManifest.create(args).write(args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
