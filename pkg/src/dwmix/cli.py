"""Command-line front end: ``dwmix {solve,sweep,oracle,list-scenarios}``.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 a check failed.
Nothing is written to ``--out`` unless the whole command succeeds.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import checks
from .dc import DcProblem, SolverConfig, dca_solve
from .domain import SimplexVector
from .errors import SolverError, ValidationError
from .oracle import GridSpec
from .scenarios import BUILTINS, Scenario, builtin, load_scenario, robustness_sweep

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4


# -- serialization -----------------------------------------------------------

def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, SimplexVector):
        return obj.weights.tolist()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _float_text(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    text = format(x, ".17g")
    return text if any(c in text for c in ".en") else text + ".0"


def _emit(obj, out: list, depth: int):
    pad = " " * depth
    if isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        out.append(_float_text(obj))
    elif isinstance(obj, (int, str)):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad} {json.dumps(k)}: ")
            _emit(v, out, depth + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, list):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            parts = []
            for v in obj:
                sub = []
                _emit(v, sub, 0)
                parts.append("".join(sub))
            out.append("[" + ", ".join(parts) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad + " ")
            _emit(v, out, depth + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    out: list = []
    _emit(_plain(obj), out, 0)
    return "".join(out) + "\n"


@dataclass
class RunReport:
    command: str
    scenario: str
    seed: int | None
    config: dict
    z: list | None = None
    gamma: float | None = None
    certificate: str | None = None
    stop_reason: str | None = None
    trace: list = field(default_factory=list)
    restarts: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    sweep: list | None = None
    timing: float | None = None

    def to_json(self) -> str:
        return dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        doc = json.loads(text)
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})


def trace_csv(trace, p: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "gamma"] + [f"loss_{k + 1}" for k in range(p)])
    for r in trace.records:
        w.writerow([r.iteration, f"{r.gamma:.9g}"] + [f"{v:.9g}" for v in r.losses])
    return buf.getvalue()


def write_outputs(out_dir, files: dict) -> None:
    """Write every file or none: each goes to a temporary sibling first."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.")
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            staged.append((tmp, out / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)


# -- argument handling -------------------------------------------------------

def resolve_scenario(spec: str, seed=None, p=None, n=None) -> Scenario:
    if spec in BUILTINS:
        return builtin(spec, seed=seed, p=p, n=n)
    path = Path(spec)
    if not path.is_file():
        raise ValidationError(f"{spec!r} is neither a builtin ({', '.join(BUILTINS)}) nor a file")
    return load_scenario(path)


def _weights(text: str):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ValidationError(f"cannot parse weights {text!r}") from exc


def solver_config(args) -> SolverConfig:
    z0 = "uniform" if args.z0 in (None, "uniform") else _weights(args.z0)
    kw = dict(eta=args.eta, eta_prime=args.eta_prime, restarts=args.restarts,
              seed=0 if args.seed is None else args.seed, z0=z0, curvature=args.curvature)
    if args.max_iters is not None:
        kw["outer_max_iters"] = args.max_iters
    if args.inner_iters is not None:
        kw["inner_max_iters"] = args.inner_iters
    return SolverConfig(**kw)


def config_echo(cfg: SolverConfig) -> dict:
    d = asdict(cfg)
    d["z0"] = cfg.z0 if isinstance(cfg.z0, str) else _plain(np.asarray(cfg.z0, dtype=float))
    return d


def _problem(sc: Scenario, cfg: SolverConfig) -> DcProblem:
    return DcProblem(sc.sources, sc.hypotheses, sc.loss, cfg.eta, labels=sc.labels, curvature=cfg.curvature)


def _solve(sc: Scenario, cfg: SolverConfig):
    res = dca_solve(_problem(sc, cfg), cfg)
    trace = [{"iter": r.iteration, "gamma": r.gamma, "losses": r.losses, "z": r.z} for r in res.trace.records]
    runs = [{"restart": r.trace.restart, "gamma": r.gamma, "iterations": len(r.trace.records) - 1,
             "stop_reason": r.trace.stop_reason, "z": r.z} for r in res.restarts]
    return res, trace, runs


def _sweep_z(args, sc: Scenario, cfg: SolverConfig):
    src = args.z
    if src == "uniform":
        return SimplexVector.uniform(sc.p)
    if src == "solve":
        return SimplexVector.coerce(_solve(sc, cfg)[0].z)
    path = Path(src)
    if path.is_file():
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{src}: not valid JSON") from exc
        if not isinstance(doc, dict) or "z" not in doc:
            raise ValidationError(f"{src}: no 'z' field")
        z = doc["z"]
    else:
        z = _weights(src)
    z = SimplexVector(z)
    if len(z) != sc.p:
        raise ValidationError(f"z has {len(z)} weights for {sc.p} sources")
    return z


# -- commands ------------------------------------------------------------------

def cmd_solve(args, sc: Scenario):
    cfg = solver_config(args)
    t0 = time.perf_counter()
    res, trace, runs = _solve(sc, cfg)
    bal = checks.balance(_problem(sc, cfg), res.z, cfg.eta_prime)
    report = RunReport("solve", sc.name, args.seed, config_echo(cfg), _plain(res.z), float(res.gamma),
                       res.certificate, res.trace.stop_reason, _plain(trace), _plain(runs),
                       [_plain(asdict(bal))])
    if args.timing:
        report.timing = time.perf_counter() - t0
    files = {"report.json": report.to_json(), "trace.csv": trace_csv(res.trace, sc.p)}
    return files, ("trace.csv" if args.format == "csv" else "report.json"), EXIT_OK


def cmd_sweep(args, sc: Scenario):
    cfg = solver_config(args)
    t0 = time.perf_counter()
    z = _sweep_z(args, sc, cfg)
    table = robustness_sweep(sc, z, cfg.eta, args.lambda_res, combiner=args.combiner)
    report = RunReport("sweep", sc.name, args.seed, config_echo(cfg), z.weights.tolist(),
                       sweep=_plain(table.rows))
    report.config["z_source"] = args.z
    report.config["combiner"] = args.combiner
    if args.timing:
        report.timing = time.perf_counter() - t0
    files = {"sweep.csv": table.to_csv(), "report.json": report.to_json()}
    return files, ("sweep.csv" if args.format == "csv" else "report.json"), EXIT_OK


def _bad_gradient(problem: DcProblem):
    dec = checks.DcDecomposition(problem)

    def grad_fn(z):
        ev = dec.evaluate(z)
        return ev.grad_u, ev.grad_v * 1.01 + 1.0
    return grad_fn


def cmd_oracle(args, sc: Scenario):
    cfg = solver_config(args)
    t0 = time.perf_counter()
    problem = _problem(sc, cfg)
    spec = GridSpec(sc.p, args.grid_res) if args.grid_res else GridSpec.default(sc.p)
    res = dca_solve(problem, cfg)
    results = [
        checks.decomposition_identity(problem, seed=cfg.seed),
        checks.convexity(problem, seed=cfg.seed),
        checks.gradient(problem, seed=cfg.seed,
                        grad_fn=_bad_gradient(problem) if args.inject_bad_gradient else None),
        checks.grid_equivalence(problem, res.gamma, spec),
        checks.balance(problem, res.z, cfg.eta_prime),
        checks.mixture_guarantee(problem, res.z, cfg.eta_prime),
    ]
    alpha, value = checks.convex_minmax(sc, spec)
    report = RunReport("oracle", sc.name, args.seed, config_echo(cfg), _plain(res.z), float(res.gamma),
                       res.certificate, res.trace.stop_reason,
                       checks=[_plain(asdict(r)) for r in results])
    report.config["grid_resolution"] = spec.resolution
    report.sweep = [{"target": "convex_minmax", "lambda": alpha.weights.tolist(), "best_convex": value}]
    if args.timing:
        report.timing = time.perf_counter() - t0
    lines = [r.line() for r in results]
    lines.append(f"INFO convex_minmax: value={value:.12g} alpha={' '.join(f'{a:.6g}' for a in alpha.weights)}")
    failed = [r.name for r in results if not r.passed]
    files = {"checks.json": report.to_json(), "checks.txt": "\n".join(lines) + "\n"}
    if failed:
        print(f"dwmix oracle: failed checks: {', '.join(failed)}", file=sys.stderr)
    return files, ("checks.txt" if args.format == "csv" else "checks.json"), EXIT_CHECK if failed else EXIT_OK


def cmd_list(args):
    for name, desc in BUILTINS.items():
        print(f"{name:12s} {desc}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dwmix", description="Distribution-weighted predictor combination.")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="builtin name or scenario JSON file")
    common.add_argument("--seed", type=int, default=None, help="scenario and restart seed")
    common.add_argument("--p", type=int, default=None, help="number of domains (lower-xent)")
    common.add_argument("--n", type=int, default=None, help="sample size per domain (gauss-*)")
    common.add_argument("--eta", type=float, default=1e-3)
    common.add_argument("--eta-prime", type=float, default=1e-4)
    common.add_argument("--z0", default="uniform", help="'uniform' or comma-separated weights")
    common.add_argument("--restarts", type=int, default=0)
    common.add_argument("--max-iters", type=int, default=None)
    common.add_argument("--inner-iters", type=int, default=None)
    common.add_argument("--curvature", choices=["pointwise", "uniform"], default="pointwise")
    common.add_argument("--out", default=None, help="output directory (default: stdout)")
    common.add_argument("--format", choices=["json", "csv"], default="json",
                        help="what to print when --out is not given")
    common.add_argument("--timing", action="store_true", help="record wall time in the report")

    sub.add_parser("solve", parents=[common], help="minimize the min-max objective over z")
    sw = sub.add_parser("sweep", parents=[common], help="losses over a grid of target mixtures")
    sw.add_argument("--z", default="solve", help="'solve', 'uniform', a report.json, or weights")
    sw.add_argument("--lambda-res", type=float, default=None)
    sw.add_argument("--combiner", choices=["joint", "normalized", "marginal"], default="joint")
    orc = sub.add_parser("oracle", parents=[common], help="brute-force and numerical checks")
    orc.add_argument("--grid-res", type=float, default=None)
    orc.add_argument("--inject-bad-gradient", action="store_true", help=argparse.SUPPRESS)
    sub.add_parser("list-scenarios", help="list builtin scenarios")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-scenarios":
        return cmd_list(args)
    cmd = {"solve": cmd_solve, "sweep": cmd_sweep, "oracle": cmd_oracle}[args.command]
    try:
        sc = resolve_scenario(args.scenario, seed=args.seed, p=args.p, n=args.n)
        files, primary, code = cmd(args, sc)
    except SolverError as exc:
        print(f"dwmix {args.command}: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, KeyError, OSError) as exc:
        print(f"dwmix {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        write_outputs(args.out, files)
    else:
        sys.stdout.write(files[primary])
    return code


if __name__ == "__main__":
    sys.exit(main())
