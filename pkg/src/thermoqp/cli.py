"""``thermoqp`` command line.

Subcommands::

    thermoqp solve PROBLEM.json        -> SolveReport JSON
    thermoqp svm DATASET.csv           -> one CSV row per backend
    thermoqp timing-sweep --sizes ...  -> measured digital vs modeled SPU rows
    thermoqp portfolio SPEC.json       -> allocation JSON
    thermoqp nrn NETWORK.json          -> node potentials JSON

Global flags (``--config``, ``--seed``, ``--out``, ``--backend``) may appear
before or after the subcommand.  Output goes to ``--out`` through a temporary
file and an atomic rename, or to stdout.  CSV bodies depend only on the inputs
and the seed except for wall-clock columns (``time_kind == "measured"``); the
generation timestamp lives in a leading ``#`` comment line.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .apps.nrn import kirchhoff_solve, load_network, nrn_steady_state
from .apps.portfolio import PortfolioSpec, solve_portfolio
from .apps.svm import augment, load_dataset, train_svm
from .benchmark import SVM_LAMBDA, SweepRow, crossover, speedup, timing_sweep
from .errors import ConfigError, InfeasibleTarget, ParseError, ThermoQpError
from .ipm import BACKENDS, IpmConfig, Status, solve
from .qp_core import load_problem
from .spu_sim import SpuConfig

EXIT_OK, EXIT_ERROR, EXIT_ITER_LIMIT = 0, 1, 2
SVM_COLUMNS = ("backend", "n", "D", "iterations", "time_kind", "time_s", "train_accuracy", "status")


@dataclass
class RunConfig:
    """Contents of a ``--config`` JSON file; every key is optional."""

    ipm: dict = field(default_factory=dict)
    spu: dict = field(default_factory=dict)
    backends: list | None = None
    seed: int | None = None
    sizes: list = field(default_factory=lambda: [16, 32, 64, 128, 256])
    simulate_spu: bool = False
    augment_factor: int = 1
    augment_sigma: float = 0.0
    lambda_svm: float = SVM_LAMBDA

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg = cls(**data)
        # validate the nested blocks eagerly so errors surface before any work
        try:
            cfg.ipm_config("direct")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.backends is not None and any(b not in BACKENDS for b in cfg.backends):
            raise ConfigError(f"backends must be drawn from {BACKENDS}")
        return cfg

    def spu_config(self, seed: int | None) -> SpuConfig:
        spu = SpuConfig.from_dict(self.spu)
        if seed is not None:
            spu = replace(spu, seed=seed)
        return spu

    def ipm_config(self, backend: str, seed: int | None = None) -> IpmConfig:
        data = dict(self.ipm)
        data.pop("spu", None)
        data["backend"] = backend
        return IpmConfig.from_dict({**data, "spu": self.spu_config(seed)})


def load_run_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in config: {exc.msg}", line=exc.lineno) from exc
    return RunConfig.from_dict(data)


# -- output ----------------------------------------------------------------------


def write_output(text: str, out) -> None:
    """Write ``text`` to ``out`` atomically (temp file + rename), or to stdout."""
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    fd, tmp = tempfile.mkstemp(dir=out.parent or ".", prefix=f".{out.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header(command: str, seed) -> str:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return f"# thermoqp {__version__} {command} seed={seed} generated={stamp}\n"


def render_csv(columns, rows, header: str = "") -> str:
    buf = io.StringIO()
    buf.write(header)
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in columns})
    return buf.getvalue()


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _backends(args, cfg: RunConfig, default) -> list[str]:
    chosen = args.backend or cfg.backends or list(default)
    # keep first occurrence order, drop repeats
    return list(dict.fromkeys(chosen))


def _seed(args, cfg: RunConfig) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.seed if cfg.seed is not None else 0


# -- commands --------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = load_run_config(args.config)
    seed = _seed(args, cfg)
    backend = _backends(args, cfg, ["direct"])[0]
    problem = load_problem(args.problem)
    report = solve(problem, cfg.ipm_config(backend, seed))
    out = report.to_dict()
    out["backend"] = backend
    write_output(_json(out), args.out)
    if report.status is Status.CONVERGED:
        return EXIT_OK
    if report.status is Status.ITER_LIMIT:
        return EXIT_ITER_LIMIT
    print(f"solve failed: {report.message}", file=sys.stderr)
    return EXIT_ERROR


def cmd_svm(args) -> int:
    cfg = load_run_config(args.config)
    seed = _seed(args, cfg)
    dataset = load_dataset(args.dataset)
    factor = args.augment_factor if args.augment_factor is not None else cfg.augment_factor
    sigma = args.augment_sigma if args.augment_sigma is not None else cfg.augment_sigma
    if factor > 1:
        dataset = augment(dataset, factor, sigma, np.random.default_rng(seed))
    rows, failures = [], 0
    for backend in _backends(args, cfg, BACKENDS):
        try:
            model = train_svm(dataset, cfg.ipm_config(backend, seed), cfg.lambda_svm)
        except ThermoQpError as exc:
            print(f"{backend}: {exc}", file=sys.stderr)
            failures += 1
            rows.append(dict(backend=backend, n=dataset.size, D=dataset.size, iterations=0,
                             time_kind="", time_s=float("nan"), train_accuracy=float("nan"),
                             status=f"error: {type(exc).__name__}"))
            continue
        report = model.report
        if backend == "spu":
            spu_time = report.modeled_spu_time
            kind, t = "modeled", spu_time.total_s if spu_time is not None else 0.0
        else:
            kind, t = "measured", report.wall_time_s
        rows.append(dict(backend=backend, n=dataset.size, D=dataset.size, iterations=report.iterations,
                         time_kind=kind, time_s=float(t), train_accuracy=model.train_accuracy,
                         status=report.status.value))
    write_output(render_csv(SVM_COLUMNS, rows, _header("svm", seed)), args.out)
    return EXIT_ERROR if failures == len(rows) else EXIT_OK


def cmd_timing_sweep(args) -> int:
    cfg = load_run_config(args.config)
    seed = _seed(args, cfg)
    sizes = args.sizes or cfg.sizes
    backends = _backends(args, cfg, ["direct", "spu"])
    simulate = args.simulate_spu or cfg.simulate_spu
    rows = timing_sweep(sizes, backends, seed=seed, ipm=cfg.ipm_config("direct", seed),
                        spu=cfg.spu_config(seed), simulate_spu=simulate)
    header = _header("timing-sweep", seed)
    if "spu" in backends and "direct" in backends:
        largest = max(r.n for r in rows)
        header += (f"# crossover_n={crossover(rows)!r} "
                   f"speedup_at_n{largest}={speedup(rows, largest)!r}\n")
    write_output(render_csv(SweepRow.CSV_COLUMNS, [r.to_row() for r in rows], header), args.out)
    return EXIT_OK


def cmd_portfolio(args) -> int:
    cfg = load_run_config(args.config)
    seed = _seed(args, cfg)
    try:
        data = json.loads(Path(args.spec).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    for key in ("returns", "covariance", "target_return"):
        if key not in data:
            raise ParseError(f"missing required field {key!r}", field=key)
    spec = PortfolioSpec(np.asarray(data["returns"]), np.asarray(data["covariance"]), float(data["target_return"]))
    backend = _backends(args, cfg, ["direct"])[0]
    # without an explicit ipm block the direct solve keeps the app's tight defaults
    config = None if (not cfg.ipm and backend == "direct") else cfg.ipm_config(backend, seed)
    try:
        result = solve_portfolio(spec, config)
    except InfeasibleTarget as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = {
        "weights": result.weights,
        "slack": result.slack,
        "expected_return": result.expected_return,
        "variance": result.variance,
        "status": result.report.status.value,
        "iterations": result.report.iterations,
    }
    write_output(_json(out), args.out)
    return EXIT_OK if result.report.converged else EXIT_ITER_LIMIT


def cmd_nrn(args) -> int:
    cfg = load_run_config(args.config)
    seed = _seed(args, cfg)
    network = load_network(args.network)
    backend = _backends(args, cfg, ["direct"])[0]
    config = cfg.ipm_config(backend, seed)
    if not cfg.ipm and backend == "direct":
        config = replace(config, eps_p=1e-10, eps_d=1e-10, eps_o=1e-10)
    potentials, report = nrn_steady_state(network, config, return_report=True)
    out = {
        "potentials": potentials,
        "kirchhoff": kirchhoff_solve(network),
        "status": report.status.value,
        "iterations": report.iterations,
    }
    write_output(_json(out), args.out)
    return EXIT_OK if report.converged else EXIT_ITER_LIMIT


# -- parser ----------------------------------------------------------------------


def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=default, help="master seed (u64)")
    parser.add_argument("--out", default=default, help="output path (default: stdout)")
    parser.add_argument("--backend", action="append", choices=BACKENDS, default=default,
                        help="linear-solve backend; repeat for several")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermoqp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a QP problem file")
    p.add_argument("problem")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("svm", help="train a linear SVM with each backend")
    p.add_argument("dataset")
    p.add_argument("--augment-factor", type=int, default=None)
    p.add_argument("--augment-sigma", type=float, default=None)
    p.set_defaults(func=cmd_svm)

    p = sub.add_parser("timing-sweep", help="measured digital vs modeled SPU runtime")
    p.add_argument("--sizes", type=int, nargs="+", default=None)
    p.add_argument("--simulate-spu", action="store_true")
    p.set_defaults(func=cmd_timing_sweep)

    p = sub.add_parser("portfolio", help="long-only mean-variance allocation")
    p.add_argument("spec")
    p.set_defaults(func=cmd_portfolio)

    p = sub.add_parser("nrn", help="resistive-network steady state")
    p.add_argument("network")
    p.set_defaults(func=cmd_nrn)

    for action in sub.choices.values():
        _global_flags(action, suppress=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ThermoQpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
