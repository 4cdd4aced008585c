"""Command-line experiment runner.

Subcommands: ``solve``, ``simulate``, ``table1`` and ``sweep``.  Exit codes are
0 on success, 2 for invalid configuration, 3 for an unstable system and 4 when
the workload tail does not decay within the horizon.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import simulator
from .config import PRESETS, TABLE1_Q, ExperimentSpec, example1, example3, load_experiment
from .meanfield import (DEFAULT_EPS_TAIL, DEFAULT_MAX_HORIZON, SolverError, UnconvergedTailError,
                        UnstableSystemError, WorkloadCurve, mean_workload, solve_dde, solve_ide)
from .response import (ResponseCurve, class_response_ccdf, class_shares, mean_response,
                       overall_response_ccdf, response_npoints)
from .storage_model import ConfigError, SystemConfig, loss_probability, system_load

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_UNSTABLE, EXIT_UNCONVERGED = 0, 2, 3, 4

SOLVERS = {"dde": solve_dde, "ide": solve_ide}


@dataclass
class Solution:
    cfg: SystemConfig
    curve: WorkloadCurve
    responses: dict[str, ResponseCurve | None]
    overall: ResponseCurve | None
    solver: str
    seconds: float = 0.0
    means: dict[str, float] = field(default_factory=dict)

    @property
    def mean_response(self) -> float:
        return mean_response(self.overall) if self.overall is not None else math.nan

    def summary(self) -> dict:
        betas = class_shares(self.cfg) if self.overall is not None else {}
        return {
            "schema_version": SCHEMA_VERSION,
            "lambda": self.cfg.lam,
            "q": self.cfg.q,
            "solver": self.solver,
            "step": self.curve.step,
            "w_max": self.curve.w_max,
            "rho": system_load(self.cfg),
            "mean_workload": mean_workload(self.curve),
            "mean_response": _finite(self.mean_response),
            "classes": {
                c.label: {
                    "loss_probability": loss_probability(c, self.cfg.q),
                    "mean_response": _finite(self.means[c.label]),
                    "beta": betas.get(c.label, 0.0),
                }
                for c in self.cfg.classes
            },
        }


def _finite(x):
    return x if math.isfinite(x) else None


def solve_config(cfg: SystemConfig, step=None, eps_tail=DEFAULT_EPS_TAIL, solver="dde",
                 max_horizon=DEFAULT_MAX_HORIZON) -> Solution:
    """Workload fixed point plus per-class and overall response curves."""
    t0 = time.perf_counter()
    curve = SOLVERS[solver](cfg, step=step, eps_tail=eps_tail, max_horizon=max_horizon)
    npts = response_npoints(curve, cfg.classes)
    responses, means = {}, {}
    for c in cfg.classes:
        if loss_probability(c, cfg.q) >= 1.0:
            responses[c.label], means[c.label] = None, math.nan
            continue
        rc = class_response_ccdf(curve, c, cfg.q, npts)
        responses[c.label], means[c.label] = rc, mean_response(rc)
    served = {k: v for k, v in responses.items() if v is not None}
    overall = overall_response_ccdf(served, cfg) if served else None
    return Solution(cfg, curve, responses, overall, solver, time.perf_counter() - t0, means)


# output helpers ----------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_table(path: Path, header: list[str], rows: list[list], fmt: str) -> Path:
    if fmt == "json":
        path = path.with_suffix(".json")
        _atomic_write(path, _json_text([dict(zip(header, r)) for r in rows]))
        return path
    path = path.with_suffix(".csv")
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join("" if v is None else (repr(v) if isinstance(v, float) else str(v)) for v in r))
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def _curve_csv(curve) -> str:
    header = "w,fbar" if isinstance(curve, WorkloadCurve) else "w,fbar_r"
    lines = [header]
    lines += [f"{float(w)!r},{float(v)!r}" for w, v in zip(curve.grid, curve.values)]
    return "\n".join(lines) + "\n"


# config resolution ---------------------------------------------------------

def _experiment(args) -> ExperimentSpec:
    if getattr(args, "preset", None):
        if args.preset == "example3" or args.theta is not None:
            if args.preset not in ("example3", "example3-msr", "example3-mbr"):
                raise ConfigError("theta", "--theta only applies to the example3 presets")
            if args.theta is None:
                raise ConfigError("theta", "the example3 preset needs --theta")
            system = example3(args.theta)
        else:
            system = PRESETS[args.preset]()
        spec = ExperimentSpec(system)
    elif getattr(args, "config", None):
        spec = load_experiment(args.config)
    else:
        raise ConfigError("config", "give a config file or --preset")
    changes = {}
    if getattr(args, "q", None) is not None:
        changes["q"] = args.q
    if getattr(args, "lam", None) is not None:
        changes["lam"] = args.lam
    if changes:
        spec = ExperimentSpec(spec.system.replace(**changes), spec.sweep_variable, spec.sweep_values,
                              spec.outputs, spec.solver, spec.simulation)
    return spec


def _solver_opts(args, spec: ExperimentSpec) -> dict:
    step = args.step if args.step is not None else spec.solver.get("step")
    eps = args.eps_tail if args.eps_tail is not None else spec.solver.get("eps_tail", DEFAULT_EPS_TAIL)
    if step is not None and not float(step) > 0:
        raise ConfigError("step", f"must be positive, got {step}")
    if not float(eps) > 0:
        raise ConfigError("eps_tail", f"must be positive, got {eps}")
    horizon = args.max_horizon if args.max_horizon is not None else spec.solver.get("max_horizon", DEFAULT_MAX_HORIZON)
    if not float(horizon) > 0:
        raise ConfigError("max_horizon", f"must be positive, got {horizon}")
    return {"step": None if step is None else float(step), "eps_tail": float(eps),
            "solver": args.solver, "max_horizon": float(horizon)}


# subcommands -------------------------------------------------------------------

def cmd_solve(args) -> int:
    spec = _experiment(args)
    out = Path(args.out_dir)
    sol = solve_config(spec.system, **_solver_opts(args, spec))
    _atomic_write(out / "workload.csv", _curve_csv(sol.curve))
    for label, rc in sol.responses.items():
        if rc is not None:
            _atomic_write(out / f"response_{label}.csv", _curve_csv(rc))
    if sol.overall is not None:
        _atomic_write(out / "response_all.csv", _curve_csv(sol.overall))
    summary = sol.summary()
    _atomic_write(out / "summary.json", _json_text(summary))
    _atomic_write(out / "config.yaml", spec.dump())
    print(_json_text(summary), end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _experiment(args)
    simcfg = spec.simulation
    kw = {
        "n": args.n if args.n is not None else int(simcfg.get("n", 300)),
        "arrivals": args.arrivals if args.arrivals is not None else int(simcfg.get("arrivals", 2_500_000)),
        "replications": args.replications if args.replications is not None else int(simcfg.get("replications", 5)),
        "seed": args.seed if args.seed is not None else int(simcfg.get("seed", 0)),
        "warmup_fraction": args.warmup,
    }
    rho = system_load(spec.system)
    if rho >= 1.0:
        raise UnstableSystemError(rho)
    sim = simulator.SimConfig(cfg=spec.system, **kw)
    report = simulator.run(sim, workers=args.workers, keep_samples=args.samples)
    out = Path(args.out_dir)
    _atomic_write(out / "sim_summary.json", report.to_json() + "\n")
    if args.samples:
        tmp = out / ".samples.csv.part"
        out.mkdir(parents=True, exist_ok=True)
        report.dump_samples(tmp)
        os.replace(tmp, out / "samples.csv")
    print(json.dumps({
        "busy_fraction": report.busy_fraction,
        "rho": report.rho,
        "mean_response": {k: c.mean for k, c in report.classes.items()},
        "loss_fraction": {k: c.loss_fraction for k, c in report.classes.items()},
    }, indent=2))
    return EXIT_OK


TABLE1_HEADER = ["q", "increase_hot_pct", "increase_cold_pct", "loss_hot", "loss_cold",
                 "mean_response_hot", "mean_response_cold"]


def table1_rows(workers: int = 1, **opts) -> list[list]:
    """Percentage increase of each class's mean download time versus q=1.

    ``opts`` are passed to :func:`solve_config`.
    """
    cfgs = [example1(q) for q in TABLE1_Q]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        sols = list(pool.map(lambda c: solve_config(c, **opts), cfgs))
    base = sols[0].means
    rows = []
    for q, sol in zip(TABLE1_Q, sols):
        h, c = sol.means["hot"], sol.means["cold"]
        rows.append([q, 100.0 * (h / base["hot"] - 1.0), 100.0 * (c / base["cold"] - 1.0),
                     loss_probability(sol.cfg.by_label("hot"), q),
                     loss_probability(sol.cfg.by_label("cold"), q), h, c])
    return rows


def cmd_table1(args) -> int:
    opts = _solver_opts(args, ExperimentSpec(example1()))
    rows = table1_rows(args.workers, **opts)
    path = _write_table(Path(args.out_dir) / "table1", TABLE1_HEADER, rows, args.format)
    print(f"{'q':>5} {'hot %':>8} {'cold %':>8} {'loss hot':>9} {'loss cold':>10}")
    for r in rows:
        print(f"{r[0]:5.2f} {r[1]:8.2f} {r[2]:8.2f} {r[3]:9.4f} {r[4]:10.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def _sweep_point(cfg: SystemConfig, opts: dict) -> tuple[str, Solution | None]:
    try:
        return "ok", solve_config(cfg, **opts)
    except UnstableSystemError:
        return "unstable", None
    except UnconvergedTailError:
        return "unconverged", None


def sweep_rows(spec: ExperimentSpec, opts: dict, workers: int = 1):
    labels = [c.label for c in spec.system.classes]
    header = (["value", "mean_response"] + [f"mean_response_{l}" for l in labels] + ["rho"]
              + [f"loss_{l}" for l in labels] + ["status"])
    cfgs = [spec.at(v) for v in spec.sweep_values]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda c: _sweep_point(c, opts), cfgs))
    rows = []
    for v, cfg, (status, sol) in zip(spec.sweep_values, cfgs, results):
        means = [sol.mean_response] + [sol.means[l] for l in labels] if sol else [math.nan] * (1 + len(labels))
        rows.append([v] + [_finite(m) for m in means] + [system_load(cfg)]
                    + [loss_probability(c, cfg.q) for c in cfg.classes] + [status])
    return header, rows


def cmd_sweep(args) -> int:
    spec = _experiment(args)
    var = args.variable or spec.sweep_variable
    values = args.values if args.values is not None else spec.sweep_values
    if var is None or not values:
        raise ConfigError("sweep", "need --variable and --values (or a sweep section in the config)")
    spec = ExperimentSpec(spec.system, var, values, spec.outputs, spec.solver, spec.simulation)
    header, rows = sweep_rows(spec, _solver_opts(args, spec), args.workers)
    path = _write_table(Path(args.out_dir) / "sweep", header, rows, args.format)
    _atomic_write(Path(args.out_dir) / "config.yaml", spec.dump())
    for r in rows:
        print(" ".join("-" if x is None else (f"{x:.6g}" if isinstance(x, float) else str(x)) for x in r))
    print(f"wrote {path}")
    return EXIT_OK


# argument parsing -----------------------------------------------------------

def _values(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dss-meanfield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--step", type=float, help="grid step (default: derived from the config)")
    common.add_argument("--eps-tail", type=float, help=f"tail truncation level (default {DEFAULT_EPS_TAIL:g})")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--seed", type=int, help="simulation seed")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="tabular output format")
    common.add_argument("--max-horizon", type=float, help=f"largest workload level (default {DEFAULT_MAX_HORIZON:g})")
    common.add_argument("--solver", choices=tuple(SOLVERS), default="dde")
    common.add_argument("--workers", type=int, default=1, help="threads for sweeps and replications")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("config", nargs="?", help="YAML or JSON config file")
    source.add_argument("--preset", choices=sorted(PRESETS) + ["example3"])
    source.add_argument("--theta", type=float, help="cold fragment size for the example3 presets")
    source.add_argument("--q", type=float, help="override the availability q")
    source.add_argument("--lambda", dest="lam", type=float, help="override the arrival rate")

    sp = sub.add_parser("solve", parents=[common, source], help="solve the mean-field model")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("simulate", parents=[common, source], help="run the finite-N simulator")
    sp.add_argument("--n", type=int, help="number of servers (default 300)")
    sp.add_argument("--arrivals", type=int, help="arrivals per replication, warmup included")
    sp.add_argument("--replications", type=int)
    sp.add_argument("--warmup", type=float, default=0.2, help="warmup fraction of the arrivals")
    sp.add_argument("--samples", action="store_true", help="also write samples.csv")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("table1", parents=[common], help="percentage increase table for example1")
    sp.set_defaults(func=cmd_table1)

    sp = sub.add_parser("sweep", parents=[common, source], help="sweep q or lambda")
    sp.add_argument("--variable", choices=("q", "lambda"))
    sp.add_argument("--values", type=_values, help="comma-separated, strictly increasing")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnstableSystemError as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except UnconvergedTailError as exc:
        print(f"unconverged: {exc}", file=sys.stderr)
        return EXIT_UNCONVERGED
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_UNCONVERGED


if __name__ == "__main__":
    sys.exit(main())
