"""Config files, built-in presets and experiment descriptions.

A config is YAML (JSON is valid YAML)::

    lambda: 0.7
    q: 0.8
    classes:
      - {label: hot, p: 0.7, d: 3, k: 1, delta: 0.2, file_mean: 1.0,
         service: {kind: hyperexp, scv: 2, f: 0.5}}
      - {label: cold, p: 0.3, d: 4, k: 2, delta: 0.2,
         service: {kind: hyperexp, mean: 0.3, scv: 2}}
    sweep: {variable: lambda, values: [0.3, 0.5, 0.7]}      # optional
    solver: {step: 0.0025, eps_tail: 1.0e-8}               # optional
    simulation: {n: 300, arrivals: 2500000, replications: 5, seed: 42}

``service.mean`` is the mean of the phase-type part.  ``file_mean`` instead
fixes the mean file service time ``k * (delta + E[Y])``.  ``kind`` is one of
``exp``, ``hyperexp`` or ``ph`` (explicit ``alpha`` and ``A``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .distributions import DistributionError, PhaseTypeDist, ShiftedDist, hyperexp_from
from .storage_model import ConfigError, FileClass, SystemConfig

SWEEP_VARIABLES = ("q", "lambda")
MSR_THETA = 1.0 / 6.0
MBR_THETA = 0.2424


def _num(d: dict, key: str, where: str, default=None):
    if key not in d:
        if default is not None:
            return default
        raise ConfigError(f"{where}.{key}", "missing")
    try:
        return float(d[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", f"not a number: {d[key]!r}") from None


def _int(d: dict, key: str, where: str) -> int:
    if key not in d:
        raise ConfigError(f"{where}.{key}", "missing")
    v = d[key]
    try:
        ok = not isinstance(v, bool) and float(v).is_integer()
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise ConfigError(f"{where}.{key}", f"not an integer: {v!r}")
    return int(v)


def parse_service(spec: dict, k: int, delta: float, file_mean, where: str) -> PhaseTypeDist:
    if not isinstance(spec, dict):
        raise ConfigError(where, "must be a mapping")
    kind = spec.get("kind", "hyperexp")
    if kind == "ph":
        try:
            return PhaseTypeDist(np.array(spec["alpha"], float), np.array(spec["A"], float))
        except KeyError as exc:
            raise ConfigError(f"{where}.{exc.args[0]}", "missing") from None
        except DistributionError as exc:
            raise ConfigError(where, str(exc)) from None
    if file_mean is not None:
        if "mean" in spec:
            raise ConfigError(f"{where}.mean", "give either service.mean or file_mean, not both")
        mean = file_mean / k - delta
        if not mean > 0:
            raise ConfigError(f"{where}", f"file_mean/k = {file_mean / k:g} must exceed delta = {delta:g}")
    else:
        mean = _num(spec, "mean", where)
    try:
        if kind == "exp":
            return PhaseTypeDist.exponential(1.0 / mean)
        if kind == "hyperexp":
            return hyperexp_from(mean, _num(spec, "scv", where), _num(spec, "f", where, 0.5))
    except DistributionError as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.kind", f"unknown service kind {kind!r}")


def parse_system(doc: dict) -> SystemConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a mapping")
    classes = doc.get("classes")
    if not isinstance(classes, list) or not classes:
        raise ConfigError("classes", "must be a non-empty list")
    built = []
    for n, c in enumerate(classes):
        where = f"classes[{n}]"
        if not isinstance(c, dict):
            raise ConfigError(where, "must be a mapping")
        label = str(c.get("label", f"class{n}"))
        where = f"classes[{label}]"
        k = _int(c, "k", where)
        d = _int(c, "d", where)
        delta = _num(c, "delta", where, 0.0)
        file_mean = _num(c, "file_mean", where) if "file_mean" in c else None
        if not 1 <= k <= d:
            raise ConfigError(f"{where}.k", f"need 1 <= k <= d, got k={k}, d={d}")
        ph = parse_service(c.get("service", {}), k, delta, file_mean, f"{where}.service")
        try:
            svc = ShiftedDist(delta, ph)
        except DistributionError as exc:
            raise ConfigError(f"{where}.delta", str(exc)) from None
        try:
            built.append(FileClass(label, _num(c, "p", where), d, k, svc))
        except ConfigError as exc:
            raise ConfigError(f"{where}.{exc.field.split('.')[-1]}", str(exc).split(": ", 1)[1]) from None
    return SystemConfig(_num(doc, "lambda", "config"), _num(doc, "q", "config"), tuple(built))


def system_to_dict(cfg: SystemConfig) -> dict:
    """Canonical echo: services are written as explicit ``ph``."""
    return {
        "lambda": float(cfg.lam),
        "q": float(cfg.q),
        "classes": [
            {
                "label": c.label,
                "p": float(c.p),
                "d": c.d,
                "k": c.k,
                "delta": float(c.service.delta),
                "service": {
                    "kind": "ph",
                    "alpha": [float(x) for x in c.service.ph.alpha],
                    "A": [[float(x) for x in row] for row in c.service.ph.A],
                },
            }
            for c in cfg.classes
        ],
    }


@dataclass
class ExperimentSpec:
    system: SystemConfig
    sweep_variable: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    outputs: list[str] = field(default_factory=lambda: ["workload", "response", "summary"])
    solver: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sweep_variable is not None:
            if self.sweep_variable not in SWEEP_VARIABLES:
                raise ConfigError("sweep.variable", f"must be one of {SWEEP_VARIABLES}")
            vals = [float(v) for v in self.sweep_values]
            if not vals:
                raise ConfigError("sweep.values", "empty")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError("sweep.values", "must be strictly increasing")
            for v in vals:
                self.at(v)  # validates every swept config
            self.sweep_values = vals

    def at(self, value: float) -> SystemConfig:
        if self.sweep_variable == "q":
            return self.system.replace(q=value)
        if self.sweep_variable == "lambda":
            return self.system.replace(lam=value)
        return self.system

    def to_dict(self) -> dict:
        doc = system_to_dict(self.system)
        if self.sweep_variable is not None:
            doc["sweep"] = {"variable": self.sweep_variable, "values": list(self.sweep_values)}
        doc["outputs"] = list(self.outputs)
        if self.solver:
            doc["solver"] = dict(self.solver)
        if self.simulation:
            doc["simulation"] = dict(self.simulation)
        return doc

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def __eq__(self, other):
        return isinstance(other, ExperimentSpec) and self.to_dict() == other.to_dict()


def parse_experiment(doc: dict) -> ExperimentSpec:
    system = parse_system(doc)
    sweep = doc.get("sweep")
    var, vals = None, []
    if sweep is not None:
        if not isinstance(sweep, dict):
            raise ConfigError("sweep", "must be a mapping")
        var = sweep.get("variable")
        vals = sweep.get("values", [])
    return ExperimentSpec(
        system=system,
        sweep_variable=var,
        sweep_values=list(vals),
        outputs=list(doc.get("outputs", ["workload", "response", "summary"])),
        solver=dict(doc.get("solver", {}) or {}),
        simulation=dict(doc.get("simulation", {}) or {}),
    )


def load_experiment(path) -> ExperimentSpec:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from None
    return parse_experiment(doc)


# presets ---------------------------------------------------------------

def _hyperexp_class(label, p, d, k, delta, fragment_mean, scv=2.0):
    return FileClass(label, p, d, k, ShiftedDist(delta, hyperexp_from(fragment_mean - delta, scv, 0.5)))


def example1(q: float = 1.0, lam: float = 0.7) -> SystemConfig:
    """Hot 3-replication and cold (4,2)-MDS files, E[X] = 1, startup 0.2."""
    return SystemConfig(lam, q, (
        _hyperexp_class("hot", 0.7, 3, 1, 0.2, 1.0),
        _hyperexp_class("cold", 0.3, 4, 2, 0.2, 1.0 / 2),
    ))


def example2(q: float = 0.8, lam: float = 0.7) -> SystemConfig:
    """Hot 3-replication and cold (9,6)-MDS files, E[X] = 1, startup 0.1."""
    return SystemConfig(lam, q, (
        _hyperexp_class("hot", 0.7, 3, 1, 0.1, 1.0),
        _hyperexp_class("cold", 0.3, 9, 6, 0.1, 1.0 / 6),
    ))


def example3(theta: float, q: float = 0.8, lam: float = 0.7) -> SystemConfig:
    """As :func:`example2` with a (9,6) regenerating code of fragment size ``theta``."""
    if not theta > 0.1:
        raise ConfigError("theta", f"fragment size must exceed the startup time 0.1, got {theta}")
    return SystemConfig(lam, q, (
        _hyperexp_class("hot", 0.7, 3, 1, 0.1, 1.0),
        _hyperexp_class("cold", 0.3, 9, 6, 0.1, theta),
    ))


PRESETS = {
    "example1": example1,
    "example2": example2,
    "example3-msr": lambda q=0.8, lam=0.7: example3(MSR_THETA, q, lam),
    "example3-mbr": lambda q=0.8, lam=0.7: example3(MBR_THETA, q, lam),
}

TABLE1_Q = (1.0, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6)
