"""Finite-N workload-level simulator of the storage system under LL(d, k).

Each server is tracked by its remaining workload, decayed lazily at unit rate
from the last time it was touched.  A type-``i`` arrival samples ``d_i``
distinct servers, each independently up with probability ``q``; one fragment
time is added to the ``min(j, k_i)`` least loaded of the ``j`` up servers.
When ``j >= k_i`` the response is the ``k_i``-th smallest workload plus the
fragment time; otherwise the request is lost (its fragments still load the
servers).

Random inputs are drawn in blocks with numpy and handed to a kernel, so the
compiled and pure-Python kernels consume identical streams.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._backend import kernels
from .storage_model import ConfigError, SystemConfig, system_load

SCHEMA_VERSION = 1
MAX_WIDTH = 64  # kernel scratch size


@dataclass(frozen=True)
class SimConfig:
    n: int
    cfg: SystemConfig
    arrivals: int = 2_500_000  # per replication, warmup included
    warmup_fraction: float = 0.2
    seed: int = 0
    replications: int = 5
    block: int = 1 << 16
    export_step: float = 0.05

    def __post_init__(self):
        dmax = max(c.d for c in self.cfg.classes)
        if self.n < dmax:
            raise ConfigError("n", f"need at least max d = {dmax} servers, got {self.n}")
        if dmax > MAX_WIDTH:
            raise ConfigError("d", f"storage width above {MAX_WIDTH} is not supported")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction", "must lie in [0, 1)")
        if self.replications < 1:
            raise ConfigError("replications", "must be >= 1")
        if self.arrivals < 1:
            raise ConfigError("arrivals", "must be >= 1")


@dataclass
class ArrivalBlock:
    """Random inputs for a run of consecutive arrivals."""

    gaps: np.ndarray
    cls: np.ndarray
    sel_u: np.ndarray
    up_u: np.ndarray
    xhat: np.ndarray


def draw_block(rng: np.random.Generator, cfg: SystemConfig, n: int, m: int) -> ArrivalBlock:
    dmax = max(c.d for c in cfg.classes)
    gaps = rng.exponential(1.0 / (cfg.lam * n), m)
    cum = np.cumsum([c.p for c in cfg.classes])
    cum[-1] = 1.0
    cls = np.searchsorted(cum, rng.random(m), side="right").astype(np.int64)
    sel_u = rng.random((m, dmax))
    up_u = rng.random((m, dmax))
    xhat = np.empty(m)
    for i, c in enumerate(cfg.classes):
        mask = cls == i
        cnt = int(mask.sum())
        if cnt:
            xhat[mask] = c.service.sample(rng, cnt)
    return ArrivalBlock(gaps, cls, sel_u, up_u, xhat)


class ServerState:
    """Mutable per-replication state shared with the kernels."""

    def __init__(self, n: int):
        self.work = np.zeros(n)
        self.last = np.zeros(n)
        self.perm = np.arange(n, dtype=np.int64)
        self.clock = np.zeros(1)
        self.acc = np.zeros(3)  # busy time, workload area, work added

    @property
    def time(self) -> float:
        return float(self.clock[0])

    def workloads(self) -> np.ndarray:
        """Current workloads brought forward to the clock (no side effects)."""
        return np.maximum(self.work - (self.time - self.last), 0.0)

    def run(self, cfg: SystemConfig, blk: ArrivalBlock, record: bool):
        m = blk.gaps.size
        resp = np.empty(m)
        status = np.empty(m, dtype=np.int8)
        d = np.array([c.d for c in cfg.classes], dtype=np.int64)
        k = np.array([c.k for c in cfg.classes], dtype=np.int64)
        kernels.simulate_block(self.work, self.last, self.perm, self.clock, blk.gaps, blk.cls,
                               blk.sel_u, blk.up_u, blk.xhat, d, k, float(cfg.q), bool(record),
                               resp, status, self.acc)
        return resp, status

    def flush(self, record: bool):
        kernels.flush(self.work, self.last, self.time, self.acc, bool(record))


@dataclass
class _Replication:
    responses: list
    lost: list
    busy: float
    mean_workload: float
    work_rate: float
    duration: float


def _replicate(sim: SimConfig, seed: np.random.SeedSequence) -> _Replication:
    cfg = sim.cfg
    rng = np.random.Generator(np.random.PCG64(seed))
    st = ServerState(sim.n)
    warm = int(sim.arrivals * sim.warmup_fraction)
    C = len(cfg.classes)
    resp_parts = [[] for _ in range(C)]
    lost = [0] * C

    def blocks(total):
        done = 0
        while done < total:
            m = min(sim.block, total - done)
            yield draw_block(rng, cfg, sim.n, m)
            done += m

    for blk in blocks(warm):
        st.run(cfg, blk, record=False)
    st.flush(record=False)
    t0 = st.time
    for blk in blocks(sim.arrivals - warm):
        resp, status = st.run(cfg, blk, record=True)
        for i in range(C):
            mine = blk.cls == i
            lost[i] += int(np.count_nonzero(status[mine] == 1))
            resp_parts[i].append(resp[mine & (status == 0)])
    st.flush(record=True)
    T = st.time - t0
    denom = sim.n * T if T > 0 else math.nan
    return _Replication(
        responses=[np.concatenate(p) if p else np.empty(0) for p in resp_parts],
        lost=lost,
        busy=st.acc[0] / denom,
        mean_workload=st.acc[1] / denom,
        work_rate=st.acc[2] / denom,
        duration=T,
    )


def _half_width(xs) -> float:
    xs = np.asarray(xs, dtype=float)
    if xs.size < 2 or not np.all(np.isfinite(xs)):
        return math.nan
    return float(stats.t.ppf(0.975, xs.size - 1) * xs.std(ddof=1) / math.sqrt(xs.size))


def empirical_ccdf(samples, grid):
    """Right-continuous ``P(X > u)`` at each grid point."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("empirical_ccdf needs at least one sample")
    g = np.asarray(grid, dtype=float)
    out = 1.0 - np.searchsorted(x, g, side="right") / x.size
    return float(out) if np.ndim(grid) == 0 else out


def ks_distance(samples, grid_step: float, ccdf_values) -> float:
    """Kolmogorov-Smirnov distance between samples and a tabulated CCDF."""
    vals = np.asarray(ccdf_values, dtype=float)
    grid = grid_step * np.arange(vals.size)

    def cdf(x):
        return 1.0 - np.interp(x, grid, vals, right=0.0)

    return float(stats.kstest(np.asarray(samples, dtype=float), cdf).statistic)


@dataclass
class ClassReport:
    label: str
    served: int
    lost: int
    mean: float
    variance: float
    rep_means: list[float]
    ci_half_width: float
    ccdf: list[float]
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def loss_fraction(self) -> float:
        tot = self.served + self.lost
        return self.lost / tot if tot else math.nan


@dataclass
class SimReport:
    n: int
    seed: int
    arrivals: int
    replications: int
    rho: float
    busy_fraction: float
    busy_ci_half_width: float
    mean_workload: float
    mean_workload_ci_half_width: float
    work_rate: float
    rep_busy: list[float]
    rep_mean_workload: list[float]
    export_step: float
    classes: dict[str, ClassReport]
    backend: str = kernels.BACKEND

    @property
    def unstable(self) -> bool:
        return self.rho >= 1.0

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "seed": self.seed,
            "arrivals_per_replication": self.arrivals,
            "replications": self.replications,
            "rho": self.rho,
            "unstable": self.unstable,
            "busy_fraction": self.busy_fraction,
            "busy_ci_half_width": self.busy_ci_half_width,
            "mean_workload": self.mean_workload,
            "mean_workload_ci_half_width": self.mean_workload_ci_half_width,
            "work_rate": self.work_rate,
            "rep_busy": self.rep_busy,
            "rep_mean_workload": self.rep_mean_workload,
            "export_step": self.export_step,
            "classes": {
                k: {
                    "served": c.served,
                    "lost": c.lost,
                    "loss_fraction": c.loss_fraction,
                    "mean_response": c.mean,
                    "variance": c.variance,
                    "rep_means": c.rep_means,
                    "ci_half_width": c.ci_half_width,
                    "ccdf": c.ccdf,
                }
                for k, c in self.classes.items()
            },
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(_nan_to_none(self.to_dict()), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def dump_samples(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["class", "response"])
            for label, c in self.classes.items():
                for x in (c.samples if c.samples is not None else ()):
                    wr.writerow([label, repr(float(x))])


def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def run(sim: SimConfig, workers: int = 1, keep_samples: bool = True) -> SimReport:
    """Run all replications and merge them in replication order."""
    seeds = np.random.SeedSequence(sim.seed).spawn(sim.replications)
    if workers > 1 and sim.replications > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(lambda s: _replicate(sim, s), seeds))
    else:
        reps = [_replicate(sim, s) for s in seeds]

    classes = {}
    for i, c in enumerate(sim.cfg.classes):
        pooled = np.concatenate([r.responses[i] for r in reps])
        rep_means = [float(r.responses[i].mean()) if r.responses[i].size else math.nan for r in reps]
        if pooled.size:
            top = float(pooled.max())
            grid = sim.export_step * np.arange(int(math.ceil(top / sim.export_step)) + 2)
            ccdf = empirical_ccdf(pooled, grid).tolist()
            mean, var = float(pooled.mean()), float(pooled.var(ddof=1)) if pooled.size > 1 else 0.0
        else:
            ccdf, mean, var = [], math.nan, math.nan
        classes[c.label] = ClassReport(
            label=c.label,
            served=int(pooled.size),
            lost=sum(r.lost[i] for r in reps),
            mean=mean,
            variance=var,
            rep_means=rep_means,
            ci_half_width=_half_width(rep_means),
            ccdf=ccdf,
            samples=pooled if keep_samples else None,
        )
    busy = [float(r.busy) for r in reps]
    mw = [float(r.mean_workload) for r in reps]
    return SimReport(
        n=sim.n,
        seed=sim.seed,
        arrivals=sim.arrivals,
        replications=sim.replications,
        rho=system_load(sim.cfg),
        busy_fraction=float(np.mean(busy)),
        busy_ci_half_width=_half_width(busy),
        mean_workload=float(np.mean(mw)),
        mean_workload_ci_half_width=_half_width(mw),
        work_rate=float(np.mean([r.work_rate for r in reps])),
        rep_busy=busy,
        rep_mean_workload=mw,
        export_step=sim.export_step,
        classes=classes,
    )
