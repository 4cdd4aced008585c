"""The compiled kernels must reproduce the pure-Python ones."""
import os
import subprocess
import sys

import numpy as np
import pytest

from dss_meanfield import _pykernels, meanfield, simulator
from dss_meanfield.config import example1, example2

ck = pytest.importorskip("dss_meanfield._ckernels")


@pytest.fixture
def use(monkeypatch):
    def switch(mod):
        monkeypatch.setattr(meanfield, "kernels", mod)
        monkeypatch.setattr(simulator, "kernels", mod)
    return switch


@pytest.mark.parametrize("solver", ["solve_dde", "solve_ide"])
@pytest.mark.parametrize("cfg", [example1(0.8), example2(0.8, 0.3)], ids=["ex1", "ex2"])
def test_solvers_agree(use, solver, cfg):
    step = 0.005 if cfg.classes[1].k == 2 else 1 / 400
    use(_pykernels)
    a = getattr(meanfield, solver)(cfg, step=step)
    use(ck)
    b = getattr(meanfield, solver)(cfg, step=step)
    assert a.values.size == b.values.size
    assert np.max(np.abs(a.values - b.values)) < 1e-12


def test_simulator_bit_identical(use):
    sim = simulator.SimConfig(n=40, cfg=example1(0.7), arrivals=20_000, replications=2, seed=9, block=4096)
    use(_pykernels)
    a = simulator.run(sim)
    use(ck)
    b = simulator.run(sim)
    for label in a.classes:
        assert np.array_equal(a.classes[label].samples, b.classes[label].samples)
    assert a.busy_fraction == b.busy_fraction
    assert a.mean_workload == b.mean_workload


def test_flush_agrees():
    rng = np.random.default_rng(0)
    work = rng.exponential(1.0, 50)
    last = rng.uniform(0, 1, 50)
    out = []
    for mod in (_pykernels, ck):
        w, l, acc = work.copy(), last.copy(), np.zeros(3)
        mod.flush(w, l, 1.5, acc, True)
        out.append((w, l, acc))
    for x, y in zip(*out):
        assert np.allclose(x, y, rtol=0, atol=1e-14)


def test_backend_env_override():
    env = dict(os.environ, DSS_MEANFIELD_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import dss_meanfield; print(dss_meanfield.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
