import math

import numpy as np
import pytest

from mesh_anneal.annealer import (AnnealAborted, AnnealConfig, fidelity, infidelity,
                                  metropolis_accept, optimize, vfsa_propose,
                                  vfsa_step, vfsa_temperature)
from mesh_anneal.mesh import DomainError, build_mesh, propagate


def test_fidelity_examples():
    assert fidelity([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == pytest.approx(1.0)
    assert fidelity([1, 0, 0], [0, 1, 0]) == 0.0
    assert fidelity([0.5, 0.5], [1, 0]) == pytest.approx(0.5)
    assert fidelity([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.93301, abs=1e-5)
    assert infidelity([0.5, 0.5], [1, 0]) == pytest.approx(0.5)
    assert infidelity([1, 0], [0, 1]) == 1.0
    assert infidelity([0.1, 0.9], [0.1, 0.9]) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("X,Y", [([0.5, 0.6], [0.5, 0.5]),
                                 ([1.0], [0.5, 0.5]),
                                 ([-0.1, 1.1], [0.5, 0.5])])
def test_fidelity_domain(X, Y):
    with pytest.raises(DomainError):
        fidelity(X, Y)


def test_vfsa_temperature():
    assert vfsa_temperature(0, 2.5, 3.0, 7) == 2.5
    assert vfsa_temperature(4, 1.0, 1.0, 1) == pytest.approx(0.018316, abs=1e-6)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        # ranges keep c * k**(1/dims) far from exp underflow
        t0, c = rng.uniform(0.01, 10, 2)
        dims = int(rng.integers(2, 80))
        k = int(rng.integers(0, 1000))
        assert vfsa_temperature(k + 1, t0, c, dims) < vfsa_temperature(k, t0, c, dims)


def test_vfsa_step_endpoints():
    for temp in (1e-50, 1e-3, 0.3, 1.0, 10.0):
        assert vfsa_step(0.5, temp) == 0.0
        assert vfsa_step(1.0, temp) == pytest.approx(1.0, rel=1e-12)
        assert vfsa_step(0.0, temp) == pytest.approx(-1.0, rel=1e-12)


class _FixedRng:
    def __init__(self, value):
        self.value = value

    def random(self, shape=None):
        return np.full(shape, self.value) if shape is not None else self.value


def test_vfsa_propose_fixed_draws():
    x = np.array([0.1, 3.0, 6.0])
    assert np.array_equal(vfsa_propose(x, 0.2, _FixedRng(0.5)), x)
    y = vfsa_propose(x, 0.2, _FixedRng(1.0 - 1e-16))
    # a full-turn step wraps back onto the start
    d = np.angle(np.exp(1j * (y - x)))
    assert np.allclose(d, 0.0, atol=1e-9)
    with pytest.raises(DomainError):
        vfsa_propose(x, 0.0, np.random.default_rng(0))


def test_vfsa_step_concentrates_when_cold():
    u = np.random.default_rng(1).random(10**5)
    cold = np.median(np.abs(vfsa_step(u, 0.01)))
    hot = np.median(np.abs(vfsa_step(u, 1.0)))
    # analytic medians: 0.01 * (sqrt(101) - 1) = 0.0905 vs sqrt(2) - 1 = 0.414
    assert cold == pytest.approx(0.0905, abs=0.002)
    assert hot == pytest.approx(0.4142, abs=0.005)
    assert cold < 0.25 * hot


def test_metropolis():
    rng = np.random.default_rng(2)
    assert all(metropolis_accept(-0.1, 0.01, rng) for _ in range(100))
    assert all(metropolis_accept(0.0, 0.01, rng) for _ in range(100))
    rate = np.mean([metropolis_accept(0.05, 0.05, rng) for _ in range(10**5)])
    assert rate == pytest.approx(math.exp(-1), abs=0.01)


def test_config_validation():
    with pytest.raises(DomainError):
        AnnealConfig(t0=0.0)
    with pytest.raises(DomainError):
        AnnealConfig(iterations=0)


def test_optimize_already_optimal():
    run = optimize(lambda p: float(np.sum(1 - np.cos(p)) / 6), AnnealConfig(dims=3),
                   initial=np.zeros(3))
    assert run.trace[0] == (0, 0.0)
    assert run.best_fidelity == 1.0


def test_optimize_one_dimensional():
    def f(p):
        return (1 - math.cos(p[0])) / 2
    grid = np.linspace(0, 2 * np.pi, 100001)
    assert min(f([g]) for g in grid) < 1e-9  # minimum at phi = 0
    # with one dimension the schedule is plain exponential cooling, so c is small
    cfg = AnnealConfig(dims=1, iterations=200, c=0.1, accept_c=0.1)
    for seed in range(20):
        assert optimize(f, cfg.replace(seed=seed)).best_infidelity < 1e-4


def test_optimize_trace_and_determinism():
    mesh = build_mesh("et", 4, 0.65)
    target = np.array([0, 0, 1.0, 0])
    ev = mesh.evaluator

    def obj(p):
        return ev.infidelity(p, 0, target)
    cfg = AnnealConfig(dims=mesh.n_phases, iterations=1500, seed=11)
    a, b = optimize(obj, cfg), optimize(obj, cfg)
    assert a.trace == b.trace
    assert np.array_equal(a.best_phases, b.best_phases)
    vals = [v for _, v in a.trace]
    assert all(x >= y for x, y in zip(vals, vals[1:]))
    assert a.best_fidelity == pytest.approx(1 - vals[-1], abs=1e-12)
    assert obj(a.best_phases) == pytest.approx(a.best_infidelity, abs=1e-15)


def test_optimize_switch_8_modes():
    mesh = build_mesh("et", 8, 0.65)
    target = np.eye(8)[5]
    run = optimize(lambda p: mesh.evaluator.infidelity(p, 0, target), AnnealConfig(seed=5))
    assert run.best_infidelity < 1e-3


def test_optimize_aborts_on_nan():
    with pytest.raises(AnnealAborted):
        optimize(lambda p: float("nan"), AnnealConfig(dims=2, iterations=5))


def test_permutation_equivariance_n4():
    mesh = build_mesh("et", 4, 0.7)
    target = np.array([0.1, 0.2, 0.3, 0.4])
    perm = np.array([2, 0, 3, 1])

    def obj(p):
        return infidelity(propagate(mesh, p, 1), target)

    def obj_perm(p):
        return infidelity(propagate(mesh, p, 1)[perm], target[perm])
    rng = np.random.default_rng(0)
    for _ in range(100):
        p = rng.uniform(0, 2 * np.pi, mesh.n_phases)
        assert obj(p) == pytest.approx(obj_perm(p), abs=1e-12)
    cfg = AnnealConfig(dims=mesh.n_phases, iterations=3000, seed=3)
    a, b = optimize(obj, cfg), optimize(obj_perm, cfg)
    # the optimum for one ordering is optimal for the other, permuted identically
    achieved = propagate(mesh, a.best_phases, 1)
    assert obj_perm(a.best_phases) == pytest.approx(a.best_infidelity, abs=1e-12)
    assert infidelity(achieved[perm], target[perm]) == pytest.approx(
        infidelity(achieved, target), abs=1e-12)
    assert a.best_infidelity < 1e-3 and b.best_infidelity < 1e-3


def test_run_export(tmp_path):
    run = optimize(lambda p: (1 - math.cos(p[0])) / 2, AnnealConfig(dims=1, iterations=20))
    run.save(tmp_path / "t.csv", tmp_path / "t.json")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,best_infidelity"
    assert len(lines) == len(run.trace) + 1
    import json
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["seed"] == 0 and len(doc["best_phases"]) == 1
