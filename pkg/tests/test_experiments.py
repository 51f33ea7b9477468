import numpy as np
import pytest

from mesh_anneal.annealer import AnnealConfig
from mesh_anneal.experiments import (CapabilityMap, WavelengthTable, clements_path_bound,
                                     derive_seed, mzi_cross_bound, parallel_map,
                                     run_broadband_suite, run_switch,
                                     run_target_distribution, sweep_capability,
                                     switch_campaign_telemetry)
from mesh_anneal.geometry import (ConnectionStyle, GeometrySpec, estimate_length,
                                  length_table, sbend_length)
from mesh_anneal.hardware import (CHIP_POWER_BOUND_W, default_heater_model)
from mesh_anneal.mesh import Architecture, DomainError, build_mesh, propagate

ET, CL = Architecture.ERROR_TOLERANT, Architecture.CLEMENTS
FAST = AnnealConfig(iterations=4000)


def test_two_mode_switch_is_trivial():
    mesh = build_mesh("et", 2, [0.5, 0.5])
    # the default constants target ~56 phases; two phases want a gentler schedule
    for seed in range(5):
        cfg = AnnealConfig(iterations=2000, seed=seed, c=1.0, accept_c=1.0)
        assert run_switch(mesh, 1, 0, cfg).best_infidelity < 1e-6


def test_switch_et_all_outputs():
    mesh = build_mesh("et", 8, 0.65)
    for out in range(8):
        run = run_switch(mesh, out, 0, AnnealConfig(seed=out))
        assert run.best_infidelity < 1e-3, out
        p = propagate(mesh, run.best_phases, 0)
        assert p[out] == pytest.approx(run.best_fidelity, abs=1e-12)


def test_target_indicator_matches_switch():
    mesh = build_mesh("et", 4, 0.7)
    cfg = AnnealConfig(iterations=500, seed=9)
    a = run_switch(mesh, 2, 1, cfg)
    b = run_target_distribution(mesh, np.eye(4)[2], 1, cfg)
    assert a.trace == b.trace


def test_target_arbitrary_profile():
    mesh = build_mesh("et", 8, 0.65)
    profile = np.array([1, 2, 4, 9, 9, 4, 2, 1], dtype=float)
    run = run_target_distribution(mesh, profile / profile.sum(), 0, AnnealConfig(seed=3))
    assert run.best_infidelity < 1e-2
    with pytest.raises(DomainError):
        run_target_distribution(mesh, profile, 0, FAST)


def test_uniform_target():
    mesh = build_mesh("et", 8, 0.65)
    run = run_target_distribution(mesh, np.full(8, 0.125), 0, AnnealConfig(seed=0))
    assert run.best_infidelity < 1e-3


def test_derive_seed_stable():
    assert derive_seed(7, 1, 2, 3) == derive_seed(7, 1, 2, 3)
    assert derive_seed(7, 1, 2, 3) != derive_seed(7, 1, 3, 2)


def test_parallel_map_order():
    assert parallel_map(lambda x: x * x, range(10), workers=4) == [x * x for x in range(10)]


def test_broadband_counts_and_empty():
    table = WavelengthTable(((945.0, 0.65),))
    res = run_broadband_suite(table, [0], AnnealConfig(iterations=50))
    assert len(res.records) == 8 and res.fidelity.shape == (1, 8, 1)
    empty = run_broadband_suite(table, [], AnnealConfig(iterations=50))
    assert empty.records == [] and empty.fidelity.size == 0


def test_broadband_relabel_invariance():
    cfg = AnnealConfig(iterations=300, seed=4)
    a = run_broadband_suite(WavelengthTable(((1.0, 0.6), (2.0, 0.7))), [0, 1], cfg, n_modes=4)
    b = run_broadband_suite(WavelengthTable(((500.0, 0.6), (900.0, 0.7))), [0, 1], cfg,
                            n_modes=4)
    assert np.array_equal(a.fidelity, b.fidelity)


def test_wavelength_table_default():
    table = WavelengthTable.default()
    assert [w for w, _ in table.entries] == [920.0, 945.0, 980.0]
    ts = [t for _, t in table.entries]
    assert ts == sorted(ts) and all(0.5 <= t <= 0.8 for t in ts)
    with pytest.raises(DomainError):
        WavelengthTable(((900.0, 1.5),))


def test_capability_restart_monotone():
    grid, inputs = [0.5, 0.8], [0, 3]
    cfg = AnnealConfig(iterations=600, seed=1)
    one = sweep_capability("et", grid, inputs, 1e-3, cfg, restarts=1, n_modes=4)
    three = sweep_capability("et", grid, inputs, 1e-3, cfg, restarts=3, n_modes=4)
    assert one.capable_set() <= three.capable_set()
    for r1, r3 in zip(one.records, three.records):
        assert r3.worst_infidelity <= r1.worst_infidelity


def test_capability_records_consistent():
    cmap = sweep_capability("clements", [0.5], [0], 1e-3, FAST, restarts=1, n_modes=4)
    assert isinstance(cmap, CapabilityMap)
    for r in cmap.records:
        assert r.capable == (r.worst_infidelity < cmap.threshold)
        assert len(r.per_output) == 4
    with pytest.raises(DomainError):
        sweep_capability("et", [1.2], [0], 1e-3, FAST)
    with pytest.raises(DomainError):
        sweep_capability("et", [0.5], [0], 0.0, FAST)


def test_capability_jitter_mode_runs():
    cmap = sweep_capability("et", [0.65], [0], 1e-3, AnnealConfig(iterations=2000),
                            restarts=1, n_modes=4, jitter_scale=1.0)
    assert len(cmap.records) == 1


@pytest.mark.slow
def test_capability_regions_nest():
    grid = [0.5, 0.75]
    et = sweep_capability("et", grid, [0], 1e-3, AnnealConfig(), restarts=3)
    cl = sweep_capability("clements", grid, [0], 1e-3, AnnealConfig(), restarts=3)
    assert cl.capable_set() <= et.capable_set()
    assert et.capable_set() == {(0, 500000), (0, 750000)}
    assert cl.capable_set() == {(0, 500000)}


def test_mzi_cross_bound_brute_force():
    from mesh_anneal.mesh import mzi_unitary
    thetas = np.linspace(0, 2 * np.pi, 4001, endpoint=False)
    for T in (0.3, 0.5, 0.65, 0.75, 0.9):
        brute = max(abs(mzi_unitary(T, th, 0.4)[1, 0]) ** 2 for th in thetas)
        assert brute == pytest.approx(mzi_cross_bound(T), abs=1e-9)
    assert mzi_cross_bound(0.5) == 1.0


def test_clements_corner_bound():
    # the only route from the top corner to the bottom corner crosses 7 MZIs
    assert clements_path_bound(0.75, 8, 0, 7) == pytest.approx(0.75**7)
    assert clements_path_bound(0.75, 8, 7, 0) == pytest.approx(0.75**7)
    assert clements_path_bound(0.75, 8, 0, 3) is None
    assert clements_path_bound(0.5, 8, 0, 7) == 1.0


def test_clements_corner_bound_holds_empirically():
    T = 0.75
    mesh = build_mesh("clements", 8, T)
    bound = clements_path_bound(T, 8, 0, 7)
    rng = np.random.default_rng(0)
    best = max(propagate(mesh, rng.uniform(0, 2 * np.pi, 56), 0)[7] for _ in range(2000))
    assert best <= bound + 1e-12
    run = run_switch(mesh, 7, 0, AnnealConfig(seed=1))
    assert run.best_infidelity >= 1 - bound - 1e-12
    assert run.best_infidelity == pytest.approx(1 - bound, abs=1e-3)


def test_campaign_telemetry():
    tel = switch_campaign_telemetry(56, 4, 8, 3, 500)
    assert np.all(tel.per_heater_switches == 48000)
    assert tel.total_switches == 2_688_000


def test_hardware_mode_switch_with_crosstalk():
    mesh = build_mesh("et", 8, 0.65)
    model = default_heater_model(mesh)
    run = run_switch(mesh, 5, 0, AnnealConfig(seed=5), mode="hardware", model=model)
    assert run.best_infidelity < 1e-2
    assert run.extras["power_w"] < CHIP_POWER_BOUND_W
    assert run.telemetry.total_switches == sum(run.extras["switches_per_heater"])
    assert run.telemetry.total_switches > 0


def test_crosstalk_off_equivalence():
    mesh = build_mesh("et", 8, 0.65)
    model = default_heater_model(mesh, crosstalk=False)
    for out in (2, 6):
        cfg = AnnealConfig(seed=out)
        ideal = run_switch(mesh, out, 0, cfg)
        hw = run_switch(mesh, out, 0, cfg, mode="hardware", model=model)
        assert abs(hw.best_infidelity - ideal.best_infidelity) < 1e-3 + 1e-3


def test_hardware_mode_needs_model():
    mesh = build_mesh("et", 4, 0.6)
    with pytest.raises(ValueError):
        run_switch(mesh, 1, 0, FAST, mode="hardware")
    with pytest.raises(DomainError):
        run_switch(mesh, 1, 0, FAST, mode="quantum")


# -- geometry -----------------------------------------------------------------

def test_sbend_length():
    assert sbend_length(0.0, 60.0) == 0.0
    assert sbend_length(120.0, 60.0) == pytest.approx(2 * np.sqrt(120 * 60 - 120**2 / 4))
    with pytest.raises(DomainError):
        sbend_length(121.0, 60.0)


def test_geometry_ordering_and_reduction():
    t = length_table()
    et, cd, cs = (t["ErrorTolerant-Diagonal"], t["ClementsMZI-Diagonal"],
                  t["ClementsMZI-Straight"])
    assert et < cd < cs
    assert t["reduction_vs_straight"] > 0.25
    assert t["reduction_vs_diagonal"] > 0.15
    for got, ref in ((et, 90.0), (cd, 107.0), (cs, 122.0)):
        assert abs(got - ref) / ref < 0.15


def test_geometry_monotone_in_radius():
    base, big, small = GeometrySpec(), GeometrySpec(bend_radius=120.0), GeometrySpec(bend_radius=30.0)
    for arch, style in ((ET, ConnectionStyle.DIAGONAL), (CL, ConnectionStyle.DIAGONAL),
                        (CL, ConnectionStyle.STRAIGHT), (ET, ConnectionStyle.STRAIGHT)):
        L = estimate_length(arch, base, style)
        assert estimate_length(arch, big, style) > L > estimate_length(arch, small, style)
    t = length_table(small)
    assert t["ErrorTolerant-Diagonal"] < t["ClementsMZI-Diagonal"] < t["ClementsMZI-Straight"]


def test_geometry_monotone_in_offset_and_size():
    for arch in (ET, CL):
        lengths = [estimate_length(arch, GeometrySpec(port_pitch=p)) for p in (60, 127, 250)]
        assert lengths == sorted(lengths) and len(set(lengths)) == 3
        by_n = [estimate_length(arch, GeometrySpec(), n_modes=n) for n in (4, 6, 8, 10)]
        assert by_n == sorted(by_n) and len(set(by_n)) == 4


def test_geometry_validation():
    with pytest.raises(DomainError):
        GeometrySpec(port_pitch=0.0)
    with pytest.raises(DomainError):
        GeometrySpec(port_pitch=5.0, coupler_gap=7.8)
    with pytest.raises(DomainError):
        estimate_length(ET, GeometrySpec(bend_radius=0.01))
