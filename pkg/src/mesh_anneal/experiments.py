"""Switching, capability sweeps and arbitrary-target campaigns."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .annealer import AnnealConfig, AnnealRun, optimize
from .hardware import (HeaterModel, SwitchTelemetry, currents_from_controls,
                       dissipated_power, hardware_objective, quantize_currents,
                       record_switch)
from .mesh import (Architecture, ContractError, DomainError, MeshLayout,
                   build_mesh, sample_transmissions)

IDEAL = "ideal"
HARDWARE = "hardware"
DEFAULT_THRESHOLD = 1e-3
DEFAULT_RESTARTS = 3
JITTER_HALF_WIDTH = 0.15


@dataclass(frozen=True)
class WavelengthTable:
    entries: tuple  # ((wavelength_nm, transmission), ...)

    def __post_init__(self):
        entries = tuple((float(w), float(t)) for w, t in self.entries)
        for w, t in entries:
            if not 0.0 <= t <= 1.0:
                raise DomainError(f"transmission {t} at {w} nm outside [0, 1]")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def default(cls) -> "WavelengthTable":
        # illustrative values inside the [0.5, 0.8] working band
        return cls(((920.0, 0.55), (945.0, 0.65), (980.0, 0.75)))

    @classmethod
    def from_mapping(cls, mapping) -> "WavelengthTable":
        return cls(tuple(sorted((float(k), float(v)) for k, v in mapping.items())))

    def __len__(self):
        return len(self.entries)


def derive_seed(seed: int, *coords) -> int:
    """Stable per-record seed from a campaign seed and integer coordinates."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(c) for c in coords]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def t_key(T: float) -> int:
    return int(round(T * 1_000_000))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MESH_ANNEAL_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items, workers: int | None = None) -> list:
    """``map`` over ``items``, results in input order regardless of scheduling."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def indicator(n: int, k: int) -> np.ndarray:
    if not 0 <= k < n:
        raise DomainError(f"port {k} out of range for {n} modes")
    v = np.zeros(n)
    v[k] = 1.0
    return v


def run_target_distribution(mesh: MeshLayout, target, input_port: int,
                            config: AnnealConfig, mode: str = IDEAL,
                            model: HeaterModel | None = None,
                            stop_below: float | None = None) -> AnnealRun:
    """Anneal the mesh so light from ``input_port`` matches ``target``.

    In hardware mode the annealer drives heater currents through ``model``;
    the run's ``extras`` carry best currents, electrical power and switch
    telemetry.
    """
    target = np.ascontiguousarray(target, dtype=np.float64)
    if target.shape != (mesh.n_modes,):
        raise ContractError("target length does not match mesh modes")
    if np.any(target < 0) or abs(target.sum() - 1.0) > 1e-9:
        raise DomainError("target must be a normalized power distribution")
    if not 0 <= input_port < mesh.n_modes:
        raise DomainError(f"input port {input_port} out of range")
    if config.dims != mesh.n_phases:
        config = config.replace(dims=mesh.n_phases)

    if mode == IDEAL:
        evaluator, port = mesh.evaluator, int(input_port)
        run = optimize(lambda ph: evaluator.infidelity(ph, port, target), config,
                       stop_below=stop_below)
        run.extras["mode"] = IDEAL
        return run
    if mode != HARDWARE:
        raise DomainError(f"unknown mode {mode!r}")
    if model is None:
        raise ContractError("hardware mode needs a heater model")

    hw = hardware_objective(mesh, model, target, input_port)
    telemetry = SwitchTelemetry.empty(model.n_heaters)
    last = [None]

    def objective(controls):
        nonlocal telemetry
        currents = quantize_currents(currents_from_controls(controls, model), model)
        if last[0] is not None:
            telemetry = record_switch(telemetry, np.flatnonzero(currents != last[0]))
        last[0] = currents
        return hw(currents)

    run = optimize(objective, config, stop_below=stop_below)
    best_currents = quantize_currents(currents_from_controls(run.best_phases, model), model)
    total, _ = dissipated_power(best_currents, model)
    run.extras.update(mode=HARDWARE, best_currents=[float(x) for x in best_currents],
                      power_w=total,
                      switches_per_heater=[int(c) for c in telemetry.per_heater_switches],
                      total_switches=telemetry.total_switches)
    run.telemetry = telemetry
    return run


def run_switch(mesh: MeshLayout, target_output: int, input_port: int,
               config: AnnealConfig, mode: str = IDEAL,
               model: HeaterModel | None = None,
               stop_below: float | None = None) -> AnnealRun:
    """Route all power from ``input_port`` to ``target_output``."""
    target = indicator(mesh.n_modes, target_output)
    return run_target_distribution(mesh, target, input_port, config, mode, model,
                                   stop_below)


def best_of_restarts(mesh, target_output, input_port, config, restarts,
                     seed_coords, threshold=None, mode=IDEAL, model=None):
    """Best run over seeded restarts; stops at the first run below ``threshold``."""
    best = None
    for r in range(restarts):
        cfg = config.replace(seed=derive_seed(config.seed, *seed_coords, r))
        run = run_switch(mesh, target_output, input_port, cfg, mode, model,
                         stop_below=threshold)
        if best is None or run.best_infidelity < best.best_infidelity:
            best = run
        if threshold is not None and best.best_infidelity < threshold:
            break
    return best


@dataclass
class BroadbandResult:
    wavelengths: list
    inputs: list
    fidelity: np.ndarray  # (input, output, wavelength)
    records: list = field(default_factory=list)  # dict rows


def run_broadband_suite(wavelengths: WavelengthTable, inputs, config: AnnealConfig,
                        architecture=Architecture.ERROR_TOLERANT, n_modes: int = 8,
                        mode: str = IDEAL, model: HeaterModel | None = None,
                        restarts: int = 1, threshold: float | None = None,
                        workers: int | None = None) -> BroadbandResult:
    """Switch every (input, output) pair at every tabulated transmission.

    Seeds depend on (input, output, transmission, restart), never on the
    wavelength label, so relabeling wavelengths leaves results unchanged.
    """
    inputs = [int(i) for i in inputs]
    entries = list(wavelengths.entries)
    jobs = [(wi, i, o) for wi in range(len(entries)) for i in inputs
            for o in range(n_modes)]
    meshes = {wi: build_mesh(architecture, n_modes, T) for wi, (_, T) in enumerate(entries)}

    def job(item):
        wi, i, o = item
        T = entries[wi][1]
        return best_of_restarts(meshes[wi], o, i, config, restarts,
                                (i, o, t_key(T)), threshold, mode, model)

    runs = parallel_map(job, jobs, workers)
    F = np.zeros((len(inputs), n_modes, len(entries)))
    records = []
    for (wi, i, o), run in zip(jobs, runs):
        F[inputs.index(i), o, wi] = run.best_fidelity
        records.append({"wavelength": entries[wi][0], "input": i, "output": o,
                        "fidelity": run.best_fidelity, "iterations": run.evaluations,
                        "run": run})
    records.sort(key=lambda r: (r["wavelength"], r["input"], r["output"]))
    return BroadbandResult([w for w, _ in entries], inputs, F, records)


@dataclass(frozen=True)
class CapabilityRecord:
    architecture: Architecture
    input_port: int
    transmission: float
    capable: bool
    worst_infidelity: float
    per_output: tuple = ()


@dataclass
class CapabilityMap:
    threshold: float
    records: list

    def capable_set(self) -> set:
        return {(r.input_port, t_key(r.transmission)) for r in self.records if r.capable}


def sweep_capability(architecture, T_grid, inputs, threshold: float = DEFAULT_THRESHOLD,
                     config: AnnealConfig = AnnealConfig(), restarts: int = DEFAULT_RESTARTS,
                     n_modes: int = 8, jitter_scale: float | None = None,
                     workers: int | None = None) -> CapabilityMap:
    """Port-to-port switching capability over a transmission grid.

    A (T, input) point is capable when every output is reached below
    ``threshold`` by the best of ``restarts`` seeded runs. With
    ``jitter_scale`` each coupler's transmission is drawn uniformly from
    ``T +- 0.15 * jitter_scale`` instead of taking the grid value.
    """
    arch = Architecture.parse(architecture)
    if not threshold > 0:
        raise DomainError("threshold must be > 0")
    grid = [float(T) for T in T_grid]
    for T in grid:
        if not 0.0 <= T <= 1.0:
            raise DomainError(f"transmission {T} outside [0, 1]")
    inputs = [int(i) for i in inputs]
    arch_code = 0 if arch is Architecture.ERROR_TOLERANT else 1

    def mesh_for(T):
        mesh = build_mesh(arch, n_modes, T)
        if jitter_scale:
            ts = sample_transmissions(T, JITTER_HALF_WIDTH * jitter_scale, mesh.n_blocks,
                                      derive_seed(config.seed, arch_code, t_key(T)))
            mesh = mesh.with_transmissions(ts)
        return mesh

    meshes = {T: mesh_for(T) for T in grid}
    jobs = [(T, i, o) for T in grid for i in inputs for o in range(n_modes)]

    def job(item):
        T, i, o = item
        run = best_of_restarts(meshes[T], o, i, config, restarts,
                               (arch_code, i, o, t_key(T)), threshold)
        return run.best_infidelity

    values = parallel_map(job, jobs, workers)
    by_point: dict = {}
    for (T, i, o), v in zip(jobs, values):
        by_point.setdefault((T, i), []).append(v)
    records = []
    for T in grid:
        for i in inputs:
            vals = by_point[(T, i)]
            worst = max(vals)
            records.append(CapabilityRecord(arch, i, T, worst < threshold, worst,
                                            tuple(vals)))
    return CapabilityMap(threshold, records)


def switch_campaign_telemetry(n_heaters: int, inputs: int, outputs: int,
                              wavelengths: int, iterations: int) -> SwitchTelemetry:
    """Bookkeeping for a campaign that reconfigures every heater each iteration."""
    tel = SwitchTelemetry.empty(n_heaters)
    every = range(n_heaters)
    for _ in range(inputs * outputs * wavelengths):
        tel = record_switch(tel, every, times=iterations)
    return tel


def clements_path_bound(T: float, n_modes: int, input_port: int,
                        output_port: int) -> float | None:
    """Upper bound on output power when a single MZI path links the ports.

    Enumerates bar/cross routes through the Clements MZI layers. If exactly
    one route connects ``input_port`` to ``output_port``, the output
    amplitude is the product of the MZI amplitudes along it, so the power is
    at most ``(4T(1-T))**n_cross``. Returns None when several routes exist
    (interference makes the product bound invalid) and 0.0 when none does.
    """
    mesh = build_mesh(Architecture.CLEMENTS, n_modes, T)
    layers = [sorted({b.top_mode for b in col}) for col in mesh.columns()[::2]]
    # paths[m] = list of cross counts of routes ending on mode m
    paths = {input_port: [0]}
    for tops in layers:
        nxt: dict = {}
        for m, counts in paths.items():
            partner = None
            if m in tops:
                partner = m + 1
            elif m - 1 in tops:
                partner = m - 1
            if partner is None:
                nxt.setdefault(m, []).extend(counts)
                continue
            nxt.setdefault(m, []).extend(counts)
            nxt.setdefault(partner, []).extend(c + 1 for c in counts)
        paths = nxt
    routes = paths.get(output_port, [])
    if not routes:
        return 0.0
    if len(routes) > 1:
        return None
    return (4.0 * T * (1.0 - T)) ** routes[0]


def mzi_cross_bound(T: float) -> float:
    """Largest cross-port power of an MZI built from two couplers of transmission T."""
    return 4.0 * T * (1.0 - T)
