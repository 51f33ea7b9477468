"""Thermo-optic actuation: currents, crosstalk, power, calibration, telemetry.

Heater phase law: ``phi_i = phi0_i + sum_j alpha[i, j] * (x_j / ma_per_unit)**2``
with currents ``x`` in mA. ``alpha`` is in rad per current-unit squared.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .annealer import TWO_PI
from .mesh import ContractError, DomainError, MeshLayout

# Fitted values for three heaters of one column (rows h1, h2, h3).
TABLE_I = {
    "h1": dict(alpha=1.27e-4, phi0=0.104, A=0.68, B=0.30),
    "h2": dict(alpha=3.85e-5, phi0=0.115, A=0.68, B=0.32),
    "h3": dict(alpha=2.03e-5, phi0=0.169, A=0.68, B=0.32),
}
DIRECT_ALPHA = TABLE_I["h1"]["alpha"]
NEIGHBOR_RATIO = 3.26
NEXT_NEIGHBOR_RATIO = 6.35
HEATER_RESISTANCE = 480.0  # ohm, measured h1..h3
CURRENT_2PI_MA = 26.1  # mA for a 2*pi shift on a direct heater
CURRENT_MAX_MA = 60.0
CURRENT_STEP_MA = 0.01
CHIP_POWER_BOUND_W = 18.5

# mA per current-unit that makes DIRECT_ALPHA produce 2*pi at CURRENT_2PI_MA
CALIBRATED_MA_PER_UNIT = CURRENT_2PI_MA / math.sqrt(TWO_PI / DIRECT_ALPHA)


class UnidentifiableError(ValueError):
    """Sweep data cannot pin down the oscillation parameters."""


class SweepFormatError(ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class HeaterModel:
    alpha: np.ndarray
    phi0: np.ndarray
    resistance: np.ndarray
    current_max: float = CURRENT_MAX_MA
    current_step: float = CURRENT_STEP_MA
    ma_per_unit: float = 1.0

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64)
        H = alpha.shape[0]
        if alpha.shape != (H, H):
            raise ContractError(f"alpha must be square, got {alpha.shape}")
        phi0 = np.broadcast_to(np.asarray(self.phi0, dtype=np.float64), (H,)).copy()
        res = np.broadcast_to(np.asarray(self.resistance, dtype=np.float64), (H,)).copy()
        diag = np.diag(alpha)
        off = alpha - np.diag(diag)
        if np.any(diag <= 0):
            raise DomainError("alpha diagonal entries must be > 0")
        if np.any(off < 0) or np.any(off >= diag[:, None]):
            raise DomainError("off-diagonal alpha must lie in [0, diagonal of its row)")
        if np.any(res <= 0):
            raise DomainError("resistances must be > 0")
        for name in ("current_max", "current_step", "ma_per_unit"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")
        for name, arr in (("alpha", alpha), ("phi0", phi0), ("resistance", res)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_heaters(self) -> int:
        return self.alpha.shape[0]

    def current_for_2pi(self) -> np.ndarray:
        """Per-heater current (mA) giving a 2*pi direct shift, capped at current_max."""
        x = self.ma_per_unit * np.sqrt(TWO_PI / np.diag(self.alpha))
        return np.minimum(x, self.current_max)

    def to_dict(self) -> dict:
        H = self.n_heaters
        return {
            "n_heaters": H,
            "alpha": [float(a) for a in self.alpha.ravel()],
            "phi0": [float(p) for p in self.phi0],
            "resistance": [float(r) for r in self.resistance],
            "current_max": self.current_max,
            "current_step": self.current_step,
            "ma_per_unit": self.ma_per_unit,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HeaterModel":
        phi0 = np.asarray(doc["phi0"], dtype=np.float64)
        H = phi0.size
        alpha = np.asarray(doc["alpha"], dtype=np.float64)
        if alpha.size != H * H:
            raise ContractError(f"alpha has {alpha.size} entries, expected {H * H}")
        return cls(alpha.reshape(H, H), phi0, doc["resistance"],
                   float(doc.get("current_max", CURRENT_MAX_MA)),
                   float(doc.get("current_step", CURRENT_STEP_MA)),
                   float(doc.get("ma_per_unit", 1.0)))

    def save(self, path, **extra) -> None:
        with open(path, "w") as fh:
            json.dump({**self.to_dict(), **extra}, fh, indent=2)

    @classmethod
    def load(cls, path) -> "HeaterModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def heater_columns(mesh: MeshLayout) -> list[list[int]]:
    """Phase indices grouped by mesh column, ordered top to bottom."""
    groups = []
    for col in mesh.columns():
        idx = [b.phase_index for b in col if b.phase_index is not None]
        if idx:
            groups.append(idx)
    return groups


def crosstalk_matrix_default(mesh: MeshLayout, alpha_direct: float = DIRECT_ALPHA,
                             ratios=(NEIGHBOR_RATIO, NEXT_NEIGHBOR_RATIO)) -> np.ndarray:
    """Transverse crosstalk within heater columns.

    First and second neighbours in a column get ``alpha_direct / ratios[k]``;
    heaters in different columns do not couple.
    """
    H = mesh.n_phases
    alpha = np.zeros((H, H))
    for group in heater_columns(mesh):
        for a, i in enumerate(group):
            alpha[i, i] = alpha_direct
            for b, j in enumerate(group):
                d = abs(a - b)
                if 1 <= d <= len(ratios):
                    alpha[i, j] = alpha_direct / ratios[d - 1]
    return alpha


def default_heater_model(mesh: MeshLayout, crosstalk: bool = True,
                         random_offsets_seed: int | None = None) -> HeaterModel:
    """Heater model with crosstalk, measured offsets tiled, and calibrated units.

    ``ma_per_unit`` is set so that the direct coefficient yields 2*pi at
    26.1 mA. With ``random_offsets_seed`` the offsets are uniform in [0, 2pi).
    """
    H = mesh.n_phases
    alpha = crosstalk_matrix_default(mesh)
    if not crosstalk:
        alpha = np.diag(np.diag(alpha))
    if random_offsets_seed is None:
        table = [TABLE_I[h]["phi0"] for h in ("h1", "h2", "h3")]
        phi0 = np.resize(table, H)
    else:
        phi0 = np.random.default_rng(random_offsets_seed).uniform(0, TWO_PI, H)
    return HeaterModel(alpha, phi0, np.full(H, HEATER_RESISTANCE),
                       ma_per_unit=CALIBRATED_MA_PER_UNIT)


def quantize_currents(currents, model: HeaterModel, return_clipped: bool = False):
    """Clip to ``[0, current_max]`` and round to the current source step."""
    x = np.asarray(currents, dtype=np.float64)
    clipped = np.clip(x, 0.0, model.current_max)
    n_clipped = int(np.count_nonzero(clipped != x))
    q = np.round(clipped / model.current_step) * model.current_step
    q = np.minimum(q, model.current_max)
    return (q, n_clipped) if return_clipped else q


def phases_from_currents(currents, model: HeaterModel) -> np.ndarray:
    x = np.asarray(currents, dtype=np.float64)
    if x.shape != (model.n_heaters,):
        raise ContractError(f"expected {model.n_heaters} currents, got shape {x.shape}")
    units_sq = (x / model.ma_per_unit) ** 2
    return np.mod(model.phi0 + model.alpha @ units_sq, TWO_PI)


def currents_from_controls(controls, model: HeaterModel) -> np.ndarray:
    """Map annealer coordinates in ``[0, 2pi)`` onto heater currents.

    ``x_i = I2pi_i * sqrt(u_i / 2pi)`` so the direct phase contribution is
    linear in ``u``.
    """
    u = np.asarray(controls, dtype=np.float64)
    return model.current_for_2pi() * np.sqrt(np.clip(u, 0.0, TWO_PI) / TWO_PI)


def dissipated_power(currents, model: HeaterModel):
    """Joule heating ``(x / 1000)**2 * R`` per heater; returns ``(total, per_heater)``."""
    x = np.asarray(currents, dtype=np.float64)
    if x.shape != (model.n_heaters,):
        raise ContractError(f"expected {model.n_heaters} currents, got shape {x.shape}")
    per = (x / 1000.0) ** 2 * model.resistance
    return float(per.sum()), per


def hardware_objective(mesh: MeshLayout, model: HeaterModel, target,
                       input_port: int):
    """Infidelity as a function of heater currents (mA).

    Currents are quantized before the phase law is applied, like the
    current source in the loop.
    """
    if mesh.n_phases != model.n_heaters:
        raise ContractError(
            f"mesh has {mesh.n_phases} phases but model has {model.n_heaters} heaters")
    if not 0 <= input_port < mesh.n_modes:
        raise DomainError(f"input port {input_port} out of range")
    target = np.ascontiguousarray(target, dtype=np.float64)
    if target.shape != (mesh.n_modes,):
        raise ContractError("target length does not match mesh modes")
    evaluator = mesh.evaluator
    port = int(input_port)

    def objective(currents):
        phases = phases_from_currents(quantize_currents(currents, model), model)
        return evaluator.infidelity(phases, port, target)

    return objective


# -- calibration -------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationSweep:
    currents: np.ndarray  # mA, strictly increasing
    powers: np.ndarray  # (n_points, n_outputs), rows normalized

    def __post_init__(self):
        x = np.asarray(self.currents, dtype=np.float64)
        P = np.atleast_2d(np.asarray(self.powers, dtype=np.float64))
        if P.shape[0] != x.size:
            raise ContractError("one power row per current is required")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ContractError("currents must be strictly increasing")
        if np.any(x < 0):
            raise ContractError("currents must be non-negative")
        object.__setattr__(self, "currents", x)
        object.__setattr__(self, "powers", P)


@dataclass(frozen=True)
class HeaterFit:
    A: float
    B: float
    alpha: float
    phi0: float
    rms: float

    def predict(self, currents, ma_per_unit: float = 1.0):
        s = (np.asarray(currents, dtype=np.float64) / ma_per_unit) ** 2
        return self.A - self.B * np.cos(self.alpha * s + self.phi0)


def heater_response(currents, A, B, alpha, phi0, ma_per_unit: float = 1.0):
    s = (np.asarray(currents, dtype=np.float64) / ma_per_unit) ** 2
    return A - B * np.cos(alpha * s + phi0)


def synthetic_sweep(A, B, alpha, phi0, currents, n_outputs=8, port=0,
                    noise=0.0, seed=0, ma_per_unit=1.0) -> CalibrationSweep:
    """Sweep whose ``port`` column follows the heater law; other ports share the rest."""
    x = np.asarray(currents, dtype=np.float64)
    p = heater_response(x, A, B, alpha, phi0, ma_per_unit)
    if noise:
        p = p + np.random.default_rng(seed).normal(0.0, noise, x.size)
    P = np.empty((x.size, n_outputs))
    P[:] = ((1.0 - p) / (n_outputs - 1))[:, None]
    P[:, port] = p
    return CalibrationSweep(x, P)


def _alpha_guess(s: np.ndarray, p: np.ndarray) -> float:
    # dominant oscillation in s = x**2, from a zero-padded spectrum on a uniform grid
    grid = np.linspace(s[0], s[-1], max(64, 4 * s.size))
    y = np.interp(grid, s, p)
    y = y - y.mean()
    nfft = 8 * grid.size
    spec = np.abs(np.fft.rfft(y * np.hanning(grid.size), nfft))
    freqs = np.fft.rfftfreq(nfft, grid[1] - grid[0])
    k = int(np.argmax(spec[1:])) + 1
    return max(TWO_PI * freqs[k], TWO_PI / (4.0 * (s[-1] - s[0])))


def fit_heater_model(sweep: CalibrationSweep, output_port: int,
                     ma_per_unit: float = 1.0, noise_floor: float = 1e-3) -> HeaterFit:
    """Least-squares fit of ``P = A - B cos(alpha * (x/ma_per_unit)**2 + phi0)``.

    Starts from each phi0 quadrant combined with spectral estimates of alpha
    and keeps the lowest residual. Returned ``B`` is non-negative and
    ``phi0`` lies in ``[0, 2pi)``.
    """
    if sweep.currents.size < 4:
        raise ContractError("at least 4 sweep points are required")
    if not 0 <= output_port < sweep.powers.shape[1]:
        raise DomainError(f"output port {output_port} out of range")
    p = sweep.powers[:, output_port]
    s = (sweep.currents / ma_per_unit) ** 2
    if np.ptp(p) <= noise_floor:
        raise UnidentifiableError(
            "power is flat over the sweep: alpha and phi0 are unidentifiable")

    # scale s to O(1) so the solver sees comparable parameter magnitudes
    s_scale = s[-1]
    u = s / s_scale

    def resid(q):
        A, B, a, ph = q
        return A - B * np.cos(a * u + ph) - p

    a0 = _alpha_guess(s, p) * s_scale
    A0, B0 = p.mean(), 0.5 * np.ptp(p)
    best = None
    for scale in (0.5, 1.0, 2.0):
        for ph0 in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
            start = np.array([A0, B0, a0 * scale, ph0])
            r = least_squares(resid, start, method="lm", xtol=1e-15, ftol=1e-15,
                              gtol=1e-15, max_nfev=5000)
            if best is None or r.cost < best.cost:
                best = r
    A, B, a, ph = best.x
    if B < 0:
        B, ph = -B, ph + math.pi
    if a < 0:
        a, ph = -a, -ph
    if B <= noise_floor / 2:
        raise UnidentifiableError("fitted amplitude vanishes: alpha and phi0 are unidentifiable")
    rms = float(np.sqrt(np.mean(resid(best.x) ** 2)))
    return HeaterFit(float(A), float(B), float(a / s_scale), float(ph % TWO_PI), rms)


def read_sweep_csv(path) -> dict[int, CalibrationSweep]:
    """Parse ``[heater,] current_mA, p_out_0 .. p_out_{N-1}`` rows, grouped by heater."""
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SweepFormatError("empty sweep file") from None
    if "current_mA" not in header:
        raise SweepFormatError("missing current_mA column", row=1)
    ports = [h for h in header if h.startswith("p_out_")]
    if not ports:
        raise SweepFormatError("no p_out_* columns", row=1)
    ci = header.index("current_mA")
    hi = header.index("heater") if "heater" in header else None
    pi = [header.index(f"p_out_{j}") for j in range(len(ports))]
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(header):
            raise SweepFormatError(f"expected {len(header)} fields, got {len(rec)}", lineno)
        try:
            h = int(rec[hi]) if hi is not None else 0
            x = float(rec[ci])
            ps = [float(rec[j]) for j in pi]
        except ValueError as exc:
            raise SweepFormatError(str(exc), lineno) from None
        rows.setdefault(h, []).append((x, ps))
    out = {}
    for h, recs in sorted(rows.items()):
        recs.sort(key=lambda r: r[0])
        out[h] = CalibrationSweep(np.array([r[0] for r in recs]),
                                  np.array([r[1] for r in recs]))
    return out


def write_sweep_csv(path, sweeps: dict[int, CalibrationSweep]) -> None:
    n_out = next(iter(sweeps.values())).powers.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["heater", "current_mA"] + [f"p_out_{j}" for j in range(n_out)])
        for h, sw in sorted(sweeps.items()):
            for x, row in zip(sw.currents, sw.powers):
                w.writerow([h, f"{x:.9g}"] + [f"{v:.9g}" for v in row])


# -- telemetry ---------------------------------------------------------------

@dataclass(frozen=True)
class SwitchTelemetry:
    per_heater_switches: np.ndarray
    total_switches: int = 0

    @classmethod
    def empty(cls, n_heaters: int) -> "SwitchTelemetry":
        return cls(np.zeros(n_heaters, dtype=np.int64), 0)

    def __post_init__(self):
        counts = np.array(self.per_heater_switches, dtype=np.int64)
        if np.any(counts < 0):
            raise DomainError("switch counts must be non-negative")
        if int(counts.sum()) != self.total_switches:
            raise ContractError("total_switches must equal the per-heater sum")
        counts.setflags(write=False)
        object.__setattr__(self, "per_heater_switches", counts)

    def merge(self, other: "SwitchTelemetry") -> "SwitchTelemetry":
        counts = self.per_heater_switches + other.per_heater_switches
        return SwitchTelemetry(counts, self.total_switches + other.total_switches)


def record_switch(telemetry: SwitchTelemetry, changed_heaters,
                  times: int = 1) -> SwitchTelemetry:
    """Count one reconfiguration (``times`` identical ones) of ``changed_heaters``."""
    idx = np.unique(np.asarray(list(changed_heaters), dtype=np.int64))
    if idx.size == 0 or times == 0:
        return telemetry
    H = telemetry.per_heater_switches.size
    if idx.min() < 0 or idx.max() >= H:
        raise DomainError("heater index out of range")
    counts = telemetry.per_heater_switches.copy()
    counts[idx] += times
    return SwitchTelemetry(counts, telemetry.total_switches + times * idx.size)
