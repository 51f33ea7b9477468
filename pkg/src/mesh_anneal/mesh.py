"""Interferometer meshes built from 2x2 coupler blocks.

A mesh is an ordered list of :class:`CouplerBlock` objects. Each block is a
directional coupler (DC) acting on modes ``(top_mode, top_mode + 1)`` with a
single phase shifter (PS) on the top arm, placed either after the coupler
(error-tolerant blocks) or before it (the two halves of a Clements MZI).

Transfer matrices and power distributions are plain numpy arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(ValueError):
    """Arguments are individually valid but inconsistent with each other."""


class ConfigurationError(ValueError):
    """Unsupported mesh configuration."""


class Architecture(str, enum.Enum):
    ERROR_TOLERANT = "ErrorTolerant"
    CLEMENTS = "ClementsMZI"

    @classmethod
    def parse(cls, value) -> "Architecture":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "et": cls.ERROR_TOLERANT,
            "errortolerant": cls.ERROR_TOLERANT,
            "error_tolerant": cls.ERROR_TOLERANT,
            "clements": cls.CLEMENTS,
            "clementsmzi": cls.CLEMENTS,
            "mzi": cls.CLEMENTS,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ConfigurationError(f"unknown architecture {value!r}") from None


# phase shifter position relative to the coupler of its block
PHASE_OUT = 0
PHASE_IN = 1


@dataclass(frozen=True)
class CouplerBlock:
    column: int
    top_mode: int
    transmission: float
    phase_index: int | None = None
    phase_side: int = PHASE_OUT


@dataclass(frozen=True)
class MeshLayout:
    architecture: Architecture
    n_modes: int
    blocks: tuple[CouplerBlock, ...]
    n_phases: int

    def __post_init__(self):
        if self.n_modes < 2:
            raise ConfigurationError("n_modes must be >= 2")
        seen = set()
        used = {}
        for b in self.blocks:
            if not 0 <= b.top_mode <= self.n_modes - 2:
                raise ConfigurationError(f"block top_mode {b.top_mode} out of range")
            if not 0.0 <= b.transmission <= 1.0:
                raise DomainError(f"transmission {b.transmission} outside [0, 1]")
            for m in (b.top_mode, b.top_mode + 1):
                if (b.column, m) in used:
                    raise ConfigurationError(
                        f"column {b.column} uses mode {m} twice")
                used[(b.column, m)] = b
            if b.phase_index is not None:
                if not 0 <= b.phase_index < self.n_phases or b.phase_index in seen:
                    raise ConfigurationError(f"bad phase index {b.phase_index}")
                seen.add(b.phase_index)
        if len(seen) != self.n_phases:
            raise ConfigurationError("every phase index must appear exactly once")
        # packed arrays consumed by the propagation kernels
        packed = _pack(self.blocks)
        object.__setattr__(self, "_packed", packed)
        object.__setattr__(self, "_evaluator", kernels.MeshEvaluator(
            packed.top, packed.c, packed.s, packed.pidx, packed.side,
            self.n_modes))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_columns(self) -> int:
        return 1 + max(b.column for b in self.blocks) if self.blocks else 0

    @property
    def packed(self):
        return self._packed

    @property
    def evaluator(self):
        """Compiled (or fallback) single-port evaluator for this layout."""
        return self._evaluator

    def columns(self) -> list[list[CouplerBlock]]:
        cols = [[] for _ in range(self.n_columns)]
        for b in self.blocks:
            cols[b.column].append(b)
        return [sorted(c, key=lambda b: b.top_mode) for c in cols]

    def with_transmissions(self, transmissions) -> "MeshLayout":
        ts = _expand_transmissions(transmissions, self.n_blocks)
        blocks = tuple(
            CouplerBlock(b.column, b.top_mode, t, b.phase_index, b.phase_side)
            for b, t in zip(self.blocks, ts)
        )
        return MeshLayout(self.architecture, self.n_modes, blocks, self.n_phases)


@dataclass(frozen=True)
class PackedBlocks:
    top: np.ndarray
    c: np.ndarray
    s: np.ndarray
    pidx: np.ndarray
    side: np.ndarray


def _pack(blocks: Sequence[CouplerBlock]) -> PackedBlocks:
    ordered = sorted(blocks, key=lambda b: (b.column, b.top_mode))
    ts = np.array([b.transmission for b in ordered], dtype=np.float64)
    return PackedBlocks(
        top=np.array([b.top_mode for b in ordered], dtype=np.intc),
        c=np.sqrt(1.0 - ts),
        s=np.sqrt(ts),
        pidx=np.array([-1 if b.phase_index is None else b.phase_index
                       for b in ordered], dtype=np.intc),
        side=np.array([b.phase_side for b in ordered], dtype=np.intc),
    )


def _check_transmission(T):
    if not (math.isfinite(T) and 0.0 <= T <= 1.0):
        raise DomainError(f"transmission must lie in [0, 1], got {T}")


def dc_unitary(T: float) -> np.ndarray:
    """2x2 directional coupler with cross-port power transmission ``T``."""
    _check_transmission(T)
    c, s = math.sqrt(1.0 - T), math.sqrt(T)
    return np.array([[c, 1j * s], [1j * s, c]], dtype=complex)


def ps_unitary(phi: float) -> np.ndarray:
    """Phase shifter on the top arm: ``diag(exp(i phi), 1)``."""
    if not math.isfinite(phi):
        raise DomainError(f"phase must be finite, got {phi}")
    return np.array([[np.exp(1j * phi), 0], [0, 1]], dtype=complex)


def mzi_unitary(T: float, theta: float, phi: float) -> np.ndarray:
    return dc_unitary(T) @ ps_unitary(theta) @ dc_unitary(T) @ ps_unitary(phi)


def _expand_transmissions(transmissions, n_blocks: int) -> list[float]:
    if np.ndim(transmissions) == 0:
        ts = [float(transmissions)] * n_blocks
    else:
        ts = [float(t) for t in transmissions]
        if len(ts) != n_blocks:
            raise ContractError(
                f"got {len(ts)} transmissions for {n_blocks} blocks")
    for t in ts:
        _check_transmission(t)
    return ts


def _brickwork_pairs(n_modes: int, layer: int) -> list[int]:
    # layer 0 couples (0,1),(2,3),...; layer 1 couples (1,2),(3,4),...
    return list(range(layer % 2, n_modes - 1, 2))


def build_mesh(architecture, n_modes: int, transmissions=0.5) -> MeshLayout:
    """Build an error-tolerant or Clements mesh on ``n_modes`` modes.

    ``transmissions`` is a scalar or one value per coupler block, in layout
    order (column-major, top to bottom).

    The error-tolerant mesh has ``2 * n_modes`` brickwork layers of DC+PS
    blocks (empty layers dropped), i.e. ``n_modes * (n_modes - 1)`` blocks.
    The Clements mesh has ``n_modes`` brickwork layers of MZIs; each MZI
    spans two DC columns.
    """
    arch = Architecture.parse(architecture)
    if not isinstance(n_modes, (int, np.integer)) or n_modes < 2:
        raise ConfigurationError(f"n_modes must be an integer >= 2, got {n_modes!r}")
    n_modes = int(n_modes)

    slots = []  # (column, top_mode, phase_side)
    if arch is Architecture.ERROR_TOLERANT:
        column = 0
        for layer in range(2 * n_modes):
            pairs = _brickwork_pairs(n_modes, layer)
            if not pairs:
                continue
            slots.extend((column, m, PHASE_OUT) for m in pairs)
            column += 1
    else:
        column = 0
        for layer in range(n_modes):
            pairs = _brickwork_pairs(n_modes, layer)
            if not pairs:
                continue
            for half in range(2):
                slots.extend((column + half, m, PHASE_IN) for m in pairs)
            column += 2

    ts = _expand_transmissions(transmissions, len(slots))
    blocks = tuple(
        CouplerBlock(col, m, t, i, side)
        for i, ((col, m, side), t) in enumerate(zip(slots, ts))
    )
    return MeshLayout(arch, n_modes, blocks, len(blocks))


def sample_transmissions(mean: float, half_width: float, n_blocks: int,
                         seed: int) -> np.ndarray:
    """Uniform per-coupler transmissions in ``[mean - hw, mean + hw]``."""
    lo, hi = mean - half_width, mean + half_width
    if half_width < 0 or lo < 0.0 or hi > 1.0:
        raise DomainError(f"interval [{lo}, {hi}] escapes [0, 1]")
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=n_blocks)


def _check_phases(mesh: MeshLayout, phases) -> np.ndarray:
    phases = np.ascontiguousarray(phases, dtype=np.float64)
    if phases.shape != (mesh.n_phases,):
        raise ContractError(
            f"expected {mesh.n_phases} phases, got shape {phases.shape}")
    return phases


def compose_unitary(mesh: MeshLayout, phases) -> np.ndarray:
    """N x N transfer matrix of the mesh for the given phases."""
    phases = _check_phases(mesh, phases)
    U = np.eye(mesh.n_modes, dtype=complex)
    p = mesh.packed
    for m, c, s, k, side in zip(p.top, p.c, p.s, p.pidx, p.side):
        rows = U[m:m + 2]
        if k >= 0 and side == PHASE_IN:
            rows[0] *= np.exp(1j * phases[k])
        a, b = rows[0].copy(), rows[1].copy()
        rows[0] = c * a + 1j * s * b
        rows[1] = 1j * s * a + c * b
        if k >= 0 and side == PHASE_OUT:
            rows[0] *= np.exp(1j * phases[k])
    return U


def propagate(mesh: MeshLayout, phases, input_port: int) -> np.ndarray:
    """Normalized output power distribution for light entering ``input_port``."""
    if not 0 <= input_port < mesh.n_modes:
        raise DomainError(f"input port {input_port} out of range")
    phases = _check_phases(mesh, phases)
    return mesh.evaluator.powers(phases, int(input_port))


def unitarity_error(U: np.ndarray) -> float:
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def layout_to_dict(mesh: MeshLayout) -> dict:
    cols = []
    for col in mesh.columns():
        cols.append({
            "top_modes": [b.top_mode for b in col],
            "transmissions": [b.transmission for b in col],
            "phase_indices": [b.phase_index for b in col],
            "phase_sides": ["in" if b.phase_side == PHASE_IN else "out" for b in col],
        })
    return {"architecture": mesh.architecture.value, "n_modes": mesh.n_modes,
            "columns": cols}


def layout_from_dict(doc: dict) -> MeshLayout:
    arch = Architecture.parse(doc["architecture"])
    default_side = PHASE_IN if arch is Architecture.CLEMENTS else PHASE_OUT
    blocks = []
    for ci, col in enumerate(doc["columns"]):
        n = len(col["top_modes"])
        sides = col.get("phase_sides")
        for j in range(n):
            side = default_side if sides is None else (
                PHASE_IN if sides[j] == "in" else PHASE_OUT)
            blocks.append(CouplerBlock(ci, int(col["top_modes"][j]),
                                       float(col["transmissions"][j]),
                                       col["phase_indices"][j], side))
    n_phases = sum(b.phase_index is not None for b in blocks)
    return MeshLayout(arch, int(doc["n_modes"]), tuple(blocks), n_phases)


def matrix_to_pairs(U: np.ndarray) -> list:
    """Row-major ``[[re, im], ...]`` export of a transfer matrix."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in U]


def matrix_from_pairs(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])
