"""Chip-length estimates for 8-mode meshes built from circular s-bends.

Every connection is an s-bend of two arcs with radius ``R``; a bend that
shifts a waveguide laterally by ``h`` spans ``2 * sqrt(h*R - h**2/4)``
horizontally. Couplers bring two waveguides from the port pitch ``p`` down
to the gap ``g``, so entering or leaving a coupler shifts each arm by
``(p - g) / 2``. Diagonal connections run from the bottom arm of one
coupler straight into the top arm of the next column's coupler, a single
bend of offset ``p - g``. Heaters sit on bend sections; a section hosting a
heater is at least ``heater_length`` long.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .mesh import Architecture, DomainError, build_mesh


class ConnectionStyle(str, enum.Enum):
    STRAIGHT = "Straight"
    DIAGONAL = "Diagonal"


@dataclass(frozen=True)
class GeometrySpec:
    bend_radius: float = 60.0  # mm
    port_pitch: float = 127.0  # um
    heater_length: float = 2.7  # mm
    coupler_gap: float = 7.8  # um
    interaction_length: float = 0.0  # mm

    def __post_init__(self):
        for name in ("bend_radius", "port_pitch", "heater_length", "coupler_gap"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be > 0, got {v}")
        if not self.interaction_length >= 0:
            raise DomainError("interaction_length must be >= 0")
        if self.port_pitch <= self.coupler_gap:
            raise DomainError("port pitch must exceed the coupler gap")


def sbend_length(offset: float, radius: float) -> float:
    """Horizontal length (same units as inputs) of an s-bend with lateral ``offset``."""
    if offset < 0 or radius <= 0:
        raise DomainError("offset must be >= 0 and radius > 0")
    if offset > 2 * radius:
        raise DomainError(f"offset {offset} exceeds twice the bend radius {radius}")
    return 2.0 * math.sqrt(offset * radius - offset * offset / 4.0)


def estimate_length(architecture, geometry: GeometrySpec = GeometrySpec(),
                    connection_style=ConnectionStyle.DIAGONAL,
                    n_modes: int = 8) -> float:
    """Total chip length in mm: fan-in + coupler columns + fan-out."""
    arch = Architecture.parse(architecture)
    style = ConnectionStyle(connection_style)
    R = geometry.bend_radius
    shift = (geometry.port_pitch - geometry.coupler_gap) * 1e-3  # mm
    half = sbend_length(shift / 2.0, R)
    full = sbend_length(shift, R)
    hosted_half = max(half, geometry.heater_length)
    hosted_full = max(full, geometry.heater_length)
    Li = geometry.interaction_length
    n_dc_columns = build_mesh(arch, n_modes, 0.5).n_columns

    if style is ConnectionStyle.STRAIGHT:
        # every coupler converges from and returns to the port grid
        return n_dc_columns * (half + Li + hosted_half)

    if arch is Architecture.ERROR_TOLERANT:
        return (half + (n_dc_columns - 1) * hosted_full + hosted_half
                + n_dc_columns * Li)
    n_layers = n_dc_columns // 2
    # input-phase heater rides the bend into each MZI; theta heater sits
    # between its two couplers, whose arms open to the pitch and close again
    return (hosted_half + n_layers * (half + hosted_half)
            + (n_layers - 1) * hosted_full + half + n_dc_columns * Li)


def length_table(geometry: GeometrySpec = GeometrySpec(), n_modes: int = 8) -> dict:
    et = estimate_length(Architecture.ERROR_TOLERANT, geometry, ConnectionStyle.DIAGONAL, n_modes)
    cd = estimate_length(Architecture.CLEMENTS, geometry, ConnectionStyle.DIAGONAL, n_modes)
    cs = estimate_length(Architecture.CLEMENTS, geometry, ConnectionStyle.STRAIGHT, n_modes)
    return {
        "ErrorTolerant-Diagonal": et,
        "ClementsMZI-Diagonal": cd,
        "ClementsMZI-Straight": cs,
        "reduction_vs_straight": 1.0 - et / cs,
        "reduction_vs_diagonal": 1.0 - et / cd,
    }
