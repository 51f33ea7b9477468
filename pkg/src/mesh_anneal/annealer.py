"""Fidelity objective and Very Fast Simulated Annealing over phase vectors."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .mesh import ContractError, DomainError

TWO_PI = 2.0 * math.pi
# schedules underflow quickly for small dims; floor keeps them usable
_TEMP_FLOOR = 1e-300


class AnnealAborted(RuntimeError):
    """The objective returned a non-finite value."""


def _as_distribution(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 1 or X.size == 0:
        raise DomainError(f"{name} must be a non-empty 1-D vector")
    if np.any(X < 0) or not np.all(np.isfinite(X)):
        raise DomainError(f"{name} has negative or non-finite entries")
    if abs(X.sum() - 1.0) > 1e-9:
        raise DomainError(f"{name} is not normalized (sum={X.sum()!r})")
    return X


def fidelity(X, Y) -> float:
    """Overlap ``(sum_j sqrt(X_j Y_j))**2`` of two normalized power vectors."""
    X = _as_distribution(X, "X")
    Y = _as_distribution(Y, "Y")
    if X.shape != Y.shape:
        raise DomainError(f"length mismatch: {X.size} vs {Y.size}")
    F = float(np.sum(np.sqrt(X * Y)) ** 2)
    return min(max(F, 0.0), 1.0)


def infidelity(X, Y) -> float:
    return 1.0 - fidelity(X, Y)


def vfsa_temperature(k, t0: float, c: float, dims: int) -> float:
    """Cooling schedule ``t0 * exp(-c * k**(1/dims))``."""
    return t0 * math.exp(-c * k ** (1.0 / dims))


def vfsa_step(u, temp: float):
    """Map uniform draws ``u`` to generation steps in ``[-1, 1]``.

    ``y = sgn(u - 1/2) * temp * ((1 + 1/temp)**|2u - 1| - 1)``, evaluated in
    log space so very small temperatures stay finite.
    """
    u = np.asarray(u, dtype=np.float64)
    v = 2.0 * u - 1.0
    return np.sign(v) * temp * np.expm1(np.abs(v) * math.log1p(1.0 / temp))


def vfsa_propose(phases, temp: float, rng: np.random.Generator) -> np.ndarray:
    """Perturb every coordinate by a VFSA step scaled to a full turn."""
    if not temp > 0:
        raise DomainError("generation temperature must be > 0")
    phases = np.asarray(phases, dtype=np.float64)
    y = vfsa_step(rng.random(phases.shape), temp)
    return np.mod(phases + TWO_PI * y, TWO_PI)


def metropolis_accept(delta: float, temp_accept: float,
                      rng: np.random.Generator) -> bool:
    if delta <= 0:
        return True
    return bool(rng.random() < math.exp(-delta / temp_accept))


@dataclass(frozen=True)
class AnnealConfig:
    t0: float = 1.0
    c: float = 200.0
    dims: int = 56
    iterations: int = 20000
    seed: int = 0
    accept_t0: float = 0.1
    accept_c: float = 11.0

    def __post_init__(self):
        for name in ("t0", "c", "accept_t0", "accept_c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be > 0, got {v}")
        if self.dims < 1 or self.iterations < 1:
            raise DomainError("dims and iterations must be >= 1")

    def replace(self, **changes) -> "AnnealConfig":
        return AnnealConfig(**{**asdict(self), **changes})


@dataclass
class AnnealRun:
    trace: list = field(default_factory=list)  # (iteration, best_infidelity)
    best_phases: np.ndarray | None = None
    best_fidelity: float = 0.0
    evaluations: int = 0
    config: AnnealConfig | None = None
    extras: dict = field(default_factory=dict)
    telemetry: object = None

    @property
    def best_infidelity(self) -> float:
        return self.trace[-1][1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "best_infidelity"])
            for k, v in self.trace:
                w.writerow([k, f"{v:.9g}"])

    def sidecar(self) -> dict:
        return {
            "best_phases": [float(p) for p in self.best_phases],
            "best_fidelity": self.best_fidelity,
            "evaluations": self.evaluations,
            "config": asdict(self.config) if self.config else None,
            "seed": self.config.seed if self.config else None,
            **self.extras,
        }

    def save(self, csv_path, json_path) -> None:
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


def optimize(objective: Callable[[np.ndarray], float], config: AnnealConfig,
             initial=None, stop_below: float | None = None) -> AnnealRun:
    """Minimize ``objective`` over ``[0, 2pi)**dims`` with VFSA.

    One iteration is one joint proposal over all coordinates followed by a
    Metropolis decision; the objective is evaluated once per iteration.
    The trace records the best value seen so far. The loop stops early when
    the best value reaches zero or drops below ``stop_below``.

    With ``dims`` near 56 the schedule barely moves after the first step
    (``k**(1/56)`` grows from 1 to about 1.2 over 20000 steps), so ``c``
    effectively sets the generation temperature. A large ``c`` makes the
    step law log-uniform over many decades: each proposal moves a handful of
    coordinates by a visible amount and leaves the rest almost untouched.
    """
    rng = np.random.default_rng(config.seed)
    D = config.dims
    if initial is None:
        x = rng.uniform(0.0, TWO_PI, D)
    else:
        x = np.mod(np.asarray(initial, dtype=np.float64), TWO_PI)
        if x.shape != (D,):
            raise ContractError(f"initial vector has shape {x.shape}, expected ({D},)")

    def evaluate(p):
        v = float(objective(p))
        if not math.isfinite(v):
            raise AnnealAborted(f"objective returned {v} at phases {p.tolist()}")
        return v

    fx = evaluate(x)
    best_x, best_f = x.copy(), fx
    trace = [(0, best_f)]
    evaluations = 1
    for k in range(1, config.iterations):
        if best_f <= 0.0 or (stop_below is not None and best_f < stop_below):
            break
        temp = max(vfsa_temperature(k, config.t0, config.c, D), _TEMP_FLOOR)
        cand = vfsa_propose(x, temp, rng)
        fc = evaluate(cand)
        evaluations += 1
        temp_acc = max(vfsa_temperature(k, config.accept_t0, config.accept_c, D),
                       _TEMP_FLOOR)
        if metropolis_accept(fc - fx, temp_acc, rng):
            x, fx = cand, fc
            if fx < best_f:
                best_x, best_f = x.copy(), fx
        trace.append((k, best_f))
    return AnnealRun(trace=trace, best_phases=best_x, best_fidelity=1.0 - best_f,
                     evaluations=evaluations, config=config)
