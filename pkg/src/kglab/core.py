"""Grids, field states, damping profiles and run configuration.

Radial fields are stored in the ``v = r * u`` representation, which turns the
3-D radial Laplacian into a plain second difference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

MIN_NODES = 16
BOUND_TOL = 1e-12

DAMPING_SHAPES = ("constant", "exterior-plateau", "exterior-band")


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericError(ArithmeticError):
    """Raised when a field contains NaN/Inf values."""

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


class DegenerateInputError(ValueError):
    """Raised when a ratio is requested of an identically-zero field."""


def smoothstep(x):
    """Quintic smoothstep 6x^5 - 15x^4 + 10x^3 clipped to [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def smoothstep_d1(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 30.0 * x * x * (x - 1.0) ** 2, 0.0)


def smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 60.0 * x * (x - 1.0) * (2.0 * x - 1.0), 0.0)


@dataclass(frozen=True)
class RadialGrid:
    """Uniform mesh on [0, r_max]; node i sits at r = i * dr."""

    r_max: float
    n: int

    def __post_init__(self):
        if self.n < MIN_NODES:
            raise ValidationError(f"grid needs at least {MIN_NODES} nodes, got {self.n}")
        if not self.r_max > 0:
            raise ValidationError(f"r_max must be positive, got {self.r_max}")

    @property
    def dr(self) -> float:
        return self.r_max / (self.n - 1)

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.n) * self.dr

    def node_of(self, radius: float) -> int:
        return int(round(radius / self.dr))


def make_grid(r_max: float, n: int) -> RadialGrid:
    return RadialGrid(float(r_max), int(n))


@dataclass(frozen=True)
class FieldState:
    """(u, u_t) at time ``t`` stored as v = r u and w = r u_t at the grid nodes."""

    t: float
    v: np.ndarray
    w: np.ndarray
    blown_up: bool = False

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        w = np.array(self.w, dtype=float)
        if v.shape != w.shape or v.ndim != 1:
            raise ValidationError("v and w must be 1-D arrays of equal length")
        v[0] = v[-1] = 0.0
        w[0] = w[-1] = 0.0
        v.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        if not self.blown_up:
            check_finite(v, "v")
            check_finite(w, "w")

    @classmethod
    def from_u(cls, grid: RadialGrid, u0, u1=None, t: float = 0.0) -> "FieldState":
        r = grid.r
        u0 = np.broadcast_to(np.asarray(u0, dtype=float), r.shape)
        u1 = np.zeros_like(r) if u1 is None else np.broadcast_to(np.asarray(u1, dtype=float), r.shape)
        return cls(t, r * u0, r * u1)

    @classmethod
    def zeros(cls, grid: RadialGrid, t: float = 0.0) -> "FieldState":
        return cls(t, np.zeros(grid.n), np.zeros(grid.n))

    def u(self, grid: RadialGrid) -> np.ndarray:
        return recover_u(self.v, grid)

    def ut(self, grid: RadialGrid) -> np.ndarray:
        return recover_u(self.w, grid)


def recover_u(v: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """u = v / r with the origin value from an even quadratic fit through nodes 1, 2."""
    u = np.empty_like(v, dtype=float)
    u[1:] = v[1:] / grid.r[1:]
    u[0] = (4.0 * u[1] - u[2]) / 3.0
    return u


def check_finite(a: np.ndarray, name: str = "field") -> None:
    bad = np.flatnonzero(~np.isfinite(a))
    if bad.size:
        raise NumericError(f"non-finite value in {name} at node {bad[0]}", node=int(bad[0]))


@dataclass(frozen=True)
class DampingProfile:
    """Radial damping coefficient obeying Lambda0 <= alpha <= Lambda1 for r >= R."""

    shape: str
    lambda0: float
    lambda1: float
    R: float
    width: float
    alpha: np.ndarray = field(repr=False)

    def validate(self, grid: RadialGrid) -> None:
        a = self.alpha
        if a.shape != (grid.n,):
            raise ValidationError("damping samples do not match the grid")
        check_finite(a, "alpha")
        if a.min() < -BOUND_TOL or a.max() > self.lambda1 + BOUND_TOL:
            raise ValidationError("damping leaves [0, Lambda1]")
        ext = grid.r >= self.R - BOUND_TOL * grid.r_max
        if np.any(a[ext] < self.lambda0 - BOUND_TOL):
            raise ValidationError("damping drops below Lambda0 outside B_R")

    @property
    def is_zero(self) -> bool:
        return not np.any(self.alpha)


def _damping_samples(shape: str, lambda0: float, lambda1: float, R: float, width: float, r):
    if shape == "constant":
        return np.full_like(r, lambda1)
    # alpha vanishes on [0, R - width] and reaches lambda0 exactly at r = R
    rise = smoothstep((r - (R - width)) / width)
    upper = smoothstep((r - R) / width)
    if shape == "exterior-plateau":
        return lambda0 * rise + (lambda1 - lambda0) * upper
    if shape == "exterior-band":
        # lambda1 on the band [R + width, 2R], relaxing to the floor lambda0 beyond 2R + width
        fall = smoothstep((r - 2.0 * R) / width)
        return lambda0 * rise + (lambda1 - lambda0) * upper * (1.0 - fall)
    raise ValidationError(f"unknown damping shape {shape!r}; expected one of {DAMPING_SHAPES}")


def make_damping(
    shape: str,
    lambda0: float,
    lambda1: float,
    R: float,
    grid: RadialGrid,
    width: float | None = None,
) -> DampingProfile:
    """Sample an admissible damping profile on ``grid``.

    ``width`` is the length of each smoothstep transition (default ``R / 4``).
    Shapes: ``constant`` (alpha = Lambda1 everywhere), ``exterior-plateau``
    (zero inside B_{R-width}, Lambda0 at R, Lambda1 from R+width on) and
    ``exterior-band`` (same rise, Lambda1 on [R+width, 2R], floor Lambda0 past 2R+width).
    """
    if not lambda0 > 0:
        raise ValidationError(f"Lambda0 must be positive, got {lambda0}")
    if lambda0 > lambda1:
        raise ValidationError(f"Lambda0 = {lambda0} exceeds Lambda1 = {lambda1}")
    if not R > 0:
        raise ValidationError(f"R must be positive, got {R}")
    width = R / 4.0 if width is None else float(width)
    if not 0 < width <= R:
        raise ValidationError(f"transition width must lie in (0, R], got {width}")
    alpha = _damping_samples(shape, float(lambda0), float(lambda1), float(R), width, grid.r)
    alpha.flags.writeable = False
    prof = DampingProfile(shape, float(lambda0), float(lambda1), float(R), width, alpha)
    prof.validate(grid)
    return prof


def zero_damping(grid: RadialGrid) -> DampingProfile:
    """alpha == 0; a control case that violates the lower bound Lambda0 > 0 outside B_R."""
    alpha = np.zeros(grid.n)
    alpha.flags.writeable = False
    return DampingProfile("none", 0.0, 0.0, 0.0, 0.0, alpha)


@dataclass(frozen=True)
class Radii:
    """Cutoff radii for the audits; r1 = 3R/2 and r2 = 5R/2 unless overridden."""

    R: float
    r1: float | None = None
    r2: float | None = None

    def __post_init__(self):
        if not self.R > 0:
            raise ValidationError(f"R must be positive, got {self.R}")
        if self.r1 is None:
            object.__setattr__(self, "r1", 1.5 * self.R)
        if self.r2 is None:
            object.__setattr__(self, "r2", 2.5 * self.R)
        if not 0 < self.r1 < self.r2:
            raise ValidationError(f"need 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")

    def labelled(self) -> dict[str, float]:
        return {"R": self.R, "2R": 2 * self.R, "4R": 4 * self.R, "r1": self.r1, "r2": self.r2}


@dataclass(frozen=True)
class DataSpec:
    family: str
    amplitude: float = 0.0
    sigma: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    grid: RadialGrid
    damping: DampingProfile
    data: DataSpec
    dt: float
    T: float
    m_blow: float = 1e3
    cadence: int = 10
    radii: Radii | None = None
    linear: bool = False
    support: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.dt > self.grid.dr * (1 + 1e-12):
            raise ValidationError(f"CFL violated: dt = {self.dt} exceeds dr = {self.grid.dr}")
        if not self.T >= 0:
            raise ValidationError(f"T must be nonnegative, got {self.T}")
        if self.m_blow < 10:
            raise ValidationError(f"m_blow must be at least 10, got {self.m_blow}")
        if self.cadence < 1:
            raise ValidationError("cadence must be a positive step count")
        if self.T > self.grid.r_max - self.support + 1e-12:
            raise ValidationError(
                f"domain too small: T = {self.T} exceeds r_max - support = "
                f"{self.grid.r_max - self.support}"
            )
        if self.radii is None:
            object.__setattr__(self, "radii", Radii(self.damping.R if self.damping.R > 0 else 1.0))
        self.damping.validate(self.grid)
        if 4 * self.radii.R > self.grid.r_max:
            raise ValidationError("audit radius 4R exceeds r_max")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class RunSeries:
    """Sampled functionals along one run."""

    times: np.ndarray
    records: tuple
    A: np.ndarray
    outcome: str
    t_star: float | None = None
    final_state: FieldState | None = field(default=None, repr=False)
    epsilon: float = 0.0
    E_scheme: np.ndarray | None = field(default=None, repr=False)
    meta: dict[str, Any] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        if name == "E_scheme":
            return np.asarray(self.E_scheme)
        if hasattr(self.records[0], name):
            return np.array([getattr(rec, name) for rec in self.records])
        return np.array([rec.restricted[name] for rec in self.records])

    @property
    def blew_up(self) -> bool:
        return self.outcome == "blowup"
