"""Ground state of -Delta Q + Q = Q^3 on R^3 by shooting.

The radial profile solves Q'' + (2/r) Q' - Q + Q^3 = 0 with Q'(0) = 0.  For
Q(0) below the ground-state value the trajectory turns back up before
reaching zero; above it, the trajectory crosses zero.  Bisection between the
two behaviours isolates the decaying solution, whose unreliable far tail is
replaced by the Yukawa form c exp(-r) / r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import FieldState, RadialGrid, ValidationError, make_grid, smoothstep, smoothstep_d1
from .functionals import evaluate_functionals, gn_ratio

MAX_INTERNAL_STEP = 0.0025
SPREAD_LIMIT = 1e-4
BLEND_WIDTH = 1.0
SERIES_RADIUS = 0.15
CACHE_VERSION = 1


class SolverError(RuntimeError):
    """Shooting could not bracket the ground state."""


class AccuracyError(RuntimeError):
    """The computed profile misses the ODE by more than the requested tolerance."""


@dataclass(frozen=True)
class GroundState:
    grid: RadialGrid = field(repr=False)
    Q: np.ndarray = field(repr=False)
    dQ: np.ndarray = field(repr=False)
    a: float
    tol: float
    h0: float
    mass2: float
    grad2: float
    L4: float
    residual_sup: float
    match_radius: float
    tail_coefficient: float

    @property
    def h1(self) -> float:
        return self.grad2 + self.mass2

    def profile(self, r) -> np.ndarray:
        """Q at arbitrary radii: cubic interpolation on the grid, Yukawa tail beyond."""
        from scipy.interpolate import CubicSpline

        r = np.asarray(r, dtype=float)
        spline = CubicSpline(self.grid.r, self.Q, bc_type=((1, 0.0), (1, float(self.dQ[-1]))))
        inside = r <= self.grid.r_max
        out = np.empty_like(r)
        out[inside] = spline(r[inside])
        rr = r[~inside]
        out[~inside] = self.tail_coefficient * np.exp(-rr) / rr
        return out

    def state(self, scale: float = 1.0) -> FieldState:
        return FieldState.from_u(self.grid, scale * self.Q)

    def scaled(self, lam: float) -> "GroundState":
        """The same record with Q replaced by lam * Q (norms and residual recomputed)."""
        Q = lam * self.Q
        dQ = lam * self.dQ
        rec = evaluate_functionals(FieldState.from_u(self.grid, Q), self.grid)
        return replace(
            self, Q=Q, dQ=dQ, a=lam * self.a, h0=rec.J, mass2=rec.mass2, grad2=rec.grad2,
            L4=rec.L4, residual_sup=float(np.max(np.abs(ode_residual(Q, dQ, self.grid)))),
            tail_coefficient=lam * self.tail_coefficient,
        )


def _series(a: float, n_terms: int = 16) -> np.ndarray:
    """Even power-series coefficients of the regular solution with Q(0) = a."""
    c = np.zeros(n_terms)
    c[0] = a
    for k in range(1, n_terms):
        # coefficient of r^(2k-2) in Q - Q^3, using c[0..k-1]
        low = c[:k]
        sq = np.convolve(low, low)[:k]
        cube = np.convolve(sq, low)[:k]
        c[k] = (low[k - 1] - cube[k - 1]) / (2 * k * (2 * k + 1))
    return c


def _series_eval(c: np.ndarray, r):
    r2 = np.asarray(r, dtype=float) ** 2
    q = np.zeros_like(r2)
    p = np.zeros_like(r2)
    for k in range(len(c) - 1, -1, -1):
        q = q * r2 + c[k]
    for k in range(len(c) - 1, 0, -1):
        p = p * r2 + 2 * k * c[k]
    return q, p * np.sqrt(r2)


def _shoot(a: float, h: float, r_end: float, every: int | None = None):
    """Integrate outward with classic RK4 at step h from a power-series start.

    Returns (label, Q_nodes, dQ_nodes) where label is 'high' if Q crosses zero,
    'low' if Q turns upward while positive, None if neither happens before r_end.
    Node samples (every ``every`` internal steps) are only collected when asked.
    """
    coeffs = _series(a)
    step = 1 if every is None else every
    # convergence radius of the series shrinks like 1/a
    r_start = min(SERIES_RADIUS, 0.5 / max(abs(a), 1.0))
    j0 = step * max(1, math.ceil(r_start / (step * h)))
    q, p = (float(x) for x in _series_eval(coeffs, j0 * h))
    n_steps = int(round(r_end / h))
    label = None
    if every is not None:
        n_nodes = n_steps // every + 1
        Qn = np.full(n_nodes, np.nan)
        Pn = np.full(n_nodes, np.nan)
        k0 = j0 // every
        Qn[: k0 + 1], Pn[: k0 + 1] = _series_eval(coeffs, np.arange(k0 + 1) * every * h)
    for j in range(j0, n_steps):
        r = j * h
        # classic RK4 on (q, p) with q' = p, p' = -2p/r + q - q^3
        k1q = p
        k1p = -2.0 * p / r + q - q * q * q
        rm = r + 0.5 * h
        q2 = q + 0.5 * h * k1q
        p2 = p + 0.5 * h * k1p
        k2q = p2
        k2p = -2.0 * p2 / rm + q2 - q2 * q2 * q2
        q3 = q + 0.5 * h * k2q
        p3 = p + 0.5 * h * k2p
        k3q = p3
        k3p = -2.0 * p3 / rm + q3 - q3 * q3 * q3
        q4 = q + h * k3q
        p4 = p + h * k3p
        rn = r + h
        k4q = p4
        k4p = -2.0 * p4 / rn + q4 - q4 * q4 * q4
        q += h * (k1q + 2.0 * k2q + 2.0 * k3q + k4q) / 6.0
        p += h * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0
        if label is None:
            if q < 0.0:
                label = "high"
            elif p > 0.0:
                label = "low"
            if label is not None and every is None:
                return label, None, None
        if every is not None:
            if abs(q) > 10.0:
                break
            if (j + 1) % every == 0:
                Qn[(j + 1) // every] = q
                Pn[(j + 1) // every] = p
    if every is None:
        return label, None, None
    return label, Qn, Pn


def _substeps(dr: float) -> int:
    return max(1, math.ceil(dr / MAX_INTERNAL_STEP - 1e-9))


def bisect_shooting(lo: float, hi: float, tol: float, h: float, r_end: float) -> tuple[float, float]:
    """Shrink [lo, hi] around the ground-state value of Q(0) to width tol."""
    if _shoot(lo, h, r_end)[0] != "low" or _shoot(hi, h, r_end)[0] != "high":
        raise SolverError(f"bracket [{lo}, {hi}] does not contain the ground-state value")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        label = _shoot(mid, h, r_end)[0]
        if label == "high":
            hi = mid
        elif label == "low":
            lo = mid
        else:
            lo = hi = mid
    return lo, hi


def shoot_ground_state(
    grid: RadialGrid,
    tol: float = 1e-8,
    bracket: tuple[float, float] = (0.1, 20.0),
) -> GroundState:
    if not 1e-14 < tol < 1e-3:
        raise ValidationError(f"tol must lie in (1e-14, 1e-3), got {tol}")
    if grid.r_max < 15:
        raise ValidationError(f"ground-state grid needs r_max >= 15, got {grid.r_max}")
    lo, hi = bracket
    if not 0.1 <= lo < hi <= 20.0:
        raise ValidationError(f"bracket must lie inside [0.1, 20], got {bracket}")
    m = _substeps(grid.dr)
    h = grid.dr / m
    lo, hi = bisect_shooting(lo, hi, tol, h, grid.r_max)
    a = 0.5 * (lo + hi)

    _, Q_mid, P_mid = _shoot(a, h, grid.r_max, every=m)
    _, Q_lo, _ = _shoot(lo, h, grid.r_max, every=m)
    _, Q_hi, _ = _shoot(hi, h, grid.r_max, every=m)
    r = grid.r
    with np.errstate(invalid="ignore"):
        ok = (
            np.isfinite(Q_lo) & np.isfinite(Q_hi) & np.isfinite(Q_mid)
            & (Q_mid > 0) & (np.abs(Q_hi - Q_lo) <= SPREAD_LIMIT * np.abs(Q_mid))
        )
        ok[1:] &= P_mid[1:] < 0
    bad = np.flatnonzero(~ok)
    k_match = grid.n - 1 if bad.size == 0 else int(bad[0]) - 1
    r_m = r[k_match]
    if r_m < 2.0:
        raise AccuracyError(f"reliable part of the trajectory ends at r = {r_m}; loosen tol")
    coef = float(Q_mid[k_match] * r_m * math.exp(r_m))
    Q, dQ = _graft_tail(r, Q_mid, P_mid, r_m, coef)
    residual = float(np.max(np.abs(ode_residual(Q, dQ, grid))))
    if residual > 1e3 * tol:
        raise AccuracyError(f"ODE residual {residual:.3e} exceeds 1e3 * tol = {1e3 * tol:.3e}")
    rec = evaluate_functionals(FieldState.from_u(grid, Q), grid)
    Q.flags.writeable = False
    dQ.flags.writeable = False
    return GroundState(grid, Q, dQ, a, tol, rec.J, rec.mass2, rec.grad2, rec.L4, residual, float(r_m), coef)


def _graft_tail(r, Q_num, P_num, r_m, coef):
    safe_r = np.where(r > 0, r, 1.0)
    tail = coef * np.exp(-safe_r) / safe_r
    dtail = -tail * (1.0 + 1.0 / safe_r)
    width = min(BLEND_WIDTH, 0.5 * r_m)
    x = (r - (r_m - width)) / width
    s = smoothstep(x)
    ds = smoothstep_d1(x) / width
    Qn = np.where(np.isfinite(Q_num), Q_num, 0.0)
    Pn = np.where(np.isfinite(P_num), P_num, 0.0)
    Q = (1.0 - s) * Qn + s * tail
    dQ = (1.0 - s) * Pn + s * dtail + ds * (tail - Qn)
    return Q, dQ


def _d1_sixth(f: np.ndarray, dr: float, parity: int) -> np.ndarray:
    """Sixth-order centred derivative; parity ghosts at the origin, lower order at the far end."""
    ext = np.concatenate([parity * f[3:0:-1], f])
    d = np.empty_like(f)
    d[:-3] = (
        -ext[0:-6] + 9.0 * ext[1:-5] - 45.0 * ext[2:-4] + 45.0 * ext[4:-2] - 9.0 * ext[5:-1] + ext[6:]
    ) / (60.0 * dr)
    d[-3:] = np.gradient(f, dr, edge_order=2)[-3:]
    return d


def ode_residual(Q: np.ndarray, dQ: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Node-wise Q'' + (2/r) Q' - Q + Q^3, with Q'' differentiated from the sampled Q'."""
    d2 = _d1_sixth(dQ, grid.dr, parity=-1)
    r = grid.r
    res = np.empty_like(Q)
    res[1:] = d2[1:] + 2.0 * dQ[1:] / r[1:] - Q[1:] + Q[1:] ** 3
    res[0] = 3.0 * d2[0] - Q[0] + Q[0] ** 3
    return res


def verify_ground_state(gs: GroundState) -> dict:
    """Stationarity report for a (possibly perturbed) ground-state record."""
    rec = evaluate_functionals(gs.state(), gs.grid)
    h1 = rec.h1
    k_rel = abs(rec.K) / h1
    return {
        "Q0": gs.a,
        "residual_sup": gs.residual_sup,
        "K": rec.K,
        "K_rel": k_rel,
        "h0": gs.h0,
        "h0_gap": abs(gs.h0 - 0.25 * h1),
        "h0_gap_rel": abs(gs.h0 - 0.25 * h1) / gs.h0,
        "two_F": h1,
        "four_h0": 4.0 * gs.h0,
        "gn_ratio": gn_ratio(gs.state(), gs.grid),
        "stationary": bool(k_rel <= 1e-3 and gs.residual_sup <= 1e3 * gs.tol),
    }


def save_ground_state(gs: GroundState, path) -> None:
    """Write the text cache: '#'-prefixed key = value header, then r Q dQ columns."""
    lines = [
        f"# kglab-ground-state v{CACHE_VERSION}",
        f"# r_max = {gs.grid.r_max!r}",
        f"# n = {gs.grid.n}",
    ]
    for key in ("a", "tol", "h0", "mass2", "grad2", "L4", "residual_sup", "match_radius", "tail_coefficient"):
        lines.append(f"# {key} = {getattr(gs, key)!r}")
    body = "\n".join(f"{r!r} {q!r} {p!r}" for r, q, p in zip(gs.grid.r.tolist(), gs.Q.tolist(), gs.dQ.tolist()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n" + body + "\n")


def load_ground_state(path) -> GroundState:
    meta = {}
    rows = []
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# kglab-ground-state v{CACHE_VERSION}":
            raise ValidationError(f"{path}: not a version-{CACHE_VERSION} ground-state cache")
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
            elif line.strip():
                rows.append([float(x) for x in line.split()])
    data = np.array(rows)
    grid = make_grid(float(meta["r_max"]), int(meta["n"]))
    Q = data[:, 1].copy()
    dQ = data[:, 2].copy()
    Q.flags.writeable = False
    dQ.flags.writeable = False
    fields = {k: float(meta[k]) for k in ("a", "tol", "h0", "mass2", "grad2", "L4", "residual_sup", "match_radius", "tail_coefficient")}
    return GroundState(grid, Q, dQ, **fields)
