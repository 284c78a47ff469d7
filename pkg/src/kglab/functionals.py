"""Radial quadrature, energy-type functionals and smooth cutoffs.

All volume integrals are 4*pi * int g(r) dr where g already carries the r**2
weight.  In the v = r u representation the weighted integrands are

    u**2 r**2        = v**2
    |grad u|**2 r**2 = (v_r - v/r)**2
    u**4 r**2        = v**4 / r**2
    u_t**2 r**2      = w**2

which are all even in r, so the trapezoid rule loses nothing at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DampingProfile,
    DegenerateInputError,
    FieldState,
    Radii,
    RadialGrid,
    ValidationError,
    check_finite,
    smoothstep,
    smoothstep_d1,
    smoothstep_d2,
)

FOUR_PI = 4.0 * np.pi


def radial_derivative(f: np.ndarray, dr: float, parity: int = -1) -> np.ndarray:
    """Fourth-order centred first derivative on the uniform radial mesh.

    Ghost values behind the origin come from the parity of ``f`` about r = 0
    (-1 for odd fields such as v, +1 for even ones); the last two nodes use
    one-sided fourth-order stencils.
    """
    f = np.asarray(f, dtype=float)
    ext = np.concatenate([parity * f[2:0:-1], f])
    d = np.empty_like(f)
    d[:-2] = (ext[0:-4] - 8.0 * ext[1:-3] + 8.0 * ext[3:-1] - ext[4:]) / (12.0 * dr)
    d[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * dr)
    d[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * dr)
    return d


def _cumulative(g: np.ndarray, dr: float) -> np.ndarray:
    c = np.zeros_like(g, dtype=float)
    c[1:] = np.cumsum(0.5 * dr * (g[1:] + g[:-1]))
    return c


def _primitive_at(cum: np.ndarray, g: np.ndarray, grid: RadialGrid, x: float) -> float:
    """Integral of the piecewise-linear interpolant of g over [0, x]."""
    dr = grid.dr
    k = min(int(np.floor(x / dr + 1e-12)), grid.n - 1)
    frac = x - k * dr
    if k == grid.n - 1 or frac <= 1e-12 * dr:
        return float(cum[k])
    gx = g[k] + (g[k + 1] - g[k]) * frac / dr
    return float(cum[k] + 0.5 * frac * (g[k] + gx))


def _region_bounds(grid: RadialGrid, region) -> tuple[float, float]:
    if region is None:
        return 0.0, grid.r_max
    a, b = region
    a = 0.0 if a is None else float(a)
    b = grid.r_max if b is None else float(b)
    if a < 0 or b > grid.r_max * (1 + 1e-12) or a > b:
        raise ValidationError(f"region [{a}, {b}] not inside [0, {grid.r_max}]")
    return a, min(b, grid.r_max)


def integrate_weighted(g: np.ndarray, grid: RadialGrid, region=None) -> float:
    """4*pi * int_region g dr for an integrand that already carries r**2."""
    g = np.asarray(g, dtype=float)
    check_finite(g, "integrand")
    a, b = _region_bounds(grid, region)
    if a == 0.0 and b == grid.r_max:
        return FOUR_PI * float(np.trapezoid(g, dx=grid.dr))
    cum = _cumulative(g, grid.dr)
    return FOUR_PI * (_primitive_at(cum, g, grid, b) - _primitive_at(cum, g, grid, a))


def integrate_radial(f, grid: RadialGrid, region=None) -> float:
    """Trapezoid value of 4*pi * int_region f(r) r**2 dr.

    ``region`` is a pair (a, b) with either end ``None`` for 0 / r_max.
    Endpoints between nodes are handled by linear interpolation of f r**2, so
    integrals over adjacent regions add up exactly.
    """
    f = np.broadcast_to(np.asarray(f, dtype=float), (grid.n,))
    check_finite(f, "f")
    return integrate_weighted(f * grid.r**2, grid, region)


def grad_integrand(v: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """(v_r - v/r)**2 = r**2 |grad u|**2, with its limit 0 at the origin."""
    vr = radial_derivative(v, grid.dr, parity=-1)
    g = np.empty_like(vr)
    g[1:] = vr[1:] - v[1:] / grid.r[1:]
    g[0] = 0.0
    return g * g


def quartic_integrand(v: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """v**4 / r**2 = r**2 u**4."""
    q = np.zeros_like(v, dtype=float)
    q[1:] = v[1:] ** 4 / grid.r[1:] ** 2
    return q


@dataclass(frozen=True)
class FunctionalRecord:
    """Scalar functionals of one state.

    ``restricted`` maps names such as ``u2_in_4R`` (int over |x| <= 4R of u**2),
    ``u4_out_2R``, ``grad2_band_2R_4R`` or ``h1_out_2R`` to their values.
    """

    t: float
    E: float
    E_L: float
    J: float
    K: float
    L4: float
    kinetic: float
    grad2: float
    mass2: float
    damping_density: float
    restricted: dict = field(default_factory=dict)

    @property
    def h1(self) -> float:
        return self.grad2 + self.mass2


BANDS = (("R", "2R"), ("2R", "4R"), ("r1", "r2"))


def evaluate_functionals(
    state: FieldState,
    grid: RadialGrid,
    damping: DampingProfile | None = None,
    radii: Radii | None = None,
) -> FunctionalRecord:
    if state.blown_up:
        raise ValidationError("cannot evaluate functionals of a blown-up state")
    v, w = state.v, state.w
    check_finite(v, "v")
    check_finite(w, "w")
    dr = grid.dr
    g_mass = v * v
    g_grad = grad_integrand(v, grid)
    g_quart = quartic_integrand(v, grid)
    g_kin = w * w

    mass2 = FOUR_PI * float(np.trapezoid(g_mass, dx=dr))
    grad2 = FOUR_PI * float(np.trapezoid(g_grad, dx=dr))
    L4 = FOUR_PI * float(np.trapezoid(g_quart, dx=dr))
    kinetic = FOUR_PI * float(np.trapezoid(g_kin, dx=dr))
    damp = 0.0
    if damping is not None:
        damp = FOUR_PI * float(np.trapezoid(damping.alpha * g_kin, dx=dr))

    E_L = 0.5 * (kinetic + grad2 + mass2)
    E = E_L - 0.25 * L4
    J = 0.5 * (grad2 + mass2) - 0.25 * L4
    K = grad2 + mass2 - L4

    restricted = {}
    if radii is not None:
        restricted = _restricted(grid, radii, g_mass, g_grad, g_quart)
    return FunctionalRecord(state.t, E, E_L, J, K, L4, kinetic, grad2, mass2, damp, restricted)


def _restricted(grid, radii, g_mass, g_grad, g_quart) -> dict:
    labels = radii.labelled()
    out = {}
    for name, g in (("u2", g_mass), ("grad2", g_grad), ("u4", g_quart)):
        cum = _cumulative(g, grid.dr)
        prim = {lab: FOUR_PI * _primitive_at(cum, g, grid, min(rho, grid.r_max)) for lab, rho in labels.items()}
        full = FOUR_PI * float(cum[-1])
        for lab in labels:
            out[f"{name}_in_{lab}"] = prim[lab]
            out[f"{name}_out_{lab}"] = full - prim[lab]
        for lo, hi in BANDS:
            out[f"{name}_band_{lo}_{hi}"] = prim[hi] - prim[lo]
    for lab in labels:
        out[f"h1_out_{lab}"] = out[f"grad2_out_{lab}"] + out[f"u2_out_{lab}"]
    return out


def gn_ratio(state: FieldState, grid: RadialGrid) -> float:
    """int u^4 / (||u||_{H^1}^2 ||u||_{L^2}^2)."""
    rec = evaluate_functionals(state, grid)
    if rec.mass2 == 0.0:
        raise DegenerateInputError("Gagliardo-Nirenberg ratio of the zero field")
    return rec.L4 / (rec.h1 * rec.mass2)


@dataclass(frozen=True)
class Cutoff:
    """Sampled radial cutoff with first derivative and Laplacian.

    ``constants`` holds measured bounds: for ``phi`` the keys ``four_gamma``
    (sup |phi'| / phi^(7/8)), ``gamma_half`` (sup |varphi'| / varphi^(1/2)) and
    ``C1``; for ``psi`` the keys ``beta1``, ``beta2``, ``beta_tilde`` and
    ``lap_psi_sup``.
    """

    kind: str
    radii: tuple
    values: np.ndarray = field(repr=False)
    d1: np.ndarray = field(repr=False)
    lap: np.ndarray = field(repr=False)
    constants: dict = field(default_factory=dict)


def _fourth_power(base, base_d1, base_d2, r):
    val = base**4
    d1 = 4.0 * base**3 * base_d1
    d2 = 12.0 * base**2 * base_d1**2 + 4.0 * base**3 * base_d2
    return val, d1, _laplacian(d1, d2, r)


def _laplacian(d1, d2, r):
    lap = d2.copy()
    lap[1:] += 2.0 * d1[1:] / r[1:]
    lap[0] = 3.0 * d2[0]
    return lap


def build_cutoff(kind: str, radii: Radii, grid: RadialGrid) -> Cutoff:
    r = grid.r
    if kind == "phi":
        r1, r2 = radii.r1, radii.r2
        if not 0 < r1 < r2 <= grid.r_max:
            raise ValidationError(f"phi cutoff needs 0 < r1 < r2 <= r_max, got {r1}, {r2}")
        span = r2 - r1
        x = (r - r1) / span
        base = 1.0 - smoothstep(x)
        base_d1 = -smoothstep_d1(x) / span
        base_d2 = -smoothstep_d2(x) / span**2
        val, d1, lap = _fourth_power(base, base_d1, base_d2, r)
        val[r <= r1] = 1.0
        val[r >= r2] = 0.0
        live = val > 1e-8
        four_gamma = float(np.max(np.abs(d1[live]) / val[live] ** 0.875))
        blive = base > 1e-8
        gamma_half = float(np.max(np.abs(base_d1[blive]) / np.sqrt(base[blive])))
        d78 = np.zeros_like(base)
        d78[blive] = 0.875 * base[blive] ** -0.125 * base_d1[blive]
        C1 = float(max(np.max(r * val), np.max(r * np.abs(d1)), np.max(np.abs(base_d1)), np.max(np.abs(d78))))
        consts = {"four_gamma": four_gamma, "gamma": four_gamma / 4.0, "gamma_half": gamma_half, "C1": max(C1, 1.0)}
        return Cutoff("phi", (radii.R, r1, r2), val, d1, lap, consts)
    if kind == "psi":
        R = radii.R
        if not 2 * R <= grid.r_max:
            raise ValidationError(f"psi cutoff needs 2R <= r_max, got R = {R}")
        x = (r - R) / R
        base = smoothstep(x)
        base_d1 = smoothstep_d1(x) / R
        base_d2 = smoothstep_d2(x) / R**2
        val, d1, lap = _fourth_power(base, base_d1, base_d2, r)
        val[r <= R] = 0.0
        val[r >= 2 * R] = 1.0
        beta1 = float(np.max(np.abs(base_d1)))
        beta2 = float(np.max(np.abs(_laplacian(base_d1, base_d2, r))))
        consts = {
            "beta1": beta1,
            "beta2": beta2,
            "beta_tilde": 4.0 * beta2 + 12.0 * beta1**2,
            "lap_psi_sup": float(np.max(np.abs(lap))),
        }
        return Cutoff("psi", (R, 2 * R, None), val, d1, lap, consts)
    raise ValidationError(f"unknown cutoff kind {kind!r}")
