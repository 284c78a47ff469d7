"""Numerical audits of the energy identity, multiplier identities, Morawetz-type
estimates, observation inequalities and exponential decay fits.

Space integrals use the functionals module's radial quadrature.  Time
integrals use the trapezoid rule on whatever sample times the input provides:
the sampled series for the Morawetz and observation reports, and every stepper
state for the multiplier audits, which stream over the trace in time order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .core import DampingProfile, FieldState, RadialGrid, RunSeries, ValidationError
from .functionals import FOUR_PI, Cutoff, grad_integrand, quartic_integrand, radial_derivative

DEFAULT_FIT_WINDOW = (5.0, None)
MORAWETZ_KEYS = ("u4_1", "nabla_1", "u4_2", "nabla_2")


# --------------------------------------------------------------------------
# energy identity


@dataclass(frozen=True)
class EnergyResidual:
    times: np.ndarray
    residual: np.ndarray
    max_relative: float
    partial: bool = False


def energy_identity_residual(series: RunSeries) -> EnergyResidual:
    """residual(t_k) = E(t_k) - E(0) + A[0, t_k].

    On a blown-up series only samples strictly before t* are used and the
    result is flagged ``partial``.
    """
    t = np.asarray(series.times)
    E = series.column("E")
    A = np.asarray(series.A)
    keep = np.ones(t.size, dtype=bool)
    if series.blew_up:
        keep = t < series.t_star
        keep[0] = True
    res = E[keep] - E[0] + A[keep]
    scale = abs(E[0]) if E[0] != 0 else 1.0
    max_rel = float(np.max(np.abs(res)) / scale) if res.size else 0.0
    return EnergyResidual(t[keep], res, max_rel, partial=series.blew_up)


# --------------------------------------------------------------------------
# streaming space-time quadrature


class _TimeTrapezoid:
    """Accumulates int_0^T f(t) dt one sample at a time."""

    def __init__(self, names):
        self.total = dict.fromkeys(names, 0.0)
        self._prev = None
        self._t_prev = None

    def add(self, t: float, values: dict) -> None:
        if self._prev is not None:
            h = t - self._t_prev
            for k, val in values.items():
                self.total[k] += 0.5 * h * (self._prev[k] + val)
        self._prev = values
        self._t_prev = t


def _dense(trace: Iterable[FieldState], grid: RadialGrid):
    """Yields the trace states, insisting on spacing no larger than dr."""
    prev_t = None
    for state in trace:
        if prev_t is not None:
            gap = state.t - prev_t
            if gap <= 0:
                raise ValidationError("trace times must increase strictly")
            if gap > grid.dr * (1 + 1e-9):
                raise ValidationError(
                    f"trace sample spacing {gap:g} exceeds dr = {grid.dr:g}; "
                    "record a dense trace (every stepper state, e.g. --dense)"
                )
        prev_t = state.t
        yield state


def _check_cutoff(cutoff: Cutoff, kind: str, grid: RadialGrid) -> None:
    if cutoff.kind != kind:
        raise ValidationError(f"expected a {kind!r} cutoff, got {cutoff.kind!r}")
    if cutoff.values.shape != (grid.n,):
        raise ValidationError("cutoff samples do not match the grid")


def _check_damping(damping: DampingProfile, grid: RadialGrid) -> None:
    if damping.alpha.shape != (grid.n,):
        raise ValidationError("damping samples do not match the grid")


def _w4(g: np.ndarray, dr: float) -> float:
    return FOUR_PI * float(np.trapezoid(g, dx=dr))


# --------------------------------------------------------------------------
# multiplier identity


@dataclass(frozen=True)
class MultiplierLedger:
    """Terms of the identity obtained from the multiplier phi (x.grad u + u).

    ``V2`` carries the factor 1/4 in front of int int (x.grad phi) u^4 that
    the exact computation produces; ``V2_unscaled`` is the same integral
    without it.  ``total`` is I + II + III + IV + V1 + V2 + VI, which
    vanishes for exact solutions.  ``scale`` is the sum of the absolute term
    values, the natural yardstick for ``total``.
    """

    I: float
    II: float
    III: float
    IV: float
    V1: float
    V2: float
    V2_unscaled: float
    VI: float
    total: float
    scale: float
    psi_residual: float | None = None
    T: float = 0.0
    n_states: int = 0

    @property
    def V(self) -> float:
        return self.V1 + self.V2

    @property
    def relative_total(self) -> float:
        return abs(self.total) / self.scale if self.scale > 0 else 0.0

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("I", "II", "III", "IV", "V1", "V2", "V2_unscaled", "VI", "total", "scale", "psi_residual", "T", "n_states")}
        out["V"] = self.V
        out["relative_total"] = self.relative_total
        return out


def _phi_densities(state: FieldState, grid: RadialGrid, phi: Cutoff, alpha: np.ndarray) -> tuple[dict, float]:
    dr, r = grid.dr, grid.r
    v, w = state.v, state.w
    vr = radial_derivative(v, dr, parity=-1)
    grad = grad_integrand(v, grid)
    quart = quartic_integrand(v, grid)
    p, dp = phi.values, phi.d1
    rdp = r * dp
    mult = p * w * r * vr
    # (v_r - v/r) times v_r times r, the radial part of u_r (x.grad u + u) r^2
    cross = np.zeros_like(v)
    cross[1:] = (vr[1:] - v[1:] / r[1:]) * vr[1:]
    dens = {
        "II": _w4(alpha * mult, dr),
        "IV": _w4(dp * vr * (r * vr - v) - 0.5 * rdp * (grad - w * w + v * v), dr),
        "V1": _w4(-0.25 * p * quart, dr),
        "V2u": _w4(rdp * quart, dr),
        "VI": _w4(0.5 * p * (grad + w * w - v * v), dr),
    }
    # III: divergence of the radial flux, r^2 F_r, integrated over [0, r2]
    flux = p * r * cross - 0.5 * p * r * (grad + v * v - w * w) - 0.25 * p * r * quart
    dflux = radial_derivative(flux, dr, parity=-1)
    m = min(grid.node_of(phi.radii[2]) + 1, grid.n)
    dens["III"] = FOUR_PI * float(np.trapezoid(dflux[:m], dx=dr))
    return dens, _w4(mult, dr)


def _psi_densities(state: FieldState, grid: RadialGrid, psi: Cutoff, alpha: np.ndarray) -> tuple[dict, float]:
    dr = grid.dr
    v, w = state.v, state.w
    s = psi.values
    grad = grad_integrand(v, grid)
    quart = quartic_integrand(v, grid)
    vw = v * w
    dens = {
        "space": _w4(s * (grad + v * v - quart) - 0.5 * psi.lap * v * v - s * w * w, dr),
        "damp": _w4(s * alpha * vw, dr),
    }
    return dens, _w4(s * vw, dr)


def multiplier_terms(
    trace: Iterable[FieldState],
    cutoff_phi: Cutoff,
    damping: DampingProfile,
    grid: RadialGrid,
    cutoff_psi: Cutoff | None = None,
) -> MultiplierLedger:
    """Space-time quadrature of every term of the phi-multiplier identity.

    ``trace`` must yield every stepper state in time order (spacing <= dr).
    When ``cutoff_psi`` is given the psi-identity residual is evaluated in the
    same pass and stored on the ledger.
    """
    _check_cutoff(cutoff_phi, "phi", grid)
    if cutoff_psi is not None:
        _check_cutoff(cutoff_psi, "psi", grid)
    _check_damping(damping, grid)
    alpha = damping.alpha
    acc = _TimeTrapezoid(("II", "IV", "V1", "V2u", "VI", "III", "space", "damp"))
    first = last = None
    t0 = t1 = 0.0
    n = 0
    for state in _dense(trace, grid):
        dens, boundary = _phi_densities(state, grid, cutoff_phi, alpha)
        psi_b = 0.0
        if cutoff_psi is not None:
            psi_dens, psi_b = _psi_densities(state, grid, cutoff_psi, alpha)
            dens.update(psi_dens)
        else:
            dens.update(space=0.0, damp=0.0)
        acc.add(state.t, dens)
        if first is None:
            first, t0 = (boundary, psi_b), state.t
        last, t1 = (boundary, psi_b), state.t
        n += 1
    if n == 0:
        raise ValidationError("empty trace")
    tot = acc.total
    term_I = last[0] - first[0]
    V2 = 0.25 * tot["V2u"]
    terms = (term_I, tot["II"], tot["III"], tot["IV"], tot["V1"], V2, tot["VI"])
    total = math.fsum(terms)
    scale = math.fsum(abs(x) for x in terms)
    psi_res = None
    if cutoff_psi is not None:
        psi_res = tot["space"] + (last[1] - first[1]) + tot["damp"]
    return MultiplierLedger(
        I=term_I, II=tot["II"], III=tot["III"], IV=tot["IV"], V1=tot["V1"], V2=V2,
        V2_unscaled=tot["V2u"], VI=tot["VI"], total=total, scale=scale,
        psi_residual=psi_res, T=t1 - t0, n_states=n,
    )


def psi_identity_residual(
    trace: Iterable[FieldState], cutoff_psi: Cutoff, damping: DampingProfile, grid: RadialGrid
) -> float:
    """Residual of the identity obtained by multiplying the equation with psi u.

    int int psi (|grad u|^2 + u^2 - u^4) - int int ((Lap psi / 2) u^2 + psi u_t^2)
    + [int psi u u_t]_0^T + int int psi alpha u u_t, which is zero for exact
    solutions.
    """
    _check_cutoff(cutoff_psi, "psi", grid)
    _check_damping(damping, grid)
    alpha = damping.alpha
    acc = _TimeTrapezoid(("space", "damp"))
    first = last = None
    for state in _dense(trace, grid):
        dens, boundary = _psi_densities(state, grid, cutoff_psi, alpha)
        acc.add(state.t, dens)
        if first is None:
            first = boundary
        last = boundary
    if first is None:
        raise ValidationError("empty trace")
    return acc.total["space"] + (last - first) + acc.total["damp"]


def stationary_trace(state: FieldState, dt: float, n_steps: int):
    """The constant trajectory u(t) = u0 sampled every dt; used as an oracle."""
    for k in range(n_steps + 1):
        yield FieldState(state.t + k * dt, state.v, state.w)


# --------------------------------------------------------------------------
# Morawetz-type estimates


@dataclass(frozen=True)
class MorawetzEstimate:
    lhs: float
    bracket: float
    constant: float | None
    epsilon_weighted: bool
    raw_ratio: float | None = None


@dataclass(frozen=True)
class MorawetzReport:
    """LHS, bracket and empirical constant for the four estimates.

    For the two quartic estimates the constant is LHS / (epsilon * bracket)
    and ``raw_ratio`` is LHS / bracket.  Constants are ``None`` when the
    bracket vanishes (zero data).
    """

    epsilon: float
    T: float
    estimates: dict = field(default_factory=dict)

    @property
    def applicable(self) -> bool:
        return all(e.constant is not None for e in self.estimates.values())

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "T": self.T,
            **{
                name: {"lhs": e.lhs, "bracket": e.bracket, "constant": e.constant,
                       "raw_ratio": e.raw_ratio, "epsilon_weighted": e.epsilon_weighted}
                for name, e in self.estimates.items()
            },
        }


def _time_integral(series: RunSeries, key: str) -> float:
    return float(np.trapezoid(series.column(key), series.times))


def morawetz_report(series: RunSeries, radii=None) -> MorawetzReport:
    """Assemble the four space-time estimates from the sampled restricted integrals."""
    if series.blew_up:
        raise ValidationError("Morawetz estimates need a global run; this series blew up")
    if not series.records or not series.records[0].restricted:
        raise ValidationError("series lacks restricted integrals; run with audit radii")
    if radii is not None and len(series.times) and "u2_in_4R" not in series.records[0].restricted:
        raise ValidationError("restricted integrals do not match the requested radii")
    eps = float(series.epsilon)
    ti = lambda key: _time_integral(series, key)  # noqa: E731
    A_T = float(series.A[-1])
    E_T = float(series.records[-1].E)
    inner = ti("u2_in_4R") + ti("grad2_band_2R_4R")
    parts = {
        "u4_1": (ti("u4_in_2R"), inner, True),
        "nabla_1": (ti("grad2_in_2R"), A_T + E_T + inner, False),
        "u4_2": (ti("u4_out_2R"), ti("u2_in_2R") + ti("grad2_out_2R"), True),
        "nabla_2": (ti("h1_out_2R"), A_T + E_T + ti("u2_in_2R") + eps * ti("grad2_band_R_2R"), False),
    }
    estimates = {}
    for name, (lhs, bracket, weighted) in parts.items():
        const = raw = None
        if bracket > 0 and (eps > 0 or not weighted):
            raw = lhs / bracket
            const = raw / eps if weighted else raw
        estimates[name] = MorawetzEstimate(lhs, bracket, const, weighted, raw)
    return MorawetzReport(eps, float(series.times[-1] - series.times[0]), estimates)


# --------------------------------------------------------------------------
# observation inequalities


@dataclass(frozen=True)
class ObservationEntry:
    T: float
    E_T: float
    A_T: float
    local_mass: float
    strong: float
    weak: float


@dataclass(frozen=True)
class ObservationReport:
    entries: tuple
    unbounded: bool
    degenerate: bool

    @property
    def max_strong(self) -> float:
        vals = [e.strong for e in self.entries if not math.isnan(e.strong)]
        return max(vals) if vals else math.nan

    def as_dict(self) -> dict:
        return {
            "unbounded": self.unbounded,
            "degenerate": self.degenerate,
            "entries": [e.__dict__ for e in self.entries],
        }


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return math.inf if num > 0 else math.nan


def observation_report(series: RunSeries, T_list) -> ObservationReport:
    """Strong E(T)/A[0,T] and weak E(T)/(A + int_0^T ||u||^2_{L2(B_4R)}) ratios.

    Each requested T must coincide with a sample time.  A vanishing
    denominator with E(T) > 0 is an infinite ratio and sets ``unbounded``; a
    vanishing denominator with E(T) = 0 gives NaN and sets ``degenerate``.
    """
    if series.blew_up:
        raise ValidationError("observation ratios need a global run")
    t = np.asarray(series.times)
    E = series.column("E")
    mass_in = series.column("u2_in_4R") if series.records[0].restricted else series.column("mass2")
    cum_mass = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (mass_in[1:] + mass_in[:-1]))])
    entries = []
    unbounded = degenerate = False
    tol = 1e-9 * max(1.0, float(t[-1]))
    for T in T_list:
        k = int(np.argmin(np.abs(t - T)))
        if abs(t[k] - T) > tol:
            raise ValidationError(f"T = {T} is not a sample time of the series")
        E_T, A_T, m_T = float(E[k]), float(series.A[k]), float(cum_mass[k])
        strong = _ratio(E_T, A_T)
        weak = _ratio(E_T, A_T + m_T)
        unbounded |= math.isinf(strong)
        degenerate |= math.isnan(strong)
        entries.append(ObservationEntry(float(t[k]), E_T, A_T, m_T, strong, weak))
    return ObservationReport(tuple(entries), unbounded, degenerate)


# --------------------------------------------------------------------------
# decay fits


@dataclass(frozen=True)
class DecayFit:
    window: tuple
    rate: float
    coefficient: float
    r_squared: float
    degenerate: bool = False


def fit_decay_arrays(t, E, window=DEFAULT_FIT_WINDOW) -> DecayFit:
    """Least-squares line through (t, log E) on the window; rate = -slope."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    t_a, t_b = window
    t_b = float(t[-1]) if t_b is None else float(t_b)
    if t_a < t[0] - 1e-12 or t_b > t[-1] + 1e-12 or t_a >= t_b:
        raise ValidationError(f"fit window [{t_a}, {t_b}] not inside the run [{t[0]}, {t[-1]}]")
    sel = (t >= t_a - 1e-12) & (t <= t_b + 1e-12)
    if sel.sum() < 3:
        raise ValidationError("fit window holds fewer than three samples")
    if np.any(E[sel] <= 0):
        raise ValidationError("energy must be strictly positive on the fit window")
    x, y = t[sel], np.log(E[sel])
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-28 * max(1.0, float(np.sum(y**2))):
        return DecayFit((t_a, t_b), 0.0, float(np.exp(y.mean())), math.nan, degenerate=True)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return DecayFit((t_a, t_b), float(-slope), float(np.exp(intercept)), r2)


def fit_decay(series: RunSeries, window=DEFAULT_FIT_WINDOW) -> DecayFit:
    return fit_decay_arrays(series.times, series.column("E"), window)
