import numpy as np
import pytest

from conftest import small_run
from oracles import damped_mode_amplitude

from kglab.core import DataSpec, FieldState, Radii, RunConfig, ValidationError, make_damping, make_grid, zero_damping
from kglab.evolution import (
    BlowupSignal,
    StepperConfig,
    Trajectory,
    init_state,
    required_domain,
    run,
    scheme_energy,
    step,
    support_radius,
)


def _final(state0, damping, grid, dt, T, nonlinear=True):
    traj = Trajectory(state0, damping, grid, StepperConfig(dt, nonlinear=nonlinear), int(round(T / dt)))
    last = None
    for last in traj:
        pass
    return last


def test_linear_sine_mode_matches_damped_oscillator():
    g = make_grid(10.0, 801)
    m = 3
    k = m * np.pi / g.r_max
    v0 = np.sin(k * g.r)
    d = make_damping("constant", 1.0, 1.0, 1.0, g)
    s = _final(FieldState(0.0, v0, np.zeros(g.n)), d, g, 0.00625, 5.0, nonlinear=False)
    ratio = s.v[1:-1] / v0[1:-1]
    assert np.max(np.abs(ratio - damped_mode_amplitude(5.0, k, 1.0))) < 1e-4


def test_second_order_convergence_under_halving():
    T = 3.0
    data = DataSpec("gaussian", 0.3, 1.0)
    sols = []
    for n in (401, 801, 1601):
        g = make_grid(16.0, n)
        d = make_damping("exterior-plateau", 0.5, 1.0, 2.0, g)
        s = _final(init_state(data, g), d, g, 0.5 * g.dr, T)
        sols.append(s.v[:: (n - 1) // 400])
    ratio = np.max(np.abs(sols[0] - sols[1])) / np.max(np.abs(sols[1] - sols[2]))
    assert 3.5 <= ratio <= 4.5


def _bump_leak(n, T=5.0, r0=2.0):
    g = make_grid(20.0, n)
    x = g.r / r0
    with np.errstate(divide="ignore", over="ignore"):
        u = np.where(x < 1, 0.5 * np.e * np.exp(-1.0 / np.maximum(1 - x**2, 1e-300)), 0.0)
    dt = 0.5 * g.dr
    s = _final(FieldState.from_u(g, u), zero_damping(g), g, dt, T)
    return g, np.abs(s.u(g)), s.t, r0


def test_exactly_zero_outside_numerical_domain_of_dependence():
    g, u, t, r0 = _bump_leak(801, T=2.0)
    steps = int(round(t / (0.5 * g.dr)))
    assert np.all(u[g.r > r0 + steps * g.dr + 1e-12] == 0.0)


def test_leakage_past_light_cone_vanishes_under_refinement():
    leaks = []
    for n in (2001, 4001):
        g, u, t, r0 = _bump_leak(n)
        leaks.append(np.max(u[g.r > r0 + t + 2 * g.dr]))
    assert leaks[0] < 1e-6 * 0.5
    assert leaks[1] < leaks[0] / 16


@pytest.mark.xfail(strict=True, reason="leapfrog dispersion leaks ~1e-7 (dr=0.01) past r0+t+2dr; see decisions ledger")
def test_light_cone_bound_literal():
    g, u, t, r0 = _bump_leak(2001)
    assert np.max(u[g.r > r0 + t + 2 * g.dr]) <= 1e-10


def test_undamped_energy_conservation():
    series = small_run(0.05, "none", dr=0.01, T=10.0)
    E = series.column("E")
    assert np.all(series.A == 0.0)
    assert abs(E[-1] - E[0]) / E[0] <= 1e-4


def test_scheme_energy_dissipates_exactly_when_linear():
    series = small_run(0.05, "exterior-plateau", T=5.0, linear=True, sample_dt=0.025)
    Eh = series.E_scheme
    # linear leapfrog: the scheme energy drops by dt * sum(alpha w^2); compare with the trapezoid decrement
    assert np.max(np.abs(Eh - Eh[0] + series.A)) / Eh[0] < 1e-3
    assert np.all(np.diff(Eh) <= 1e-12 * Eh[0])


def test_decrement_independent_of_cadence():
    a = small_run(0.05, T=4.0, sample_dt=0.025)
    b = small_run(0.05, T=4.0, sample_dt=1.0)
    assert a.A[-1] == pytest.approx(b.A[-1], rel=1e-12)
    assert len(b.times) == 5


def test_zero_data_stays_zero():
    series = small_run(0.0, T=2.0)
    assert series.outcome == "global"
    assert np.all(series.column("E") == 0.0) and np.all(series.A == 0.0)


def _blowup_time(gs, m_blow, n=641):
    g = make_grid(32.0, n)
    d = make_damping("exterior-plateau", 0.5, 1.0, 2.0, g)
    support = support_radius(DataSpec("scaled_ground_state", 1.2), gs)
    cfg = RunConfig(g, d, DataSpec("scaled_ground_state", 1.2), 0.5 * g.dr, 3.0, m_blow=m_blow, cadence=4,
                    radii=Radii(2.0), support=support)
    return run(cfg, gs)


def test_blowup_time_insensitive_to_threshold(gs):
    a, b = _blowup_time(gs, 1e3), _blowup_time(gs, 1e4)
    assert a.blew_up and b.blew_up
    assert abs(a.t_star - b.t_star) <= 0.05
    assert a.times[-1] == a.t_star and a.final_state.t == a.t_star


def test_step_raises_blowup_signal(gs):
    g = make_grid(32.0, 641)
    d = make_damping("exterior-plateau", 0.5, 1.0, 2.0, g)
    state = init_state(DataSpec("scaled_ground_state", 1.2), g, gs)
    cfg = StepperConfig(0.025, m_blow=10.0)
    with pytest.raises(BlowupSignal):
        for _ in range(200):
            state = step(state, d, g, cfg)


def test_step_is_pure():
    g = make_grid(16.0, 321)
    d = make_damping("constant", 1.0, 1.0, 1.0, g)
    s = init_state(DataSpec("gaussian", 0.1), g)
    a, b = step(s, d, g, StepperConfig(0.025)), step(s, d, g, StepperConfig(0.025))
    np.testing.assert_array_equal(a.v, b.v)
    assert a.t == pytest.approx(0.025) and s.t == 0.0


def test_cfl_violation():
    g = make_grid(16.0, 321)
    d = make_damping("constant", 1.0, 1.0, 1.0, g)
    with pytest.raises(ValidationError, match="CFL"):
        step(init_state(DataSpec("gaussian", 0.1), g), d, g, StepperConfig(0.1))


def test_init_state_errors():
    g = make_grid(8.0, 161)
    with pytest.raises(ValidationError, match="family"):
        init_state(DataSpec("plane_wave", 1.0), g)
    with pytest.raises(ValidationError, match="support"):
        init_state(DataSpec("gaussian", 1.0, 2.0), g)


def test_required_domain():
    assert required_domain(4.0, 10.0, 2.0) == 16.0
    with pytest.raises(ValidationError):
        required_domain(-1.0, 1.0, 1.0)


def test_scheme_energy_of_zero_state():
    g = make_grid(8.0, 161)
    assert scheme_energy(FieldState.zeros(g), zero_damping(g), g, 0.025) == 0.0


def test_init_state_examples(gs):
    from oracles import gaussian_integrals
    from kglab.functionals import evaluate_functionals

    g = make_grid(32.0, 3201)
    zero = init_state(DataSpec("gaussian", 0.0), g)
    assert not np.any(zero.v) and not np.any(zero.w)
    q = evaluate_functionals(init_state(DataSpec("scaled_ground_state", 1.0), g, gs), g)
    assert q.E == pytest.approx(gs.h0, rel=1e-5)
    ref = gaussian_integrals(0.05, 1.0)
    rec = evaluate_functionals(init_state(DataSpec("gaussian", 0.05), g), g)
    assert rec.E_L == pytest.approx(0.5 * (ref["grad2"] + ref["mass2"]), rel=1e-7)
    half = evaluate_functionals(init_state(DataSpec("gaussian", 0.025), g), g)
    assert rec.E_L / half.E_L == pytest.approx(4.0, rel=1e-12)
