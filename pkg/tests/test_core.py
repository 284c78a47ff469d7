import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kglab.core import (
    DataSpec,
    FieldState,
    NumericError,
    Radii,
    RunConfig,
    ValidationError,
    make_damping,
    make_grid,
    recover_u,
    smoothstep,
    zero_damping,
)


def test_grid_spacing_and_nodes():
    g = make_grid(10.0, 201)
    assert g.dr == pytest.approx(0.05)
    assert g.r[0] == 0.0 and g.r[-1] == pytest.approx(10.0)
    assert g.node_of(2.5) == 50


@pytest.mark.parametrize("r_max, n", [(10.0, 15), (0.0, 100), (-1.0, 100)])
def test_grid_rejects_bad_sizes(r_max, n):
    with pytest.raises(ValidationError):
        make_grid(r_max, n)


def test_field_state_pins_boundary_and_freezes(grid):
    s = FieldState.from_u(grid, np.ones(grid.n), np.ones(grid.n))
    assert s.v[0] == 0 and s.v[-1] == 0 and s.w[-1] == 0
    with pytest.raises(ValueError):
        s.v[3] = 1.0


def test_field_state_reports_nan_node(grid):
    u = np.zeros(grid.n)
    u[7] = np.nan
    with pytest.raises(NumericError) as info:
        FieldState.from_u(grid, u)
    assert info.value.node == 7


def test_recover_u_is_exact_for_even_quadratics(grid):
    u = 3.0 - 2.0 * grid.r**2
    assert recover_u(grid.r * u, grid)[0] == pytest.approx(3.0, abs=1e-12)


def test_smoothstep_endpoints():
    assert smoothstep(-1.0) == 0.0 and smoothstep(2.0) == 1.0
    assert smoothstep(0.5) == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(
    shape=st.sampled_from(["constant", "exterior-plateau", "exterior-band"]),
    lam0=st.floats(0.01, 2.0),
    extra=st.floats(0.0, 3.0),
    R=st.floats(0.5, 4.0),
)
def test_damping_respects_condition_bounds(shape, lam0, extra, R):
    g = make_grid(20.0, 401)
    lam1 = lam0 + extra
    d = make_damping(shape, lam0, lam1, R, g)
    a = d.alpha
    assert a.min() >= -1e-12 and a.max() <= lam1 + 1e-12
    assert np.all(a[g.r >= R] >= lam0 - 1e-12)


def test_plateau_vanishes_inside_and_hits_floor_at_R():
    g = make_grid(20.0, 401)
    d = make_damping("exterior-plateau", 0.5, 1.0, 4.0, g)
    assert np.all(d.alpha[g.r <= 3.0] == 0.0)
    assert d.alpha[g.node_of(4.0)] == pytest.approx(0.5)
    assert d.alpha[-1] == pytest.approx(1.0)


def test_band_falls_back_to_floor():
    g = make_grid(20.0, 401)
    d = make_damping("exterior-band", 0.5, 1.0, 2.0, g)
    assert d.alpha[g.node_of(3.0)] == pytest.approx(1.0)
    assert d.alpha[-1] == pytest.approx(0.5)


@pytest.mark.parametrize(
    "args",
    [("constant", 0.0, 1.0, 1.0), ("constant", 2.0, 1.0, 1.0), ("constant", 0.5, 1.0, 0.0), ("ramp", 0.5, 1.0, 1.0)],
)
def test_damping_rejects_bad_parameters(args, grid):
    with pytest.raises(ValidationError):
        make_damping(*args, grid)


def test_zero_damping_is_zero(grid):
    assert zero_damping(grid).is_zero


def test_radii_defaults_and_order():
    r = Radii(2.0)
    assert (r.r1, r.r2) == (3.0, 5.0)
    with pytest.raises(ValidationError):
        Radii(2.0, 4.0, 3.0)


def _cfg(grid, **kw):
    base = dict(grid=grid, damping=make_damping("constant", 1.0, 1.0, 1.0, grid),
                data=DataSpec("gaussian", 0.1), dt=0.025, T=5.0, support=4.3)
    base.update(kw)
    return RunConfig(**base)


def test_run_config_step_count(grid):
    assert _cfg(grid).n_steps == 200


@pytest.mark.parametrize(
    "kw, msg",
    [({"dt": 0.06}, "CFL"), ({"T": 6.0}, "domain too small"), ({"m_blow": 1.0}, "m_blow"), ({"cadence": 0}, "cadence")],
)
def test_run_config_validation(grid, kw, msg):
    with pytest.raises(ValidationError, match=msg):
        _cfg(grid, **kw)
