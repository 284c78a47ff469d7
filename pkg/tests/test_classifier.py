import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kglab.classifier import NOT_COVERED, PS_MINUS, PS_PLUS, classify, label_for, scaled_ground_state_prediction
from kglab.core import DataSpec, NumericError, ValidationError, make_damping, make_grid
from kglab.evolution import StepperConfig, Trajectory, init_state


def test_zero_data_is_ps_plus(gs):
    c = classify(np.zeros(gs.grid.n), np.zeros(gs.grid.n), gs.h0, gs.grid)
    assert (c.label, c.E, c.K) == (PS_PLUS, 0.0, 0.0)


def test_ground_state_not_covered(gs):
    c = classify(gs.Q, None, gs.h0, gs.grid)
    assert c.energy_ratio == pytest.approx(1.0, abs=1e-6)
    assert c.label == label_for(c.E, c.K, c.h0)
    assert label_for(gs.h0, -1.0, gs.h0) == NOT_COVERED


def test_scaled_up_ground_state_is_ps_minus(gs):
    c = classify(1.2 * gs.Q, None, gs.h0, gs.grid)
    assert c.label == PS_MINUS
    assert c.energy_ratio == pytest.approx(0.8064, rel=1e-5)
    assert c.K / (4 * gs.h0) == pytest.approx(1.44 - 2.0736, rel=1e-4)


def test_ties_resolve_to_plus():
    assert label_for(0.5, 0.0, 1.0) == PS_PLUS
    assert label_for(0.5, -1e-300, 1.0) == PS_MINUS


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(0.05, 1.9).filter(lambda x: abs(x - 1.0) > 0.01))
def test_scaling_map(gs, lam):
    ratio, sign = scaled_ground_state_prediction(lam)
    c = classify(lam * gs.Q, None, gs.h0, gs.grid)
    assert c.energy_ratio == pytest.approx(ratio, abs=1e-5)
    assert np.sign(c.K) == sign
    expected = NOT_COVERED if ratio >= 1 else (PS_PLUS if sign >= 0 else PS_MINUS)
    assert c.label == expected


def test_nonfinite_data(gs):
    u = gs.Q.copy()
    u[3] = math.nan
    with pytest.raises(NumericError):
        classify(u, None, gs.h0, gs.grid)


def test_bad_threshold(gs):
    with pytest.raises(ValidationError):
        classify(gs.Q, None, 0.0, gs.grid)


def _trajectory(gs, lam, T):
    g = make_grid(32.0, 641)
    d = make_damping("exterior-plateau", 0.5, 1.0, 2.0, g)
    state = init_state(DataSpec("scaled_ground_state", lam), g, gs)
    traj = Trajectory(state, d, g, StepperConfig(0.025), int(round(T / 0.025)))
    return g, [s for k, s in enumerate(traj) if k % 4 == 0], traj


def test_flow_invariance_plus(gs):
    g, states, traj = _trajectory(gs, 0.5, 8.0)
    assert traj.blowup_time is None
    assert {classify(s, None, gs.h0, g).label for s in states} == {PS_PLUS}


def test_flow_invariance_minus(gs):
    g, states, traj = _trajectory(gs, 1.2, 1.0)
    assert traj.blowup_time is not None
    results = [classify(s, None, gs.h0, g) for s in states]
    # the K sign persists up to blowup
    assert all(c.K < 0 for c in results)
    # the quadrature energy is only trustworthy while the collapsing core is resolved
    resolved = [c for s, c in zip(states, results) if np.max(np.abs(s.u(g))) < 10.0]
    assert len(resolved) >= 3
    assert {c.label for c in resolved} == {PS_MINUS}
