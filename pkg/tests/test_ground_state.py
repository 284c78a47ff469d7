import numpy as np
import pytest

from oracles import ground_state_mass, ground_state_q0

from kglab.core import ValidationError, make_grid
from kglab.ground_state import (
    AccuracyError,
    GroundState,
    load_ground_state,
    ode_residual,
    save_ground_state,
    shoot_ground_state,
    verify_ground_state,
)

# frozen after confirmation against the adaptive-integrator oracle at n = 4001
Q0_FROZEN = 4.33738768
H0_FROZEN = 18.8972513


@pytest.fixture(scope="module")
def oracle_q0():
    return ground_state_q0()


def test_q0_matches_oracle(gs, oracle_q0):
    assert gs.a == pytest.approx(oracle_q0, abs=1e-7)


def test_frozen_regression_values(gs):
    assert gs.a == pytest.approx(Q0_FROZEN, abs=1e-7)
    assert gs.h0 == pytest.approx(H0_FROZEN, rel=1e-6)


def test_mass_matches_oracle(gs, oracle_q0):
    assert gs.mass2 == pytest.approx(ground_state_mass(oracle_q0), rel=1e-7)


def test_pohozaev_relations(gs):
    assert gs.grad2 == pytest.approx(3 * gs.mass2, rel=1e-5)
    assert gs.L4 == pytest.approx(4 * gs.mass2, rel=1e-5)
    assert gs.h0 == pytest.approx(gs.mass2, rel=1e-5)


def test_stationarity_report(gs):
    rep = verify_ground_state(gs)
    assert rep["stationary"]
    assert rep["K_rel"] <= 1e-3
    assert rep["h0_gap_rel"] <= 1e-3
    assert rep["two_F"] == pytest.approx(rep["four_h0"], rel=1e-3)


def test_profile_positive_and_decreasing(gs):
    assert np.all(gs.Q > 0)
    assert np.all(np.diff(gs.Q) < 0)
    assert gs.profile(np.array([25.0]))[0] == pytest.approx(gs.tail_coefficient * np.exp(-25.0) / 25.0)


def test_doubled_resolution_agrees(gs):
    fine = shoot_ground_state(make_grid(20.0, 4001), 1e-9)
    assert fine.a == pytest.approx(gs.a, abs=1e-7)
    assert fine.h0 == pytest.approx(gs.h0, rel=1e-6)


def test_perturbed_profile_is_not_stationary(gs):
    bumped = GroundState(gs.grid, 1.01 * gs.Q, 1.01 * gs.dQ, 1.01 * gs.a, gs.tol, gs.h0, gs.mass2, gs.grad2,
                         gs.L4, gs.residual_sup, gs.match_radius, gs.tail_coefficient)
    rep = verify_ground_state(bumped)
    assert rep["K_rel"] > 1e-3 and not rep["stationary"]
    assert np.max(np.abs(ode_residual(bumped.Q, bumped.dQ, gs.grid))) > 1e-2


@pytest.mark.parametrize("tol", [1e-7, 1e-8, 1e-9])
def test_residual_tracks_tolerance(tol):
    g = shoot_ground_state(make_grid(20.0, 2001), tol)
    assert g.residual_sup <= 1e3 * tol


def test_tolerance_below_resolution_floor():
    with pytest.raises(AccuracyError):
        shoot_ground_state(make_grid(20.0, 2001), 1e-12)


@pytest.mark.parametrize("kwargs", [{"tol": 1e-2}, {"tol": 0.0}, {"bracket": (0.0, 5.0)}])
def test_bad_arguments(kwargs):
    with pytest.raises(ValidationError):
        shoot_ground_state(make_grid(20.0, 2001), **kwargs)


def test_short_domain_rejected():
    with pytest.raises(ValidationError):
        shoot_ground_state(make_grid(10.0, 1001))


def test_cache_round_trip(gs, tmp_path):
    path = tmp_path / "q.txt"
    save_ground_state(gs, path)
    back = load_ground_state(path)
    assert back.grid == gs.grid
    np.testing.assert_array_equal(back.Q, gs.Q)
    assert back.a == gs.a and back.h0 == gs.h0


def test_cache_rejects_foreign_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# something else\n1 2 3\n")
    with pytest.raises(ValidationError):
        load_ground_state(path)
