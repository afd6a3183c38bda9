import numpy as np
import pytest

from config.schemes import get_scheme_builder
from shockstab.scheme import (
    check_cfl,
    cfl_sample_states,
    consistency_defect,
    evolve,
    finite_difference_partials,
    modified_lax_friedrichs,
)


def test_constant_state_is_fixed_point(mlf):
    states = np.full((11, 1), 0.3)
    assert evolve(mlf, states, np.array([0.3]), np.array([0.3])) == pytest.approx(states)


def test_mass_is_conserved_between_end_states(mlf):
    states = np.concatenate([np.ones(6), np.linspace(0.8, -0.8, 5), -np.ones(6)])[:, None]
    after = evolve(mlf, states, np.array([1.0]), np.array([-1.0]))
    assert after.sum() == pytest.approx(states.sum(), abs=1e-13)


def test_short_sequence_is_rejected(mlf):
    with pytest.raises(ValueError):
        evolve(mlf, np.zeros((2, 1)), np.array([0.0]), np.array([0.0]))


def test_consistency_defect_vanishes(mlf):
    assert consistency_defect(mlf, np.linspace(-2, 2, 41)[:, None]) < 1e-12


def test_end_state_coefficients(end):
    # u^+ = -1, ν = 0.5, D = 0.8
    assert end.plus.A[:, 0, 0] == pytest.approx([0.15, 0.2, 0.65], abs=1e-14)
    assert end.minus.A[:, 0, 0] == pytest.approx([0.65, 0.2, 0.15], abs=1e-14)
    assert end.plus.A.sum(axis=0) == pytest.approx(np.eye(1))
    assert end.diagonal.lam["+"][0] == pytest.approx([0.15, 0.2, 0.65], abs=1e-14)


def test_finite_difference_partials_match_closed_form(mlf):
    stencil = np.array([[0.7], [-0.4]])
    assert finite_difference_partials(mlf.numerical_flux, stencil) == pytest.approx(mlf.partials(stencil), abs=1e-9)


def test_cfl_passes_for_reference_scheme(mlf):
    report = check_cfl(mlf, cfl_sample_states(np.array([1.0]), np.array([-1.0])))
    assert report.passed
    assert report.nu_lambda_max == pytest.approx(0.5)
    assert report.nu_lambda_min == pytest.approx(-0.5)
    assert report.margin == pytest.approx(0.5)


def test_cfl_fails_for_large_time_step(burgers_law):
    scheme = modified_lax_friedrichs(burgers_law, nu=3.0, D=0.8)
    report = check_cfl(scheme, cfl_sample_states(np.array([1.0]), np.array([-1.0])))
    assert not report.passed
    assert report.nu_lambda_max == pytest.approx(3.0)
    assert report.violations


def test_sample_states_include_widened_hull():
    samples = cfl_sample_states(np.array([1.0]), np.array([-1.0]), values=np.array([[0.5]]), margin=0.1)
    assert samples[:, 0].max() == pytest.approx(1.1)
    assert samples[-1, 0] == pytest.approx(0.55)


def test_nonpositive_nu_is_rejected(burgers_law):
    with pytest.raises(ValueError):
        modified_lax_friedrichs(burgers_law, nu=0.0, D=0.8)


def test_scheme_builders(burgers_law):
    scheme = get_scheme_builder("lax-friedrichs")(burgers_law, {"nu": 0.5})
    assert scheme.params["D"] == 1.0
    assert (scheme.p, scheme.q) == (1, 1)
    with pytest.raises(KeyError):
        get_scheme_builder("upwind")
