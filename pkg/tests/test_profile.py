import numpy as np
import pytest

from shockstab.errors import TruncationTooSmall
from shockstab.fitting import ZERO_TAIL, fit_exponential_decay, fit_power_law
from shockstab.profile import extend_profile, profile_family, shift_profile, solve_profile
from shockstab.scheme import evolve


def test_profile_is_fixed_point(profile, mlf, burgers_shock):
    assert profile.converged
    assert profile.residual < 1e-12
    after = evolve(mlf, profile.values, burgers_shock.u_minus, burgers_shock.u_plus)
    assert np.max(np.abs(after - profile.values)) < 1e-11


def test_profile_connects_end_states_monotonically(profile):
    values = profile.values[:, 0]
    assert values[0] == pytest.approx(1.0, abs=1e-12)
    assert values[-1] == pytest.approx(-1.0, abs=1e-12)
    assert np.all(np.diff(values) <= 1e-14)
    # 位相条件 u_0 = (u^- + u^+)/2
    assert profile.value_at(0)[0] == pytest.approx(0.0, abs=1e-12)


def test_profile_is_odd(profile):
    values = profile.values[:, 0]
    assert np.max(np.abs(values + values[::-1])) < 1e-10


def test_tails_decay_at_stable_root_rate(profile):
    # u^+ 側の減衰は F(κ) = 1 の安定根 3/13 で決まる
    for side in ("+", "-"):
        fit = profile.tail_fits[side]
        assert fit.rate == pytest.approx(np.log(13 / 3), rel=0.1)
        assert fit.r_squared > 0.99


def test_value_at_outside_lattice(profile):
    assert profile.value_at(profile.J_dom + 5) == pytest.approx([-1.0])
    assert profile.value_at(-profile.J_dom - 5) == pytest.approx([1.0])


def test_short_lattice_is_detected(mlf, burgers_shock, end):
    with pytest.raises(TruncationTooSmall):
        solve_profile(mlf, burgers_shock, end, J_dom=5)


def test_family_is_parametrized_by_phase(mlf, burgers_shock, end):
    members = profile_family(mlf, burgers_shock, end, shifts=[0.0, 0.1], J_dom=60)
    assert [m.phase_shift for m in members] == [0.0, 0.1]
    assert members[1].value_at(0)[0] == pytest.approx(0.1, abs=1e-12)
    assert all(m.converged for m in members)


def test_extend_and_shift(profile):
    wider = extend_profile(profile, profile.J_dom + 10)
    assert wider.values.shape[0] == profile.values.shape[0] + 20
    assert wider.value_at(0) == pytest.approx(profile.value_at(0))
    shifted = shift_profile(profile, 3)
    assert shifted.value_at(3) == pytest.approx(profile.value_at(0))
    assert shifted.values[0] == pytest.approx([1.0])
    with pytest.raises(ValueError):
        extend_profile(profile, profile.J_dom - 1)


def test_exponential_fit_recovers_rate():
    x = np.arange(1, 30)
    fit = fit_exponential_decay(x, 3.0 * np.exp(-0.7 * x))
    assert fit.rate == pytest.approx(0.7)
    assert fit.constant == pytest.approx(3.0)
    assert fit.r_squared == pytest.approx(1.0)


def test_exponential_fit_edge_cases():
    assert fit_exponential_decay(np.arange(5), np.zeros(5)) is ZERO_TAIL
    assert fit_exponential_decay(np.arange(5), np.array([1.0, 1e-20, 1e-20, 1e-20, 1e-20])) is None


def test_power_law_fit():
    n = np.arange(10, 200)
    fit = fit_power_law(n, 2.0 * n ** -0.25)
    assert fit.exponent == pytest.approx(-0.25)
    assert fit.n_points == n.size
