import numpy as np
import pytest

from config.laws import get_law_builder
from config.laws.shallow_water import stationary_shock_states
from shockstab.conservation_model import check_rankine_hugoniot, classify_lax_shock, eigen_decompose
from shockstab.errors import Characteristic, NotLax, RankineHugoniotMismatch


@pytest.fixture(scope="module")
def shallow_water():
    build_law, _ = get_law_builder("shallow-water")
    return build_law({"g": 1.0})


def test_burgers_characteristics_are_trivial(burgers_law):
    for u, speed in ((1.0, 1.0), (-1.0, -1.0)):
        char = eigen_decompose(burgers_law, np.array([u]))
        assert char.eigenvalues == pytest.approx([speed])
        assert char.r(0) == pytest.approx([1.0])
        assert char.l(0) == pytest.approx([1.0])


def test_shallow_water_speeds_at_rest(shallow_water):
    char = eigen_decompose(shallow_water, np.array([1.0, 0.0]))
    assert char.eigenvalues == pytest.approx([-1.0, 1.0])
    assert np.max(np.abs(char.left_vectors @ char.right_vectors - np.eye(2))) < 1e-12
    jac = shallow_water.df(np.array([1.0, 0.0]))
    for l in range(2):
        assert jac @ char.r(l) == pytest.approx(char.eigenvalues[l] * char.r(l))


def test_jacobian_matches_flux(shallow_water):
    assert shallow_water.jacobian_error(np.array([1.3, 0.4])) < 1e-8


def test_rankine_hugoniot_residuals(burgers_law):
    assert check_rankine_hugoniot(burgers_law, np.array([1.0]), np.array([-1.0])) == 0.0
    assert check_rankine_hugoniot(burgers_law, np.array([1.0]), np.array([-0.5])) == pytest.approx(0.375)
    assert check_rankine_hugoniot(burgers_law, np.array([0.3]), np.array([0.3])) == 0.0


def test_burgers_shock_is_lax_1_shock(burgers_shock):
    assert burgers_shock.index_I == 1
    assert burgers_shock.char_minus.eigenvalues == pytest.approx([1.0])
    assert burgers_shock.char_plus.eigenvalues == pytest.approx([-1.0])


def test_reversed_burgers_states_are_not_lax(burgers_law):
    with pytest.raises(NotLax) as info:
        classify_lax_shock(burgers_law, np.array([-1.0]), np.array([1.0]))
    assert info.value.hypothesis == "H:Lax"


def test_rankine_hugoniot_mismatch(burgers_law):
    with pytest.raises(RankineHugoniotMismatch):
        classify_lax_shock(burgers_law, np.array([1.0]), np.array([-0.5]))


def test_characteristic_end_state(burgers_law):
    with pytest.raises(Characteristic):
        classify_lax_shock(burgers_law, np.array([0.0]), np.array([0.0]))


def test_weak_shallow_water_shock_is_1_shock(shallow_water):
    u_minus, u_plus = stationary_shock_states(g=1.0, h_minus=1.0, strength=0.1)
    h_minus, h_plus = u_minus[0], u_plus[0]
    # 閉形式 q² = g h^- h^+ (h^- + h^+) / 2
    assert u_minus[1] ** 2 == pytest.approx(h_minus * h_plus * (h_minus + h_plus) / 2, rel=1e-12)
    shock = classify_lax_shock(shallow_water, u_minus, u_plus)
    assert shock.index_I == 1
    assert shock.char_minus.eigenvalues[0] > 0
    assert shock.char_plus.eigenvalues[0] < 0 < shock.char_plus.eigenvalues[1]


def test_polynomial_flux_reproduces_burgers(burgers_law):
    build_law, build_shock = get_law_builder("polynomial")
    law = build_law({"components": [[{"coef": 0.5, "powers": [2]}]]})
    u = np.array([0.7])
    assert law.f(u) == pytest.approx(burgers_law.f(u))
    assert law.df(u) == pytest.approx(burgers_law.df(u))
    u_minus, u_plus = build_shock({"u_minus": [1.0], "u_plus": [-1.0]})
    assert classify_lax_shock(law, u_minus, u_plus).index_I == 1


def test_polynomial_system_jacobian():
    build_law, _ = get_law_builder("polynomial")
    law = build_law({"components": [
        [{"coef": 1.0, "powers": [1, 1]}],
        [{"coef": 2.0, "powers": [0, 2]}, {"coef": -1.0, "powers": [3, 0]}],
    ]})
    assert law.jacobian_error(np.array([0.4, -1.2])) < 1e-8
    with pytest.raises(ValueError):
        build_law({"components": [[{"coef": 1.0, "powers": [1, 1]}]]})
    with pytest.raises(KeyError):
        get_law_builder("euler")
