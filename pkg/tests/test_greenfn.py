import numpy as np
import pytest

from shockstab.errors import ConeTruncation
from shockstab.greenfn import (
    ConstantSet,
    WaveConstant,
    activation_curve,
    activation_windows,
    decompose,
    estimate_constants,
    in_flight_decay,
    in_flight_j0,
    residue_convergence,
    residue_cross_check,
    temporal_green_contour,
    temporal_green_iterate,
)
from shockstab.resolvent import extend_V, residue_field, scattering_coefficients

J0 = 10


@pytest.fixture(scope="module")
def iterated(operator):
    return temporal_green_iterate(operator, 0, 25)


@pytest.fixture(scope="module")
def table(permuted_factory, evans_data):
    return scattering_coefficients(permuted_factory, evans_data, z_check=1.03)


@pytest.fixture(scope="module")
def long_run(operator):
    return temporal_green_iterate(operator, J0, 120)


@pytest.fixture(scope="module")
def V(evans_data, kernel, operator):
    return extend_V(evans_data, kernel.values, operator.lattice)


def test_contour_matches_iteration(operator, iterated):
    contour = temporal_green_contour(operator, 0, js=[-10], ns=[25], r=1.05, M_nodes=1024)
    assert abs(contour[0, 0, 0, 0] - iterated.at(25, -10)[0, 0]) < 1e-8


def test_contour_is_converged_in_nodes(operator):
    fine = temporal_green_contour(operator, 0, js=[-10, 0, 10], ns=[25], M_nodes=1024)
    coarse = temporal_green_contour(operator, 0, js=[-10, 0, 10], ns=[25], M_nodes=512)
    assert np.max(np.abs(fine - coarse)) < 1e-9


def test_iteration_conserves_mass(iterated):
    assert iterated.conservation_defect < 1e-10
    assert iterated.values[25].sum() == pytest.approx(1.0)


def test_iteration_stays_in_cone(iterated):
    outside = ~iterated.cone(25)
    assert np.all(iterated.values[25][outside] == 0.0)
    assert iterated.at(0, 0)[0, 0] == 1.0


def test_cone_reaching_edge_is_refused(operator):
    with pytest.raises(ConeTruncation):
        temporal_green_iterate(operator, 0, operator.J_dom)


def test_rows_cover_cone(iterated):
    rows = iterated.to_rows(ns=[3])
    assert [row["j"] for row in rows] == [-3, -2, -1, 0, 1, 2, 3]


def test_activation_of_excited_wave(sym, burgers_shock):
    constants = ConstantSet(j0=J0, constants=[
        WaveConstant(kind="E+", l=None, l_prime=0, value=1.0, provenance="residue"),
    ])
    assert constants.get("E+", 0).label == "C^E+[1]"
    with pytest.raises(KeyError):
        constants.get("R+", 0, 0)
    rows = activation_curve(constants, sym, burgers_shock, J0, ns=[1, 20, 400])
    fractions = [row["fraction"] for row in rows]
    assert fractions[0] < 1e-6
    assert fractions[1] == pytest.approx(0.5, abs=1e-12)
    assert fractions[2] == pytest.approx(1.0, abs=1e-9)
    assert rows[0]["arrival"] == pytest.approx(20.0)


@pytest.mark.slow
def test_excited_constant_matches_residue(table, sym, burgers_shock, operator, V):
    constants = estimate_constants(table, sym, burgers_shock)
    assert [c.kind for c in constants.constants] == ["E+"]
    residue = residue_field(operator, J0)
    assert residue_cross_check(constants, sym, burgers_shock, V, residue) < 1e-6


@pytest.mark.slow
def test_decomposition_remainder_shrinks(table, sym, burgers_shock, long_run, V):
    constants = estimate_constants(table, sym, burgers_shock, long_run, V)
    result = decompose(long_run, constants, sym, burgers_shock, V, ns=[30, 60, 120])
    assert result.step(120).ratio < result.step(30).ratio


@pytest.mark.slow
def test_long_time_limit_is_residue(operator, long_run):
    # j0 = 10 の波は n ≈ 20 で吸収され、その後は残差が急速に消える
    fit = residue_convergence(long_run, residue_field(operator, J0), ns=range(40, 121, 10))
    assert fit.exponent < -1.0


@pytest.mark.slow
def test_in_flight_decay_rate(table, sym, burgers_shock, operator, kernel, evans_data):
    constants = estimate_constants(table, sym, burgers_shock)
    j0 = in_flight_j0(constants, sym, burgers_shock, 80)
    assert j0 == 94
    tg = temporal_green_iterate(operator, j0, 80)
    V = extend_V(evans_data, kernel.values, operator.lattice)
    result = in_flight_decay(tg, constants, sym, burgers_shock, V, ns=range(20, 81, 5))
    assert result.predicted == -0.5
    assert result.fit.exponent == pytest.approx(-0.5, abs=0.1)
    assert result.within_band


def test_activation_window(sym, burgers_shock):
    constants = ConstantSet(j0=20, constants=[
        WaveConstant(kind="E+", l=None, l_prime=0, value=1.0, provenance="residue"),
    ])
    (window,) = activation_windows(constants, sym, burgers_shock, 20)
    # n + 3√n = 40 と n - 3√n = 40 の解は 25 と 64
    assert (window.n_lo, window.n_hi) == (25, 64)
    assert window.arrival == pytest.approx(40.0)
    assert window.before < 0.05 and window.after > 0.95
    assert window.within
    narrow = activation_windows(constants, sym, burgers_shock, 20, spread=0.5)[0]
    assert not narrow.within
