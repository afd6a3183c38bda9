import numpy as np
import pytest

from config.laws import get_law_builder
from shockstab.conservation_model import classify_lax_shock
from shockstab.errors import NotDissipative, OutsideValidityRadius, ZeroKappa
from shockstab.scheme import linearize_at_end_states, modified_lax_friedrichs
from shockstab.symbol import (
    amplification_symbol,
    build_symbol_data,
    central_index,
    central_log_curve,
    check_dissipativity,
    index_sets,
    kappa_roots,
    log_curve_model,
    root_table,
    track_eigenvalue_curves,
)


def test_amplification_symbol_values(sym):
    assert amplification_symbol(sym, "+", 0, 1j) == pytest.approx(0.2 + 0.5j)
    assert amplification_symbol(sym, "+", 0, 1.0) == pytest.approx(1.0)
    with pytest.raises(ZeroKappa):
        amplification_symbol(sym, "+", 0, 0.0)


def test_diffusivity_parameters(sym):
    assert sym.mu == 1
    assert sym.alpha["+"] == pytest.approx([-0.5])
    assert sym.alpha["-"] == pytest.approx([0.5])
    assert sym.beta["+"][0] == pytest.approx(0.275)
    assert sym.beta["-"][0] == pytest.approx(0.275)


def test_unit_circle_is_dissipative(sym):
    assert check_dissipativity(sym.lam, sym.p) < 1.0
    # D = 1 の Lax-Friedrichs で ν λ = 0 だと κ = -1 で |F| = 1
    lam = {"+": np.array([[0.5, 0.0, 0.5]]), "-": np.array([[0.5, 0.0, 0.5]])}
    with pytest.raises(NotDissipative):
        check_dissipativity(lam, 1)


def test_roots_at_one(sym):
    plus = kappa_roots(sym, "+", 0, 1.0)
    minus = kappa_roots(sym, "-", 0, 1.0)
    assert plus.roots == pytest.approx([3 / 13, 1.0])
    assert minus.roots == pytest.approx([1.0, 13 / 3])
    assert not plus.near_multiple


def test_index_sets_for_one_shock(sym):
    plus = index_sets(1, 1, 1, 1, "+")
    minus = index_sets(1, 1, 1, 1, "-")
    assert (list(plus.ss), list(plus.cs), list(plus.cu), list(plus.su)) == ([0], [], [1], [])
    assert (list(minus.ss), list(minus.cs), list(minus.cu), list(minus.su)) == ([], [0], [], [1])
    assert central_index(sym, "+", 0) == 1
    assert central_index(sym, "-", 0) == 0


def test_curves_pass_through_reference_roots(curves):
    assert curves.zeta("+", 1, 1.0) == pytest.approx(1.0)
    assert curves.zeta("+", 0, 1.0) == pytest.approx(3 / 13)
    assert curves.zeta("-", 1, 1.0) == pytest.approx(13 / 3)
    assert curves.c_star > 0


def test_curves_solve_symbol_equation(curves, sym):
    z = 1.0 + 0.5j * curves.radius
    for side in ("+", "-"):
        for zeta in curves.zeta_all(side, z):
            assert amplification_symbol(sym, side, 0, zeta) == pytest.approx(z, abs=1e-10)


def test_central_curve_splits_from_unit_circle(curves):
    # z > 1 で中心曲線は単位円の外 (+ 側、α < 0) と内 (- 側、α > 0) に分かれる
    assert abs(curves.zeta("+", 1, 1.05)) > 1.0
    assert abs(curves.zeta("-", 0, 1.05)) < 1.0


def test_central_log_curve_matches_model(curves, sym):
    errors = []
    for tau in (0.01, 0.005):
        errors.append(abs(central_log_curve(curves, "+", 0, tau) - log_curve_model(sym, "+", 0, tau)))
    assert errors[0] < 1e-5
    # 3 次の誤差
    assert errors[1] < errors[0] / 6


def test_log_curve_model_reference_coefficients(sym):
    assert log_curve_model(sym, "+", 0, 0.1) == pytest.approx(2 * 0.1 - 2.2 * 0.01)


def test_curves_refuse_points_outside_radius(curves):
    with pytest.raises(OutsideValidityRadius):
        curves.zeta_all("+", 1.0 + 2 * curves.radius)


def test_root_table_counts_split(sym):
    rows = root_table(sym, [1.5])
    plus = next(row for row in rows if row["side"] == "+")
    minus = next(row for row in rows if row["side"] == "-")
    assert (plus["inside"], plus["outside"]) == (1, 1)
    assert (minus["inside"], minus["outside"]) == (1, 1)


@pytest.fixture(scope="module")
def weak_shallow_water_sym():
    build_law, build_shock = get_law_builder("shallow-water")
    law = build_law({"g": 1.0})
    shock = classify_lax_shock(law, *build_shock({"g": 1.0, "h_minus": 1.0, "strength": 0.1}))
    scheme = modified_lax_friedrichs(law, nu=0.4, D=0.9)
    end = linearize_at_end_states(scheme, shock)
    eigenvalues = {"+": shock.char_plus.eigenvalues, "-": shock.char_minus.eigenvalues}
    return build_symbol_data(end.diagonal, scheme.p, scheme.q, scheme.nu, shock.index_I, eigenvalues)


def test_reference_disc_halves_once(curves):
    # |z - 1| = 0.175 に重根があり 0.2 の円板では帯不等式が破れる
    assert curves.radius == pytest.approx(0.1)
    assert curves.band_report["attempts"] == 2


def test_weak_shock_disc_is_sized_from_band_gap(weak_shallow_water_sym):
    sym = weak_shallow_water_sym
    # 衝撃波族の |α| は約 0.03、もう一方の根は 1 から約 0.065 しか離れていない
    assert min(abs(a) for side in ("+", "-") for a in sym.alpha[side]) < 0.04
    curves = track_eigenvalue_curves(sym, disc_radius=0.2)
    assert 1e-5 < curves.radius < 1e-3
    assert curves.band_report["c_central"] < curves.band_report["c_upper"]
    z = 1.0 + 0.5j * curves.radius
    assert np.all(np.isfinite(curves.zeta_all("+", z)))
