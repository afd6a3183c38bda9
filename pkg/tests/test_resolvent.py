import numpy as np
import pytest

from shockstab.errors import NearSingularResolvent
from shockstab.operator import constant_operator, overlap
from shockstab.resolvent import (
    build_companion,
    delta_coefficients,
    evans_circle,
    extend_V,
    fourier_green,
    green_from_basis,
    mode_basis,
    residue_field,
    scattering_coefficients,
    spatial_green,
    theta_product_defect,
)
from shockstab.resolvent.evans import theta_product_ratio
from shockstab.resolvent.scattering import cofactor_matrix, contour_residue, richardson_limit

Z_NEAR = 1.03


def test_companion_at_one(operator):
    companion = build_companion(operator, 1.0)
    assert np.trace(companion.M_plus) == pytest.approx(16 / 13)
    assert np.linalg.det(companion.M_plus) == pytest.approx(3 / 13)
    assert np.sort(np.abs(np.linalg.eigvals(companion.M_minus))) == pytest.approx([1.0, 13 / 3])
    assert companion.at(10_000) is companion.M_plus


def test_dual_basis_identity(operator, curves, burgers_shock):
    basis = mode_basis(build_companion(operator, 1.0), curves, burgers_shock, 1.0)
    # 中心モード m = 1: λ_q^+ ζ′ = 0.65 · 2
    assert basis.plus.L[1, 0] == pytest.approx(1.3)
    assert max(basis.plus.x1_defect, basis.minus.x1_defect) < 1e-10
    assert basis.plus.L @ basis.plus.R.T == pytest.approx(np.eye(2))


def test_jost_solutions_satisfy_recursion(factory):
    _, basis = factory.at(Z_NEAR)
    for side in ("+", "-"):
        solved = basis.side(side)
        assert solved.report["recursion_defect"] < 1e-10
        assert solved.j_lo < 0 < solved.j_hi


def test_evans_function_has_simple_zero_at_one(factory, evans_data):
    circle = evans_circle(factory, evans_data.dp, radius=0.05, n_points=32)
    assert circle.winding == pytest.approx(1.0, abs=0.05)
    scale = max(abs(s.normalized) for s in circle.samples)
    assert abs(evans_data.ev_at_one) / scale < 1e-8
    assert abs(circle.derivative) > 0


def test_theta_families(permuted_factory, evans_data):
    # z = 1 では D^Φ も Ev も 0 なので、1 の周りの円周上で比べる
    assert theta_product_defect(permuted_factory, evans_data) < 1e-9
    assert theta_product_defect(permuted_factory, evans_data, radius=0.01, n_points=6) < 1e-9
    ratio = theta_product_ratio(permuted_factory(1.02j + 1.0), evans_data)
    assert ratio == pytest.approx(1.0, abs=1e-9)
    assert evans_data.sigma[1] > 1e4 * evans_data.sigma[0]
    assert abs(evans_data.theta_s[0]) > 0 and abs(evans_data.theta_u[-1]) > 0


def test_phi_matches_kernel(evans_data, kernel, operator):
    V = extend_V(evans_data, kernel.values, operator.lattice)
    lo, hi = evans_data.j_lo, evans_data.j_hi
    window = V[lo + operator.J_dom: hi + operator.J_dom + 1]
    assert np.max(np.abs(window - evans_data.V_phi)) < 1e-6 * np.max(np.abs(window))


@pytest.mark.parametrize("j0", [10, 0])
def test_basis_expansion_matches_direct_solve(operator, permuted_factory, evans_data, j0):
    direct = spatial_green(operator, Z_NEAR, j0)
    companion, basis = permuted_factory.at(Z_NEAR)
    js = range(max(basis.minus.j_lo, -60), min(basis.plus.j_hi, 60) + 1)
    expansion = green_from_basis(basis, evans_data, companion, j0, np.eye(1)[0], js)
    reference = np.array([direct.at(j)[:, 0] for j in js])
    assert np.max(np.abs(expansion.values - reference)) < 1e-7 * np.max(np.abs(reference))


def test_delta_coefficients_approach_far_limit(permuted_factory):
    companion, basis = permuted_factory.at(Z_NEAR)
    delta = delta_coefficients(basis, companion, 15, np.eye(1)[0])
    assert delta.deviation < 1e-6
    assert delta.condition < 1e12


def test_far_field_decays(operator):
    far = spatial_green(operator, 1.5, 0)
    assert far.solve_residual < 1e-12
    for fit in far.fits.values():
        assert fit.rate > 0.1
        assert fit.r_squared > 0.98


@pytest.mark.parametrize("side", ["+", "-"])
def test_constant_coefficient_green_matches_fourier(end, side):
    G = spatial_green(constant_operator(end, side, 200), 1.5, 0)
    for j in range(-10, 11):
        assert np.max(np.abs(G.at(j) - fourier_green(end, side, 1.5, j))) < 1e-10


def test_resolvent_at_one_is_singular(operator):
    with pytest.raises(NearSingularResolvent):
        spatial_green(operator, 1.0, 0)


def test_residue_is_rank_one_along_kernel(operator, kernel):
    residue = residue_field(operator, 10)
    assert residue.laurent_ratio < 1e-8
    assert residue.radius_gap < 1e-4
    assert overlap(kernel.values, residue.V) > 1 - 1e-6


def test_cofactor_matrix():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert cofactor_matrix(M) == pytest.approx(np.array([[4.0, -3.0], [-2.0, 1.0]]))
    assert cofactor_matrix(np.array([[5.0]])) == pytest.approx(np.array([[1.0]]))


def test_contour_and_richardson_helpers():
    assert contour_residue(lambda z: 3.0 / (z - 1.0)) == pytest.approx(3.0)
    assert contour_residue(lambda z: 2.0 / (z - 1.0) ** 2 + 1.0 / (z - 1.0), order=-2) == pytest.approx(2.0)
    limit, coarse = richardson_limit(lambda t: np.array([1.0 + t + t ** 2]))
    assert limit == pytest.approx([1.0])
    assert coarse == pytest.approx([1.0])


@pytest.mark.slow
def test_scattering_table(permuted_factory, evans_data):
    table = scattering_coefficients(permuted_factory, evans_data, z_check=Z_NEAR)
    assert table.antisymmetry < 1e-6
    assert table.cofactor_identity < 1e-6
    assert table.sides["+"].pole_pairs()
    assert table.sides["+"].residue_gap < 1e-4


def test_factory_reuses_solved_points(factory, evans_data):
    _, first = factory.at(Z_NEAR)
    _, again = factory.at(Z_NEAR)
    assert again is first
    permuted = factory.with_permutation(evans_data.perm_plus, evans_data.perm_minus)
    assert permuted.cached_points == factory.cached_points
    assert np.allclose(permuted(Z_NEAR).plus.zeta, first.plus.zeta[evans_data.perm_plus])
    assert factory.with_settings(J_start=10).cached_points == 0
