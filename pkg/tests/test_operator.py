import numpy as np
import pytest

from shockstab.errors import LengthMismatch
from shockstab.operator import (
    adjoint_apply,
    apply,
    constant_operator,
    eigen_scan,
    essential_spectrum_curves,
    linearization_check,
    overlap,
)
from shockstab.profile import profile_family


@pytest.fixture(scope="module")
def essential(sym):
    return essential_spectrum_curves(sym)


def test_operator_shape(operator):
    assert operator.n_cells == 401
    assert operator.matrix.shape == (401, 401)
    assert operator.blocks_at(10_000) == pytest.approx(operator.end_blocks("+"))


def test_constant_operator_preserves_constants(end):
    L = constant_operator(end, "+", 20)
    out = apply(L, np.ones((41, 1)))
    assert out[1:-1] == pytest.approx(np.ones((39, 1)))


def test_adjoint_identity(operator, rng):
    h = rng.standard_normal((401, 1)) + 1j * rng.standard_normal((401, 1))
    g = rng.standard_normal((401, 1)) + 1j * rng.standard_normal((401, 1))
    assert np.vdot(g, apply(operator, h)) == pytest.approx(np.vdot(adjoint_apply(operator, g), h))


def test_length_mismatch(operator):
    with pytest.raises(LengthMismatch):
        apply(operator, np.zeros(400))


def test_essential_spectrum_classification(essential):
    assert essential.classify(0.0) == "inner"
    assert essential.classify(2.0) == "outer"
    assert essential.classify(1.0) == "on_curve"
    assert essential.distance(1.5) > 0.4


def test_only_eigenvalue_outside_is_one(operator, essential):
    scan = eigen_scan(operator, essential)
    assert scan.engine == "dense"
    assert scan.h_spec
    assert len(scan.retained) == 1
    assert scan.retained[0].value == pytest.approx(1.0, abs=1e-6)


def test_kernel_vector(kernel, operator, burgers_shock):
    assert kernel.gap > 1e4
    V = kernel.values
    assert np.linalg.norm(V) == pytest.approx(1.0)
    assert np.max(np.abs(apply(operator, V) - V)) < 1e-9
    # 位相 l_I^{+T} V_0 は実非負
    anchor = burgers_shock.char_plus.l(0) @ V[operator.cell(0)]
    assert np.real(anchor) >= 0
    assert abs(np.imag(anchor)) < 1e-12
    assert kernel.tail_fits["+"].rate == pytest.approx(np.log(13 / 3), rel=0.1)


def test_kernel_follows_profile_family(kernel, mlf, burgers_shock, end):
    members = profile_family(mlf, burgers_shock, end, shifts=[0.0, 1e-4], J_dom=200)
    direction = (members[1].values - members[0].values) / 1e-4
    assert overlap(kernel.values, direction) > 1 - 1e-5


def test_overlap_of_centered_windows():
    V = np.arange(1.0, 6.0)[:, None]
    W = np.concatenate([[[0.0]], V, [[0.0]]])
    assert overlap(V, W) == pytest.approx(1.0)
    assert overlap(V, -V) == pytest.approx(1.0)


def test_linearization_is_second_order(operator, mlf, profile):
    check = linearization_check(operator, mlf, profile.values, profile.u_minus, profile.u_plus, seed=3)
    assert check.epsilons == [1e-4, 1e-5, 1e-6]
    assert check.order == pytest.approx(2.0, abs=0.2)
    assert check.within_band
    assert check.defects[0] > check.defects[1] > check.defects[2]


def test_linearization_check_sees_a_wrong_operator(operator, mlf, profile, end):
    # 端点状態の 𝓛^+ は衝撃波付近で線形化と食い違うので、誤差は ε の 1 次で残る
    wrong = constant_operator(end, "+", operator.J_dom)
    check = linearization_check(wrong, mlf, profile.values, profile.u_minus, profile.u_plus, seed=3)
    assert check.order == pytest.approx(1.0, abs=0.2)
    assert not check.within_band
