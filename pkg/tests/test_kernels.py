import numpy as np
import pytest
from scipy import integrate, special

from shockstab.errors import IndexConstraintViolation, NonpositiveRealPart
from shockstab.kernels import (
    E_kernel,
    H_kernel,
    KernelParams,
    admissible_templates,
    kernel_bound_check,
    kernel_samples,
    template_params,
    wave_template,
)

GAUSS = KernelParams(mu=1, beta=1.0)


def test_gaussian_values():
    assert H_kernel(KernelParams(mu=1, beta=0.275), 0.0) == pytest.approx(0.537707, abs=1e-6)
    assert H_kernel(GAUSS, 2.0) == pytest.approx(0.103777, abs=1e-6)
    assert E_kernel(GAUSS, 2.0) == pytest.approx(0.5 * special.erfc(1.0), abs=1e-12)
    assert E_kernel(GAUSS, 2.0) == pytest.approx(0.0786496, abs=1e-7)


@pytest.mark.parametrize("beta", [0.275, 1.0, 0.3 + 0.2j])
def test_closed_form_matches_quadrature(beta):
    params = KernelParams(mu=1, beta=beta)
    x = np.linspace(-10.0, 10.0, 81)
    assert np.max(np.abs(H_kernel(params, x) - H_kernel(params, x, force_quadrature=True))) < 1e-10


@pytest.mark.parametrize("mu", [1, 2, 3])
def test_kernel_has_unit_mass(mu):
    params = KernelParams(mu=mu, beta=0.5)
    value, _ = integrate.quad(lambda t: float(np.real(H_kernel(params, t))), 0.0, 60.0,
                              epsabs=1e-13, epsrel=1e-12, limit=400)
    assert 2.0 * value == pytest.approx(1.0, abs=1e-9)


def test_kernel_is_even():
    params = KernelParams(mu=2, beta=0.7)
    x = np.linspace(0.0, 8.0, 17)
    assert H_kernel(params, -x) == pytest.approx(H_kernel(params, x))


def test_error_function_symmetry():
    params = KernelParams(mu=2, beta=1.0)
    assert E_kernel(params, 0.0) == 0.5
    assert E_kernel(params, -1.5) == pytest.approx(1.0 - E_kernel(params, 1.5), abs=1e-12)
    assert E_kernel(GAUSS, -50.0) == pytest.approx(1.0, abs=1e-12)
    assert E_kernel(GAUSS, 50.0) == pytest.approx(0.0, abs=1e-12)


def test_parameter_validation():
    with pytest.raises(ValueError):
        KernelParams(mu=0, beta=1.0)
    with pytest.raises(NonpositiveRealPart):
        KernelParams(mu=1, beta=-0.1 + 1j)
    assert KernelParams(mu=2, beta=1.0).tail_exponent == pytest.approx(4 / 3)


def test_gaussian_tail_bound_is_exact():
    report = kernel_bound_check(KernelParams(mu=1, beta=0.275))
    assert report.exponent == pytest.approx(2.0, rel=1e-4)
    assert report.rate == pytest.approx(1 / (4 * 0.275), rel=1e-4)
    assert report.e_tail_ok


def test_higher_order_tail_exponent():
    report = kernel_bound_check(KernelParams(mu=2, beta=1.0))
    assert report.exponent_error < 0.1
    assert report.rate > 0


def test_kernel_samples_rows():
    rows = kernel_samples(GAUSS, np.array([-1.0, 0.0, 1.0]))
    assert [row["x"] for row in rows] == [-1.0, 0.0, 1.0]
    assert rows[1]["E"] == pytest.approx(0.5)
    assert rows[0]["H"] == pytest.approx(rows[2]["H"])


def test_scalar_shock_templates(sym, burgers_shock):
    assert admissible_templates(1, 1, 10) == [("S+", 0, 0), ("E+", None, 0)]
    assert admissible_templates(1, 1, -10) == [("S-", 0, 0), ("E-", None, 0)]
    with pytest.raises(IndexConstraintViolation):
        template_params("R+", sym, burgers_shock, l=0, l_prime=0)


def test_s_template_at_characteristic_center(sym, burgers_shock):
    tp = template_params("S+", sym, burgers_shock, l=0)
    assert tp.label == "S+[1]"
    # n α^+ + j0 - j = 0
    value = wave_template(tp, n=100, j0=100, j=[50])
    assert value[0, 0, 0] == pytest.approx(0.053771, abs=1e-6)
    # 追跡区間 [n/2, 2n] の外はゼロ
    assert wave_template(tp, n=100, j0=100, j=[99])[0, 0, 0] == 0.0


def test_e_template_saturates(sym, burgers_shock):
    tp = template_params("E+", sym, burgers_shock, l_prime=0)
    assert wave_template(tp, n=10_000, j0=0) == pytest.approx([1.0], abs=1e-12)
    assert wave_template(tp, n=1, j0=100)[0] < 1e-12
    with pytest.raises(ValueError):
        wave_template(tp, n=0, j0=0)
