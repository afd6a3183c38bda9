"""
Burgers 方程式 + 修正 Lax-Friedrichs (ν=0.5, D=0.8, u^± = ∓1) の共通 fixture。

プロファイルと線形化作用素は計算に時間がかかるので session スコープで共有する。
"""

import numpy as np
import pytest

from config.laws import get_law_builder
from shockstab.conservation_model import classify_lax_shock
from shockstab.operator import build_operator, kernel_vector_at_one
from shockstab.profile import solve_profile, with_tail_fits
from shockstab.resolvent import JostFactory, theta_families_and_V0
from shockstab.scheme import linearize_along_profile, linearize_at_end_states, modified_lax_friedrichs
from shockstab.symbol import build_symbol_data, track_eigenvalue_curves

NU = 0.5
D = 0.8
J_DOM = 200


@pytest.fixture(scope="session")
def burgers():
    build_law, build_shock = get_law_builder("burgers")
    law = build_law({})
    u_minus, u_plus = build_shock({"u_minus": 1.0, "u_plus": -1.0})
    return law, classify_lax_shock(law, u_minus, u_plus)


@pytest.fixture(scope="session")
def burgers_law(burgers):
    return burgers[0]


@pytest.fixture(scope="session")
def burgers_shock(burgers):
    return burgers[1]


@pytest.fixture(scope="session")
def mlf(burgers_law):
    return modified_lax_friedrichs(burgers_law, nu=NU, D=D)


@pytest.fixture(scope="session")
def end(mlf, burgers_shock):
    return linearize_at_end_states(mlf, burgers_shock)


@pytest.fixture(scope="session")
def sym(mlf, burgers_shock, end):
    eigenvalues = {"+": burgers_shock.char_plus.eigenvalues, "-": burgers_shock.char_minus.eigenvalues}
    return build_symbol_data(end.diagonal, mlf.p, mlf.q, mlf.nu, burgers_shock.index_I, eigenvalues)


@pytest.fixture(scope="session")
def curves(sym):
    return track_eigenvalue_curves(sym, disc_radius=0.2)


@pytest.fixture(scope="session")
def profile(mlf, burgers_shock, end):
    return with_tail_fits(solve_profile(mlf, burgers_shock, end, J_dom=J_DOM))


@pytest.fixture(scope="session")
def operator(mlf, profile, end):
    return build_operator(linearize_along_profile(mlf, profile, end))


@pytest.fixture(scope="session")
def kernel(operator, burgers_shock):
    return kernel_vector_at_one(operator, burgers_shock.char_plus.l(burgers_shock.index_I - 1))


@pytest.fixture(scope="session")
def factory(operator, curves, burgers_shock):
    return JostFactory(L=operator, curves=curves, shock=burgers_shock)


@pytest.fixture(scope="session")
def evans_data(factory, curves):
    _, basis = factory.at(1.0)
    return theta_families_and_V0(basis, curves)


@pytest.fixture(scope="session")
def permuted_factory(factory, evans_data):
    return factory.with_permutation(evans_data.perm_plus, evans_data.perm_minus)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
