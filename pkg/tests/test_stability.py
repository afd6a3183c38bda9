import numpy as np
import pytest

from shockstab.errors import ConeTruncation
from shockstab.stability import (
    delta_generator,
    distance_to_line,
    make_perturbation,
    orbital_decay,
    parse_norm,
    predicted_exponent,
    random_generator,
    rate_table,
)


@pytest.mark.parametrize(
    ("mu", "r1", "r2", "expected"),
    [
        (1, 1.0, np.inf, -0.5),
        (1, 2.0, np.inf, -0.25),
        (1, 1.0, 2.0, -0.25),
        (2, 1.0, np.inf, -0.25),
        (1, 2.0, 2.0, 0.0),
    ],
)
def test_predicted_exponent(mu, r1, r2, expected):
    assert predicted_exponent(mu, r1, r2) == pytest.approx(expected)


def test_parse_norm():
    assert parse_norm("inf") == np.inf
    assert parse_norm("1") == 1.0
    assert parse_norm(2) == 2.0
    with pytest.raises(ValueError):
        parse_norm("3")


def test_distance_in_l2_is_orthogonal_projection():
    V = np.array([1.0, 1.0, 0.0])
    w = np.array([1.0, -1.0, 2.0])
    distance, c = distance_to_line(3.0 * V + w, V, 2.0)
    assert c == pytest.approx(3.0)
    assert distance == pytest.approx(np.linalg.norm(w))


def test_distance_in_sup_and_l1_norms():
    u = np.array([1.0, 0.0, 0.0])
    V = np.ones(3)
    distance, c = distance_to_line(u, V, np.inf)
    assert c.real == pytest.approx(0.5, abs=1e-6)
    assert distance == pytest.approx(0.5, abs=1e-6)
    distance, _ = distance_to_line(u, V, 1.0)
    assert distance == pytest.approx(1.0, abs=1e-6)


def test_generators(operator):
    delta = delta_generator(operator, center=5)
    assert delta.support == (5, 5)
    assert delta.values.sum() == 1.0
    first = random_generator(operator, seed=7)
    second = make_perturbation(operator, "random", seed=7)
    assert np.array_equal(first.values, second.values)
    assert first.support == (-10, 10)
    assert make_perturbation(operator, "box", width=4).values.sum() == 5.0
    with pytest.raises(KeyError):
        make_perturbation(operator, "gaussian")


def test_cone_and_norm_order_are_checked(operator, kernel):
    h = delta_generator(operator)
    with pytest.raises(ConeTruncation):
        orbital_decay(operator, kernel.values, h, 1.0, np.inf, N_max=operator.J_dom)
    with pytest.raises(ValueError):
        orbital_decay(operator, kernel.values, h, np.inf, 1.0, N_max=10)


def test_delta_perturbation_decays_towards_kernel_line(operator, kernel):
    experiment = orbital_decay(operator, kernel.values, delta_generator(operator, center=5), 1.0, np.inf, N_max=120)
    assert experiment.predicted == pytest.approx(-0.5)
    assert experiment.fit.exponent < 0
    assert experiment.bound_holds
    assert len(experiment.to_rows()) == 120
    assert experiment.window == (15, 120)


def test_rate_table_in_l2(operator, kernel):
    table = rate_table(operator, kernel.values, [random_generator(operator)], [(2.0, 2.0)], N_max=80)
    experiment = table.experiments[0]
    assert experiment.predicted == 0.0
    assert experiment.boundedness() < 10
    assert not table.failures


def test_perturbation_away_from_the_shock(operator, kernel):
    # 上流側 j = -40 に置いた質量は特性速度 1/2 で衝撃波へ運ばれ、直線方向へ吸収される
    h = make_perturbation(operator, "delta", center=-40)
    assert h.support == (-40, -40)
    experiment = orbital_decay(operator, kernel.values, h, 1.0, np.inf, N_max=140)
    assert experiment.fit.exponent < 0
    assert abs(experiment.coefficients[-1]) > 10 * abs(experiment.coefficients[0])
    assert experiment.distances[-1] < experiment.distances[0]
