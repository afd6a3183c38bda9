"""
多項式流束による任意の保存則。

各成分 f_i(u) を単項式の和 Σ_t c_t Π_k u_k^{e_{t,k}} で与える:

    [law.params]
    components = [
        [{coef = 0.5, powers = [2]}],
    ]
"""

from typing import Any, List, Mapping, Sequence, Tuple

import numpy as np

from shockstab.conservation_model import ConservationLaw

Term = Tuple[float, np.ndarray]


def _parse_terms(components: Sequence[Sequence[Mapping[str, Any]]]) -> List[List[Term]]:
    d = len(components)
    parsed: List[List[Term]] = []
    for index, component in enumerate(components):
        terms = []
        for term in component:
            powers = np.asarray(term["powers"], dtype=int)
            if powers.shape != (d,) or np.any(powers < 0):
                raise ValueError(f"component {index}: powers must be {d} nonnegative integers, got {term['powers']}")
            terms.append((float(term["coef"]), powers))
        parsed.append(terms)
    return parsed


def _monomial(u: np.ndarray, powers: np.ndarray) -> np.ndarray:
    return np.prod(u ** powers, axis=-1)


def build_law(params: Mapping[str, Any]) -> ConservationLaw:
    terms = _parse_terms(params["components"])
    d = len(terms)

    def flux(u: np.ndarray) -> np.ndarray:
        return np.stack([sum(c * _monomial(u, e) for c, e in component) for component in terms], axis=-1)

    def jacobian(u: np.ndarray) -> np.ndarray:
        rows = []
        for component in terms:
            row = []
            for k in range(d):
                entry = np.zeros(u.shape[:-1])
                for c, e in component:
                    if e[k] == 0:
                        continue
                    lowered = e.copy()
                    lowered[k] -= 1
                    entry = entry + c * e[k] * _monomial(u, lowered)
                row.append(entry)
            rows.append(np.stack(row, axis=-1))
        return np.stack(rows, axis=-2)

    return ConservationLaw(name=str(params.get("name", "polynomial")), d=d, flux=flux, jacobian=jacobian)


def build_shock(params: Mapping[str, Any]) -> Tuple[np.ndarray, np.ndarray]:
    return np.asarray(params["u_minus"], dtype=float), np.asarray(params["u_plus"], dtype=float)
