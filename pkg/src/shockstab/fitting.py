"""減衰率の回帰ヘルパー。"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExponentialFit:
    """|y| ≈ C e^{-c x} の回帰結果。rate=inf は減衰対象がゼロ列だったことを示す。"""

    rate: float
    log_constant: float
    r_squared: float
    n_points: int

    @property
    def constant(self) -> float:
        return float(np.exp(self.log_constant))

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "constant": self.constant if np.isfinite(self.log_constant) else None,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
        }


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    log_constant: float
    r_squared: float
    stderr: float
    n_points: int

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "log_constant": self.log_constant,
            "r_squared": self.r_squared,
            "stderr": self.stderr,
            "n_points": self.n_points,
        }


ZERO_TAIL = ExponentialFit(rate=float("inf"), log_constant=float("-inf"), r_squared=float("nan"), n_points=0)


def fit_exponential_decay(
    distance: np.ndarray,
    magnitude: np.ndarray,
    floor: float = 1e-14,
    min_points: int = 3,
) -> Optional[ExponentialFit]:
    """
    log|y| を距離に対して線形回帰し、減衰率 c を返す。

    Parameters
    ----------
    distance: np.ndarray
        距離 (|j| や |j - j0|)
    magnitude: np.ndarray
        ノルム列
    floor: float
        これ未満の値は丸め誤差とみなし回帰から除外する
    min_points: int
        回帰に必要な最小点数

    Returns
    -------
    Optional[ExponentialFit]
        点数不足の場合は None
    """

    distance = np.asarray(distance, dtype=float)
    magnitude = np.abs(np.asarray(magnitude))
    if magnitude.size and np.max(magnitude) == 0.0:
        return ZERO_TAIL
    mask = magnitude > floor
    if np.count_nonzero(mask) < min_points:
        return None
    x = distance[mask]
    y = np.log(magnitude[mask])
    result = stats.linregress(x, y)
    return ExponentialFit(
        rate=float(-result.slope),
        log_constant=float(result.intercept),
        r_squared=float(result.rvalue ** 2),
        n_points=int(mask.sum()),
    )


def fit_power_law(n: np.ndarray, values: np.ndarray) -> PowerLawFit:
    n = np.asarray(n, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = values > 0
    result = stats.linregress(np.log(n[mask]), np.log(values[mask]))
    return PowerLawFit(
        exponent=float(result.slope),
        log_constant=float(result.intercept),
        r_squared=float(result.rvalue ** 2),
        stderr=float(result.stderr),
        n_points=int(mask.sum()),
    )
