"""Gaussian perturbation of cluster representatives and a Renyi accountant.

The accountant tracks one Renyi-divergence term per aggregation round,
``rho(alpha) = alpha / (8 sigma^2)``, sums terms over rounds, and converts
the total to an (epsilon, delta) guarantee at a fixed order via
``epsilon = rho + ln(1/delta) / (alpha - 1)``. Calibration inverts that
chain at the order ``alpha = 1 + 8 ln(1/delta) / epsilon`` and returns the
smallest noise multiplier whose converted epsilon does not exceed the
target. Sensitivity of swapping one cluster member is bounded by twice
the cluster radius bound, and the per-coordinate noise scale is the
multiplier times that radius bound (doubled under the ``analysis``
convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import CalibrationError

NOISE_CONVENTIONS = ("algorithm1", "analysis")


@dataclass(frozen=True)
class PrivacyBudget:
    """A target guarantee together with the noise that certifies it."""

    epsilon: float
    delta: float
    rounds: int
    alpha: float
    rho_per_round: float
    sigma: float

    @classmethod
    def from_target(cls, epsilon: float, delta: float, rounds: int) -> "PrivacyBudget":
        sigma = calibrate_sigma(epsilon, delta, rounds)
        alpha = 1.0 + 8.0 * math.log(1.0 / delta) / epsilon
        return cls(
            epsilon=epsilon,
            delta=delta,
            rounds=rounds,
            alpha=alpha,
            rho_per_round=rdp_of_gaussian(sigma)(alpha),
            sigma=sigma,
        )

    @classmethod
    def from_sigma(cls, sigma: float, delta: float, rounds: int) -> "PrivacyBudget":
        epsilon, alpha = epsilon_for_sigma(sigma, delta, rounds)
        return cls(
            epsilon=epsilon,
            delta=delta,
            rounds=rounds,
            alpha=alpha,
            rho_per_round=rdp_of_gaussian(sigma)(alpha),
            sigma=sigma,
        )


@dataclass(frozen=True)
class NoiseDraw:
    """Seeded per-cluster noise: scale and generator seed."""

    seed: int
    stddev: float

    def __post_init__(self):
        if self.stddev < 0:
            raise ValueError(f"stddev must be >= 0, got {self.stddev}")


def sensitivity_bound(delta: float) -> float:
    """Worst-case aggregate shift from swapping one member of a cluster of radius ``delta``."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return 2.0 * delta


def noise_stddev(sigma: float, delta: float, convention: str = "algorithm1") -> float:
    """Per-coordinate noise scale for a multiplier ``sigma`` and radius bound ``delta``."""
    if convention not in NOISE_CONVENTIONS:
        raise ValueError(f"unknown noise convention {convention!r}")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    scale = sigma * delta
    return 2.0 * scale if convention == "analysis" else scale


def gaussian_perturb(w: np.ndarray, stddev: float, seed: int) -> np.ndarray:
    """Add seeded iid Gaussian noise to each coordinate; ``stddev == 0`` is an exact copy."""
    if stddev < 0:
        raise ValueError(f"stddev must be >= 0, got {stddev}")
    if stddev == 0.0:
        return w.copy()
    rng = np.random.default_rng(seed)
    return w + rng.normal(0.0, stddev, size=w.shape)


def rdp_of_gaussian(sigma: float) -> Callable[[float], float]:
    """Renyi curve of one noisy aggregation round: ``alpha -> alpha / (8 sigma^2)``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    denom = 8.0 * sigma * sigma

    def rho(alpha: float) -> float:
        if not alpha > 1:
            raise ValueError(f"alpha must be > 1, got {alpha}")
        return alpha / denom

    return rho


def compose_rdp(rhos: Iterable[float]) -> float:
    """Renyi guarantees at a common order add up across rounds."""
    values = list(rhos)
    if not values:
        raise ValueError("cannot compose an empty sequence of guarantees")
    if any(v < 0 for v in values):
        raise ValueError("negative Renyi terms are not meaningful")
    return float(sum(values))


def rdp_to_dp(rho: float, alpha: float, delta: float) -> float:
    """Convert a Renyi guarantee at order ``alpha`` to the epsilon of an (epsilon, delta) one."""
    if not alpha > 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    return rho + math.log(1.0 / delta) / (alpha - 1.0)


def calibrate_sigma(epsilon: float, delta: float, rounds: int) -> float:
    """Smallest noise multiplier certified for ``(epsilon, delta)`` over ``rounds`` rounds.

    Inverts the accountant at the fixed order ``alpha = 1 + 8 ln(1/delta) /
    epsilon``: with ``sigma^2 = rounds * alpha / (7 epsilon)`` the composed
    guarantee converts back to exactly ``epsilon``. The target must satisfy
    ``0 < epsilon < 8 ln(1/delta)`` so that the conversion overhead
    ``epsilon / 8`` leaves room for the composition term.
    """
    if not 0 < delta < 1:
        raise CalibrationError(f"delta must be in (0, 1), got {delta}")
    if rounds < 1:
        raise CalibrationError(f"rounds must be >= 1, got {rounds}")
    bound = 8.0 * math.log(1.0 / delta)
    if not 0 < epsilon < bound:
        raise CalibrationError(
            f"epsilon must lie strictly inside (0, {bound}) "
            f"(8 ln(1/delta) for delta={delta}), got {epsilon}"
        )
    alpha = 1.0 + 8.0 * math.log(1.0 / delta) / epsilon
    return math.sqrt(rounds * alpha / (7.0 * epsilon))


def epsilon_for_sigma(sigma: float, delta: float, rounds: int) -> tuple[float, float]:
    """Best epsilon a given multiplier certifies after ``rounds`` rounds, with its order.

    Minimizes ``rounds * alpha / (8 sigma^2) + ln(1/delta) / (alpha - 1)``
    over orders ``alpha > 1``; the optimum is at
    ``alpha = 1 + sqrt(8 sigma^2 ln(1/delta) / rounds)``.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    log_term = math.log(1.0 / delta)
    alpha = 1.0 + math.sqrt(8.0 * sigma * sigma * log_term / rounds)
    rho_total = compose_rdp([rdp_of_gaussian(sigma)(alpha)] * rounds)
    return rdp_to_dp(rho_total, alpha, delta), alpha
