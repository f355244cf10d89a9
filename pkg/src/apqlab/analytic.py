"""Expected waits for static and accumulating priority, heavy-traffic limits,
and the joining equilibrium of an unobservable M/M/1 queue.

Service is exponential with mean 1 throughout, so the mean residual work seen
by an arrival equals the load. ``delay`` is time in the waiting room,
``sojourn`` adds the unit mean service.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SystemSpec, ValidationError, require_unit_service, validate_system


class UnstableSystemError(ValueError):
    pass


@dataclass(frozen=True)
class WaitReport:
    arrival_rates: np.ndarray
    expected_delay: np.ndarray
    expected_sojourn: np.ndarray
    expected_queue: np.ndarray

    @classmethod
    def from_delays(cls, arrival_rates, delays) -> "WaitReport":
        lam = np.asarray(arrival_rates, dtype=float)
        delay = np.asarray(delays, dtype=float)
        with np.errstate(invalid="ignore"):
            queue = np.where(lam == 0, 0.0, lam * delay)
        return cls(lam, delay, delay + 1.0, queue)


def _check(system: SystemSpec) -> None:
    errors = validate_system(system)
    if errors:
        raise ValidationError(errors)
    require_unit_service(system)


def cobham_delays(arrival_rates: Sequence[float]) -> np.ndarray:
    """Non-preemptive static-priority delays, class 1 first.

    Classes whose cumulative load reaches 1 get ``inf``. The numerator is the
    total load even when it exceeds 1, as in the printed formula.
    """
    lam = [float(x) for x in arrival_rates]
    rho = sum(lam)
    out = np.empty(len(lam))
    sigma_prev = 0.0
    for i, l in enumerate(lam):
        sigma = sigma_prev + l
        if sigma == 1.0:
            raise ValueError(f"cumulative load of classes 1..{i + 1} is exactly 1")
        if sigma_prev >= 1.0 or sigma > 1.0:
            out[i] = math.inf
        else:
            out[i] = rho / ((1.0 - sigma_prev) * (1.0 - sigma))
        sigma_prev = sigma
    return out


def sp_expected_waits(system: SystemSpec) -> WaitReport:
    _check(system)
    return WaitReport.from_delays(system.arrival_rates, cobham_delays(system.arrival_rates))


def kleinrock_delays(arrival_rates: Sequence[float], rates: Sequence[float]) -> np.ndarray:
    """Accumulating-priority delays by backward recursion from the lowest class.

    ``rates`` need not be strictly decreasing here (scaled policies and equal
    rates are fine); only stability is required.
    """
    lam = [float(x) for x in arrival_rates]
    b = [float(x) for x in rates]
    rho = sum(lam)
    if rho >= 1.0:
        raise UnstableSystemError(f"unstable: Kleinrock recursion undefined for load {rho} >= 1")
    k = len(lam)
    head = rho / (1.0 - rho)
    w = [0.0] * k
    for i in range(k - 1, -1, -1):
        num = head - sum(lam[j] * (1.0 - b[j] / b[i]) * w[j] for j in range(i + 1, k))
        den = 1.0 - sum(lam[j] * (1.0 - b[i] / b[j]) for j in range(i + 1))
        w[i] = num / den
    return np.array(w)


def ap_expected_waits(system: SystemSpec) -> WaitReport:
    _check(system)
    return WaitReport.from_delays(system.arrival_rates,
                                  kleinrock_delays(system.arrival_rates, system.accumulation_rates))


def _limit_inputs(limit_rates, rates) -> tuple[np.ndarray, np.ndarray]:
    lam = np.asarray(limit_rates, dtype=float)
    b = np.asarray(rates, dtype=float)
    if lam.shape != b.shape or lam.ndim != 1 or lam.size == 0:
        raise ValueError("limit rates and accumulation rates must be equal-length non-empty vectors")
    if abs(lam.sum() - 1.0) > 1e-9:
        raise ValueError(f"limit arrival rates must sum to 1 (got {lam.sum()!r})")
    if np.any(lam < 0) or np.any(b <= 0):
        raise ValueError("rates must be nonnegative and accumulation rates positive")
    if np.any(np.diff(b) >= 0):
        raise ValueError("accumulation rates not strictly decreasing")
    return lam, b


def ap_heavy_traffic_limits(limit_rates, rates) -> np.ndarray:
    """Limit of ``epsilon * W_i`` as the load rises to 1 under fixed rates."""
    lam, b = _limit_inputs(limit_rates, rates)
    return (1.0 / b) / np.sum(lam / b)


def ap_queue_fractions(limit_rates, rates) -> np.ndarray:
    """Share of the total queue held by each class in the heavy-traffic limit."""
    lam, b = _limit_inputs(limit_rates, rates)
    w = lam / b
    return w / w.sum()


def total_queue_heavy_traffic(epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return (1.0 - epsilon) / epsilon


def heavy_traffic_limit_rates(arrival_rates: Sequence[float]) -> list[float]:
    """Limit rates when the lowest class absorbs the gap to full load."""
    lam = [float(x) for x in arrival_rates]
    return lam[:-1] + [1.0 - sum(lam[:-1])]


@dataclass(frozen=True)
class EquilibriumResult:
    join_probability: float
    effective_rate: float
    equilibrium_wait: float
    # True when nobody joins and equilibrium_wait is the wait a lone joiner would see.
    counterfactual: bool = False


def joining_equilibrium(lam: float, mu: float, cost: float, reward: float) -> EquilibriumResult:
    """Symmetric Nash joining probability for an unobservable FCFS M/M/1 queue.

    A customer pays ``cost`` per unit time in the system and values service
    at ``reward``. Boundary ties resolve to the interior solution.
    """
    for name, v in (("lambda", lam), ("mu", mu), ("C", cost), ("R", reward)):
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be a finite number > 0")
    if mu > lam and reward > cost / (mu - lam):
        return EquilibriumResult(1.0, lam, 1.0 / (mu - lam))
    if reward < cost / mu:
        return EquilibriumResult(0.0, 0.0, 1.0 / mu, counterfactual=True)
    p = (mu - cost / reward) / lam
    p = min(max(p, 0.0), 1.0)
    return EquilibriumResult(p, p * lam, reward / cost)
