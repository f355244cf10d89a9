"""Discrete-event simulation of the multi-class single-server priority queue.

Arrivals are Poisson per class, service is exponential with mean 1 and never
preempted. On every service completion the server picks the next customer
according to the policy active at that instant.

Within a class every policy serves in arrival order, so each class is a FIFO
and a selection only compares the N+1 queue heads. The event loop itself is
compiled with numba; stream generation and output analysis stay in numpy.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import stats as sps

from .core import Accumulating, ScenarioSpec, ensure_valid, require_unit_service

N_BATCHES = 32
WARMUP_FRACTION = 0.1
MAX_EXPECTED_EVENTS = 1e9
MAX_SAMPLES = 10**8


class ResourceLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Customer:
    customer_id: int
    class_index: int
    arrival_time: float
    service_start: Optional[float]
    departure_time: Optional[float]


@dataclass(frozen=True)
class Trace:
    """Per-customer record of one run, customers numbered in arrival order."""

    arrival: np.ndarray
    class_index: np.ndarray  # 1-based
    service_start: np.ndarray  # nan while still waiting at the horizon
    service_time: np.ndarray  # nan if service never started
    horizon: float

    @property
    def departure(self) -> np.ndarray:
        return self.service_start + self.service_time

    def customers(self) -> list[Customer]:
        dep = self.departure
        out = []
        for i in range(self.arrival.size):
            s = self.service_start[i]
            d = dep[i]
            out.append(Customer(i, int(self.class_index[i]), float(self.arrival[i]),
                                None if np.isnan(s) else float(s),
                                None if np.isnan(d) or d > self.horizon else float(d)))
        return out

    def events(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """All events up to the horizon as (time, kind, class, customer id).

        ``kind`` is 0 for departure, 1 for arrival, 2 for service start; at
        equal times that is also the order in which they happen.
        """
        ids = np.arange(self.arrival.size)
        started = ~np.isnan(self.service_start)
        dep = self.departure
        done = started & (dep <= self.horizon)
        t = np.concatenate([self.arrival, self.service_start[started], dep[done]])
        kind = np.concatenate([np.ones(ids.size, int), np.full(started.sum(), 2), np.zeros(done.sum(), int)])
        cid = np.concatenate([ids, ids[started], ids[done]])
        order = np.lexsort((cid, kind, t))
        return t[order], kind[order], self.class_index[cid[order]], cid[order]


@dataclass(frozen=True)
class SimStats:
    seed: int
    horizon: float
    mean_delay: np.ndarray
    delay_ci: np.ndarray  # 95% half-width, batch means
    mean_sojourn: np.ndarray
    sojourn_ci: np.ndarray
    mean_queue: np.ndarray  # time-average waiting-room count after warm-up
    observations: np.ndarray  # delays behind the means
    arrivals: np.ndarray
    departures: np.ndarray
    in_system: np.ndarray  # at the horizon, including the one in service
    busy_periods: int
    mean_busy_period: float
    sample_times: np.ndarray
    series: np.ndarray  # (samples, classes): customers in system, waiting plus in service
    trace: Optional[Trace] = None

    @property
    def n_classes(self) -> int:
        return self.mean_delay.size


@numba.njit(cache=True, nogil=True)
def _event_loop(arr_t, arr_c, order, offsets, service, pol_times, pol_rates, pol_prefix,
                horizon, sample_dt, n_samples, warmup):
    n = arr_t.size
    k_classes = offsets.size - 1
    start = np.full(n, np.nan)
    cust_service = np.full(n, np.nan)
    head = offsets[:-1].copy()
    tail = offsets[:-1].copy()
    in_sys = np.zeros(k_classes, np.int64)
    departed = np.zeros(k_classes, np.int64)
    series = np.zeros((n_samples, k_classes), np.int32)
    wait_area = np.zeros(k_classes)

    i_arr = 0
    n_waiting = 0
    busy = False
    serving = -1
    t_dep = np.inf
    t_last = 0.0
    pol = 0
    i_svc = 0
    i_sample = 0
    bp_started = 0
    bp_done = 0
    bp_total = 0.0
    bp_start = 0.0
    violations = 0

    while True:
        if i_arr < n and arr_t[i_arr] < t_dep:
            t = arr_t[i_arr]
            is_arrival = True
        elif t_dep <= horizon:
            t = t_dep
            is_arrival = False
        else:
            break

        while i_sample < n_samples and i_sample * sample_dt < t:
            series[i_sample, :] = in_sys
            i_sample += 1
        lo = max(t_last, warmup)
        if t > lo:
            for k in range(k_classes):
                wait_area[k] += (tail[k] - head[k]) * (t - lo)
        t_last = t
        while pol + 1 < pol_times.size and pol_times[pol + 1] <= t:
            pol += 1

        if is_arrival:
            c = arr_c[i_arr]
            tail[c] += 1
            in_sys[c] += 1
            n_waiting += 1
            i_arr += 1
            if not busy:
                bp_started += 1
                bp_start = t
        else:
            in_sys[serving] -= 1
            departed[serving] += 1
            busy = False
            t_dep = np.inf
            if n_waiting == 0:
                bp_done += 1
                bp_total += t - bp_start

        if not busy and n_waiting > 0:
            # prefix classes by index, then the largest accumulated priority;
            # ties go to the earliest arrival, then the lowest index
            best = -1
            prefix = pol_prefix[pol]
            for k in range(min(prefix, k_classes)):
                if head[k] < tail[k]:
                    best = k
                    break
            if best < 0:
                best_p = -np.inf
                best_a = np.inf
                for k in range(prefix, k_classes):
                    if head[k] < tail[k]:
                        a = arr_t[order[head[k]]]
                        p = pol_rates[pol, k] * (t - a)
                        if p > best_p or (p == best_p and a < best_a):
                            best = k
                            best_p = p
                            best_a = a
            cid = order[head[best]]
            head[best] += 1
            n_waiting -= 1
            start[cid] = t
            cust_service[cid] = service[i_svc]
            t_dep = t + service[i_svc]
            i_svc += 1
            serving = best
            busy = True

        if not busy and n_waiting > 0:
            violations += 1

    while i_sample < n_samples:
        series[i_sample, :] = in_sys
        i_sample += 1
    lo = max(t_last, warmup)
    if horizon > lo:
        for k in range(k_classes):
            wait_area[k] += (tail[k] - head[k]) * (horizon - lo)
    return (start, cust_service, series, wait_area, departed, in_sys,
            bp_started, bp_done, bp_total, violations)


def _streams(seed: int, n_classes: int) -> tuple[list[np.random.Generator], np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n_classes + 1)
    gens = [np.random.Generator(np.random.PCG64(c)) for c in children]
    return gens[:n_classes], gens[n_classes]


def _poisson_times(rng: np.random.Generator, rate: float, t0: float, t1: float) -> np.ndarray:
    if rate <= 0 or t1 <= t0:
        return np.empty(0)
    mean = rate * (t1 - t0)
    chunks = []
    t = t0
    while True:
        m = int(mean + 6.0 * math.sqrt(mean) + 16)
        times = t + np.cumsum(rng.exponential(1.0 / rate, m))
        if times[-1] >= t1:
            chunks.append(times[times < t1])
            break
        chunks.append(times)
        t = times[-1]
        mean = rate * (t1 - t)
    return np.concatenate(chunks)


def _arrivals(spec: ScenarioSpec, rngs) -> tuple[np.ndarray, np.ndarray]:
    """Merged arrival times and 0-based classes, regenerated at every rate change."""
    bounds = [t for t, _ in spec.rate_schedule] + [spec.horizon]
    times, classes = [], []
    for k, rng in enumerate(rngs):
        for (t0, rates), t1 in zip(spec.rate_schedule, bounds[1:]):
            ts = _poisson_times(rng, float(rates[k]), float(t0), float(t1))
            times.append(ts)
            classes.append(np.full(ts.size, k, np.int64))
    t = np.concatenate(times) if times else np.empty(0)
    c = np.concatenate(classes) if classes else np.empty(0, np.int64)
    idx = np.argsort(t, kind="stable")
    return t[idx], c[idx]


def expected_events(spec: ScenarioSpec) -> float:
    bounds = [t for t, _ in spec.rate_schedule] + [spec.horizon]
    arrivals = sum(sum(rates) * (t1 - t0) for (t0, rates), t1 in zip(spec.rate_schedule, bounds[1:]))
    return 3.0 * arrivals


def _policy_arrays(spec: ScenarioSpec):
    times = np.array([float(t) for t, _ in spec.policy_schedule])
    eff = [pol.effective(spec.system) for _, pol in spec.policy_schedule]
    rates = np.array([[float(r) for r in e[0]] for e in eff])
    prefix = np.array([e[1] for e in eff], np.int64)
    return times, rates, prefix


def _batch_means(values, classes, stamp, k_classes, warmup, horizon):
    """Grand mean per class and 95% half-width from equal-time batches."""
    width = (horizon - warmup) / N_BATCHES
    batch = np.minimum(((stamp - warmup) / width).astype(np.int64), N_BATCHES - 1)
    key = classes * N_BATCHES + batch
    sums = np.bincount(key, weights=values, minlength=k_classes * N_BATCHES).reshape(k_classes, N_BATCHES)
    counts = np.bincount(key, minlength=k_classes * N_BATCHES).reshape(k_classes, N_BATCHES)
    n = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = sums.sum(axis=1) / n
    half = np.full(k_classes, np.nan)
    for k in range(k_classes):
        used = counts[k] > 0
        nb = int(used.sum())
        if nb >= 2:
            bm = sums[k, used] / counts[k, used]
            half[k] = sps.t.ppf(0.975, nb - 1) * bm.std(ddof=1) / math.sqrt(nb)
    return mean, half, n


def run(spec: ScenarioSpec, trace: bool = False) -> SimStats:
    """Simulate one scenario. Identical spec and seed give identical output."""
    ensure_valid(spec)
    require_unit_service(spec.system)
    if expected_events(spec) > MAX_EXPECTED_EVENTS:
        raise ResourceLimitError(f"horizon implies about {expected_events(spec):.3g} events "
                                 f"(limit {MAX_EXPECTED_EVENTS:.0e})")
    horizon = float(spec.horizon)
    n_samples = int(math.floor(horizon / spec.sample_interval + 1e-9)) + 1
    if n_samples > MAX_SAMPLES:
        raise ResourceLimitError(f"{n_samples} series samples requested (limit {MAX_SAMPLES})")
    k_classes = spec.system.n_classes

    arrival_rngs, service_rng = _streams(spec.seed, k_classes)
    arr_t, arr_c = _arrivals(spec, arrival_rngs)
    n = arr_t.size
    service = service_rng.exponential(1.0, n)
    order = np.argsort(arr_c, kind="stable")
    offsets = np.concatenate([[0], np.cumsum(np.bincount(arr_c, minlength=k_classes))]).astype(np.int64)
    pol_times, pol_rates, pol_prefix = _policy_arrays(spec)
    warmup = WARMUP_FRACTION * horizon

    (start, cust_service, series, wait_area, departed, in_sys,
     bp_started, bp_done, bp_total, violations) = _event_loop(
        arr_t, arr_c, order, offsets, service, pol_times, pol_rates, pol_prefix,
        horizon, float(spec.sample_interval), n_samples, warmup)
    if violations:
        raise AssertionError(f"server idled with customers waiting ({violations} events)")

    started = ~np.isnan(start)
    observed = started & (start >= warmup)
    delay = start[observed] - arr_t[observed]
    cls = arr_c[observed]
    mean_delay, delay_ci, n_obs = _batch_means(delay, cls, start[observed], k_classes, warmup, horizon)
    mean_soj, soj_ci, _ = _batch_means(delay + cust_service[observed], cls, start[observed],
                                       k_classes, warmup, horizon)

    return SimStats(
        seed=spec.seed,
        horizon=horizon,
        mean_delay=mean_delay,
        delay_ci=delay_ci,
        mean_sojourn=mean_soj,
        sojourn_ci=soj_ci,
        mean_queue=wait_area / (horizon - warmup),
        observations=n_obs,
        arrivals=np.bincount(arr_c, minlength=k_classes),
        departures=departed,
        in_system=in_sys,
        busy_periods=int(bp_started),
        mean_busy_period=bp_total / bp_done if bp_done else math.nan,
        sample_times=np.arange(n_samples) * float(spec.sample_interval),
        series=series,
        trace=Trace(arr_t, arr_c + 1, start, cust_service, horizon) if trace else None,
    )


@dataclass(frozen=True)
class ReplicationStats:
    seeds: tuple[int, ...]
    mean_delay: np.ndarray
    delay_se: np.ndarray
    delay_ci: np.ndarray
    mean_sojourn: np.ndarray
    sojourn_se: np.ndarray
    sojourn_ci: np.ndarray
    mean_queue: np.ndarray
    queue_se: np.ndarray
    runs: tuple[SimStats, ...]

    @property
    def n_reps(self) -> int:
        return len(self.runs)


def replication_seeds(base_seed: int, n_reps: int) -> list[int]:
    """Independent 64-bit seeds split off the base seed."""
    return [int(c.generate_state(1, np.uint64)[0]) for c in np.random.SeedSequence(base_seed).spawn(n_reps)]


def _across(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = values.shape[0]
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, se, sps.t.ppf(0.975, n - 1) * se


def replicate(spec: ScenarioSpec, n_reps: int, workers: int = 1, keep_series: bool = True) -> ReplicationStats:
    """Run independent replications and summarize across them.

    The per-replication means are treated as i.i.d. observations; ``*_se`` is
    their standard error and ``*_ci`` the matching 95% t half-width.
    """
    if not isinstance(n_reps, int) or n_reps < 2:
        raise ValueError("replicate needs n_reps >= 2")
    ensure_valid(spec)
    seeds = replication_seeds(spec.seed, n_reps)
    specs = [replace(spec, seed=s) for s in seeds]

    def one(s):
        r = run(s)
        return r if keep_series else replace(r, series=r.series[:0], sample_times=r.sample_times[:0])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            runs = list(pool.map(one, specs))
    else:
        runs = [one(s) for s in specs]
    d = _across(np.array([r.mean_delay for r in runs]))
    w = _across(np.array([r.mean_sojourn for r in runs]))
    q = _across(np.array([r.mean_queue for r in runs]))
    return ReplicationStats(tuple(seeds), d[0], d[1], d[2], w[0], w[1], w[2], q[0], q[1], tuple(runs))


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    arrival_rates: tuple[float, ...]
    mean_delay: np.ndarray
    scaled_delay: np.ndarray  # epsilon * mean delay
    scaled_ci: np.ndarray  # epsilon * 95% half-width


def sweep_scenario(base: ScenarioSpec, epsilon: float) -> ScenarioSpec:
    """``base`` with the lowest class's rate set so the load is ``1 - epsilon``."""
    if not (isinstance(epsilon, (int, float)) and math.isfinite(epsilon) and epsilon > 0):
        raise ValueError(f"epsilon must be > 0 (got {epsilon!r})")
    lam = list(base.system.arrival_rates)
    last = 1.0 - sum(lam[:-1]) - epsilon
    if last < 0:
        raise ValueError(f"epsilon {epsilon} makes the lowest class arrival rate negative ({last})")
    lam[-1] = last
    system = base.system.with_arrival_rates(lam)
    return replace(base, system=system, rate_schedule=((0.0, tuple(lam)),))


def epsilon_sweep(base: ScenarioSpec, epsilons: Sequence[float], n_reps: int = 1) -> list[SweepRow]:
    """Simulate the heavy-traffic family at each epsilon; one row per epsilon."""
    if any(not isinstance(p, Accumulating) for _, p in base.policy_schedule):
        raise ValueError("epsilon_sweep needs an accumulating-priority base scenario")
    specs = [sweep_scenario(base, e) for e in epsilons]  # fail fast before simulating
    rows = []
    for eps, spec in zip(epsilons, specs):
        if n_reps >= 2:
            agg = replicate(spec, n_reps, keep_series=False)
            delay, ci = agg.mean_delay, agg.delay_ci
        else:
            r = run(spec)
            delay, ci = r.mean_delay, r.delay_ci
        rows.append(SweepRow(float(eps), spec.system.arrival_rates, delay, eps * delay, eps * ci))
    return rows
