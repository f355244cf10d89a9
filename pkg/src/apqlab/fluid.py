"""Exact piecewise-linear fluid trajectories for static and accumulating priority.

Level ``L_i`` grows at ``lambda_i - D_i`` where ``D_i`` is the service capacity
the class receives (total capacity 1). Between events every allocation is
constant, so the solver jumps from event to event and never integrates
numerically. Arithmetic is plain scalar Python: ``fractions.Fraction`` inputs
give exact rational breakpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import SystemSpec, ValidationError, require_unit_service, validate_system

# Relative slack used only to group float equalization times that coincide.
_TIE_RTOL = 1e-12


class FluidError(RuntimeError):
    pass


@dataclass(frozen=True)
class FluidState:
    time: float
    levels: tuple
    priorities: tuple
    active_set: frozenset


@dataclass(frozen=True)
class FluidTrajectory:
    breakpoints: tuple[FluidState, ...]
    slopes: tuple[tuple, ...]  # slopes[k] holds on [breakpoints[k], breakpoints[k+1]]
    terminal_growth_rates: tuple
    horizon: float
    arrival_rates: tuple
    rates: tuple
    drain_times: tuple = field(default=())

    @property
    def times(self) -> np.ndarray:
        return np.array([float(s.time) for s in self.breakpoints])

    def _segment(self, t: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.breakpoints) - 1)

    def levels_at(self, t) -> np.ndarray:
        """Levels at time(s) ``t`` in [0, horizon]; shape ``(len(t), K)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        seg = self._segment(t)
        base = np.array([[float(x) for x in s.levels] for s in self.breakpoints])
        last = self.slopes[-1] if self.slopes else self.terminal_growth_rates
        slopes = np.array([[float(x) for x in s] for s in (*self.slopes, last)])
        return base[seg] + slopes[seg] * (t - self.times[seg])[:, None]

    def active_set_at(self, t: float) -> frozenset:
        return self.breakpoints[int(self._segment(np.array([t]))[0])].active_set

    def rows(self, sample_interval: float | None = None) -> list[list]:
        """Export rows: time, L_1..L_K, P_1..P_K, active set (``;``-joined).

        One row per breakpoint, plus dense samples on the ``sample_interval``
        grid at times that are not already breakpoints.
        """
        bt = self.times
        entries = [(float(s.time), s) for s in self.breakpoints]
        if sample_interval:
            n = int(np.floor(self.horizon / sample_interval + 1e-9))
            grid = np.arange(n + 1) * sample_interval
            entries += [(float(g), None) for g in grid[~np.isin(grid, bt)]]
        entries.sort(key=lambda e: e[0])
        lam = [float(x) for x in self.arrival_rates]
        b = [float(x) for x in self.rates]
        out = []
        for t, state in entries:
            if state is not None:
                levels = [float(x) for x in state.levels]
                prios = [float(x) for x in state.priorities]
                active = state.active_set
            else:
                levels = [float(x) for x in self.levels_at(t)[0]]
                prios = [r * lv / l if l else 0.0 for lv, l, r in zip(levels, lam, b)]
                active = self.active_set_at(t)
            out.append([t, *levels, *prios, ";".join(str(i) for i in sorted(active))])
        return out


def _check_fluid_system(system: SystemSpec, initial_levels: Sequence, horizon) -> None:
    errors = validate_system(system)
    if errors:
        raise ValidationError(errors)
    require_unit_service(system)
    lam = system.arrival_rates
    rho = sum(lam)
    bad = [i + 1 for i, l in enumerate(lam) if not rho - l < 1]
    if bad:
        raise ValidationError([f"load without class {i} must stay below 1" for i in bad])
    if len(initial_levels) != len(lam) or any(x < 0 for x in initial_levels):
        raise ValidationError([f"initial_levels must be {len(lam)} values >= 0"])
    if not horizon > 0:
        raise ValidationError(["horizon must be > 0"])


# A dynamics function maps the current levels to
# (slopes, active set, time to next event or None, levels after that time).
Dynamics = Callable[[list], tuple]


def _solve(initial, horizon, dynamics: Dynamics, priorities, max_breakpoints: int):
    """Follow events until the dynamics report no further event.

    Breakpoints are recorded up to ``horizon``; the loop keeps going past it so
    the terminal regime (and its slopes) is always known.
    """
    def state(t, levels, active):
        return FluidState(t, tuple(levels), tuple(priorities(levels)), frozenset(active))

    t = 0
    levels = list(initial)
    slopes, active, dt, advance = dynamics(levels)
    states = [state(t, levels, active)]
    path = [(t, tuple(levels))]
    seg_slopes = []
    recording = True
    events = 0
    while dt is not None:
        events += 1
        if events > max_breakpoints:
            raise FluidError(f"event loop did not settle after {max_breakpoints} breakpoints")
        t_next, nxt = t + dt, advance(dt)
        if recording and t_next >= horizon:
            seg_slopes.append(tuple(slopes))
            at_h = nxt if t_next == horizon else [lv + s * (horizon - t) for lv, s in zip(levels, slopes)]
            states.append(state(horizon, at_h, active))
            recording = False
        prev = tuple(slopes)
        t, levels = t_next, nxt
        path.append((t, tuple(levels)))
        slopes, active, dt_new, advance = dynamics(levels)
        if recording:
            if dt > 0:
                seg_slopes.append(prev)
                states.append(state(t, levels, active))
            else:
                states[-1] = state(t, levels, active)
        dt = dt_new
    terminal = tuple(slopes)
    if recording and states[-1].time < horizon:
        seg_slopes.append(terminal)
        states.append(state(horizon, [lv + s * (horizon - t) for lv, s in zip(levels, slopes)], active))
    return tuple(states), tuple(seg_slopes), terminal, path


def _drain_times(path, terminal) -> tuple:
    """Time after which each class stays empty, or None if it never settles at 0.

    ``path`` lists every event (including those past the horizon).
    """
    out = []
    for i in range(len(terminal)):
        if terminal[i] != 0 or path[-1][1][i] != 0:
            out.append(None)
            continue
        t = path[-1][0]
        for when, levels in reversed(path):
            if levels[i] != 0:
                break
            t = when
        out.append(t)
    return tuple(out)


def sp_fluid_trajectory(system: SystemSpec, initial_levels: Sequence, horizon) -> FluidTrajectory:
    """Fluid trajectory under static priority.

    Capacity flows down the index order: an empty class keeps only what its
    arrivals need, the first non-empty class takes everything left.
    """
    _check_fluid_system(system, initial_levels, horizon)
    lam = list(system.arrival_rates)
    b = list(system.accumulation_rates)
    k = len(lam)

    def dynamics(levels):
        cap = 1
        slopes, active = [], set()
        drain_class = None
        for i in range(k):
            if cap <= 0:
                d = 0
            elif levels[i] > 0:
                d, cap = cap, 0
            elif lam[i] <= cap:
                d, cap = lam[i], cap - lam[i]
            else:
                d, cap = cap, 0
            slope = lam[i] - d
            if d > 0:
                active.add(i + 1)
            if levels[i] > 0 and slope < 0 and drain_class is None:
                drain_class = i
            slopes.append(slope)
        if drain_class is None:
            return slopes, active, None, None
        dt = levels[drain_class] / -slopes[drain_class]

        def advance(h):
            nxt = [lv + s * h for lv, s in zip(levels, slopes)]
            nxt[drain_class] = 0
            return nxt

        return slopes, active, dt, advance

    def priorities(levels):
        return [b[i] * levels[i] / lam[i] if lam[i] else 0 for i in range(k)]

    states, seg, terminal, path = _solve(initial_levels, horizon, dynamics, priorities, 2 * k * k)
    return FluidTrajectory(states, seg, terminal, horizon, tuple(lam), tuple(b), _drain_times(path, terminal))


def ap_fluid_trajectory(system: SystemSpec, initial_levels: Sequence, horizon,
                        rates: Optional[Sequence] = None) -> FluidTrajectory:
    """Fluid trajectory under accumulating priority.

    The class(es) with maximal priority ``P_i = b_i L_i / lambda_i`` share the
    capacity so that their priorities move together; everyone else only
    accumulates. ``rates`` overrides the class accumulation rates (used for
    scaled policies).
    """
    _check_fluid_system(system, initial_levels, horizon)
    lam = list(system.arrival_rates)
    if any(l <= 0 for l in lam):
        raise ValidationError(["accumulating fluid model needs every arrival rate > 0"])
    b = list(rates) if rates is not None else list(system.accumulation_rates)
    if len(b) != len(lam) or any(not r > 0 for r in b):
        raise ValidationError(["accumulation rates must be positive, one per class"])
    k = len(lam)
    rho = sum(lam)
    everyone = frozenset(range(1, k + 1))

    def to_prio(levels):
        return [b[i] * levels[i] / lam[i] for i in range(k)]

    def to_levels(prios):
        return [lam[i] * prios[i] / b[i] for i in range(k)]

    def dynamics(levels):
        p = to_prio(levels)
        top = max(p)
        # a float level -> priority round trip can move a joined class by an ulp
        slack = _TIE_RTOL * top if isinstance(top, float) else 0
        members = [i for i in range(k) if p[i] >= top - slack]
        if top == 0 and rho <= 1:
            return [0] * k, set(everyone), None, None
        c = (sum(lam[i] for i in members) - 1) / sum(lam[i] / b[i] for i in members)
        member = set(members)
        slopes = [lam[i] * c / b[i] if i in member else lam[i] for i in range(k)]
        active = {i + 1 for i in members}
        if len(members) == k:
            if c >= 0:
                return slopes, active, None, None

            def empty(h):
                return [0] * k

            return slopes, active, top / -c, empty
        # c < 0 here: the standing load assumption makes any proper subset underloaded
        waits = {j: (top - p[j]) / (b[j] - c) for j in range(k) if j not in member}
        dt = min(waits.values())
        tol = _TIE_RTOL * abs(dt) if isinstance(dt, float) else 0
        joining = {j for j, w in waits.items() if w <= dt + tol}

        def advance(h):
            shared = top + c * h
            q = [shared if (i in member or i in joining) else p[i] + b[i] * h for i in range(k)]
            return to_levels(q)

        return slopes, active, dt, advance

    states, seg, terminal, _ = _solve(initial_levels, horizon, dynamics, to_prio, 2 * k * k)
    for s in states:
        if any(lv < 0 for lv in s.levels):
            raise FluidError(f"negative level at t={s.time}")
    return FluidTrajectory(states, seg, terminal, horizon, tuple(lam), tuple(b))


def ap_growth_rates(system: SystemSpec, rates: Optional[Sequence] = None) -> tuple:
    """Closed-form level slopes once every priority has equalized (load > 1)."""
    errors = validate_system(system)
    if errors:
        raise ValidationError(errors)
    require_unit_service(system)
    lam = list(system.arrival_rates)
    b = list(rates) if rates is not None else list(system.accumulation_rates)
    rho = sum(lam)
    if not rho > 1:
        raise ValidationError([f"growth rates need load > 1 (got {rho})"])
    total = sum(l / r for l, r in zip(lam, b))
    return tuple((rho - 1) * (l / r) / total for l, r in zip(lam, b))
