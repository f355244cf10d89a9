from fractions import Fraction as F

import numpy as np
import pytest

from apqlab import analytic, export
from apqlab.core import SystemSpec, ValidationError
from apqlab.fluid import FluidError, ap_fluid_trajectory, ap_growth_rates, sp_fluid_trajectory

from oracles import euler_ap, euler_sp


def sys3(lam=(0.4, 0.4, 0.4), b=(3, 2, 1)):
    return SystemSpec.from_rates(lam, b)


def random_instance(rng, k=None, rho=(1.0, 1.5)):
    while True:
        k = k or int(rng.integers(2, 6))
        lam = rng.dirichlet(np.ones(k)) * rng.uniform(*rho)
        if np.all(lam.sum() - lam < 1) and np.all(lam > 1e-3):
            break
    b = np.sort(rng.uniform(0.2, 5.0, k))[::-1]
    levels = rng.uniform(0, 3, k) * (rng.random(k) < 0.7)
    return [float(x) for x in lam], [float(x) for x in b], [float(x) for x in levels]


# ---------------------------------------------------------------------------
# static priority

def test_sp_worked_example_exact():
    traj = sp_fluid_trajectory(sys3((F(2, 5),) * 3), (F(1), F(0), F(0)), F(20))
    assert traj.drain_times[:2] == (F(5, 3), F(5))
    assert traj.drain_times[2] is None
    assert traj.terminal_growth_rates == (0, 0, F(1, 5))
    t5 = [s for s in traj.breakpoints if s.time == 5][0]
    assert t5.levels == (0, 0, F(2))
    at_t1 = [s for s in traj.breakpoints if s.time == F(5, 3)][0]
    assert at_t1.levels[1] == F(2, 3)


def test_sp_worked_example_float():
    traj = sp_fluid_trajectory(sys3(), (1.0, 0.0, 0.0), 20.0)
    assert traj.drain_times[0] == pytest.approx(5 / 3, abs=1e-12)
    assert traj.drain_times[1] == pytest.approx(5.0, abs=1e-12)
    assert traj.terminal_growth_rates[2] == pytest.approx(0.2, abs=1e-15)
    assert traj.levels_at(20.0)[0] == pytest.approx((0, 0, 2 + 0.2 * 15), abs=1e-12)


def test_sp_matches_euler():
    traj = sp_fluid_trajectory(sys3(), (1.0, 0.0, 0.0), 10.0)
    grid, ref = euler_sp((0.4, 0.4, 0.4), (1.0, 0.0, 0.0), 10.0, 1e-4)
    assert np.max(np.abs(traj.levels_at(grid) - ref)) < 1e-2


def test_sp_empty_start():
    traj = sp_fluid_trajectory(sys3(), (0, 0, 0), 10.0)
    assert len(traj.breakpoints) == 2
    np.testing.assert_allclose(traj.terminal_growth_rates, (0, 0, 0.2), atol=1e-15)
    assert traj.drain_times[:2] == (0, 0)


def test_sp_stable_drains():
    traj = sp_fluid_trajectory(sys3((0.3, 0.3, 0.3)), (2.0, 1.0, 4.0), 200.0)
    assert traj.terminal_growth_rates == (0, 0, 0)
    assert all(d is not None for d in traj.drain_times)
    np.testing.assert_array_equal(traj.levels_at([max(traj.drain_times) + 1, 200.0]), 0.0)


def test_sp_precondition():
    with pytest.raises(ValidationError, match="load without class"):
        sp_fluid_trajectory(sys3((0.6, 0.6, 0.1)), (0, 0, 0), 1.0)


# ---------------------------------------------------------------------------
# accumulating priority

def test_ap_growth_rates_example():
    g = ap_growth_rates(sys3())
    np.testing.assert_allclose(g, (0.036364, 0.054545, 0.109091), atol=5e-7)
    assert sum(g) == pytest.approx(0.2, abs=1e-15)
    exact = ap_growth_rates(sys3((F(2, 5),) * 3))
    assert exact == (F(2, 55), F(3, 55), F(6, 55))


def test_ap_growth_rates_linear_in_excess():
    base = np.array(ap_growth_rates(sys3((F(2, 5),) * 3)))
    for d in (F(1, 10), F(1, 100), F(1, 1000)):
        lam = (F(1, 3), F(1, 3), F(1, 3) + d)
        g = ap_growth_rates(sys3(lam))
        assert sum(g) == d
    with pytest.raises(ValidationError):
        ap_growth_rates(sys3((0.3, 0.3, 0.3)))
    assert base.sum() == F(1, 5)


@pytest.mark.parametrize("levels", [(0, 0, 0), (5, 0, 0), (0, 0, 5), (1, 2, 3)])
def test_ap_terminal_rates_do_not_depend_on_start(levels):
    traj = ap_fluid_trajectory(sys3((F(2, 5),) * 3), [F(x) for x in levels], F(100))
    assert traj.terminal_growth_rates == ap_growth_rates(sys3((F(2, 5),) * 3))


def test_ap_empty_start_is_coalesced():
    traj = ap_fluid_trajectory(sys3(), (0.0, 0.0, 0.0), 10.0)
    assert traj.breakpoints[0].active_set == {1, 2, 3}
    assert len(traj.breakpoints) == 2
    np.testing.assert_allclose(traj.levels_at(10.0)[0], 10 * np.array(ap_growth_rates(sys3())), rtol=1e-12)


def test_ap_stable_simultaneous_zero():
    lam, b = (0.3, 0.2, 0.25), (3.0, 2.0, 1.0)
    start = (1.0, 4.0, 2.0)
    traj = ap_fluid_trajectory(sys3(lam, b), start, 30.0)
    assert traj.terminal_growth_rates == (0, 0, 0)
    zero_at = [s.time for s in traj.breakpoints if all(lv == 0 for lv in s.levels)][0]
    before = traj.levels_at(zero_at * (1 - 1e-6))[0]
    assert np.all(before > 0)
    grid, ref = euler_ap([lam], [b], [start], 30.0, 1e-4)
    assert np.max(np.abs(traj.levels_at(grid) - ref[:, 0, :])) < 1e-2
    # the oracle also empties every class at (nearly) the same moment
    empty_step = np.argmax(ref[:, 0, :] < 1e-3, axis=0)
    assert np.ptp(grid[empty_step]) < 0.05
    assert abs(grid[empty_step].mean() - zero_at) < 0.05


def test_ap_exact_rationals():
    traj = ap_fluid_trajectory(sys3((F(1, 2), F(3, 10), F(2, 5))), (F(3), F(0), F(1)), F(50))
    for s in traj.breakpoints:
        assert all(isinstance(x, (int, F)) for x in s.levels)
        top = max(s.priorities)
        assert all(s.priorities[i - 1] == top for i in s.active_set)


def test_ap_rejects_zero_rate():
    with pytest.raises(ValidationError):
        ap_fluid_trajectory(sys3((0.5, 0.0, 0.6)), (0, 0, 0), 1.0)


# ---------------------------------------------------------------------------
# properties over random instances

def _segments(traj):
    return zip(traj.breakpoints[:-1], traj.breakpoints[1:], traj.slopes)


@pytest.mark.parametrize("solver", ["sp", "ap"])
def test_capacity_conservation(solver):
    rng = np.random.default_rng(3)
    for _ in range(40):
        lam, b, levels = random_instance(rng)
        lam_q = [F(x) for x in lam]
        system = SystemSpec.from_rates(lam_q, [F(x) for x in b])
        make = sp_fluid_trajectory if solver == "sp" else ap_fluid_trajectory
        traj = make(system, [F(x) for x in levels], F(30))
        for a, _, slope in _segments(traj):
            if any(lv > 0 for lv in a.levels) or sum(lam_q) > 1:
                assert sum(l - s for l, s in zip(lam_q, slope)) == 1
            assert all(l - s >= 0 for l, s in zip(lam_q, slope))


def test_priority_ordering_invariant():
    rng = np.random.default_rng(4)
    for _ in range(40):
        lam, b, levels = random_instance(rng)
        system = SystemSpec.from_rates([F(x) for x in lam], [F(x) for x in b])
        traj = ap_fluid_trajectory(system, [F(x) for x in levels], F(30))
        for a, z, slope in _segments(traj):
            for frac in (F(1, 4), F(1, 2), F(3, 4)):
                t = a.time + frac * (z.time - a.time)
                lv = [x + s * (t - a.time) for x, s in zip(a.levels, slope)]
                p = [r * x / l for r, x, l in zip(system.accumulation_rates, lv, system.arrival_rates)]
                shared = p[min(a.active_set) - 1]
                assert all(p[i - 1] == shared for i in a.active_set)
                assert all(q <= shared for q in p)
            # equality with a non-member happens only at the next breakpoint
            shared_end = z.priorities[min(a.active_set) - 1]
            joiners = {i for i in range(1, len(lam) + 1)
                       if i not in a.active_set and z.priorities[i - 1] == shared_end}
            if joiners and z is not traj.breakpoints[-1]:
                assert joiners <= z.active_set


def test_small_euler_equivalence():
    rng = np.random.default_rng(8)
    inst = [random_instance(rng, k=3) for _ in range(8)]
    grid, ref = euler_ap([i[0] for i in inst], [i[1] for i in inst], [i[2] for i in inst], 10.0, 1e-4)
    for n, (lam, b, levels) in enumerate(inst):
        traj = ap_fluid_trajectory(SystemSpec.from_rates(lam, b), levels, 10.0)
        assert np.max(np.abs(traj.levels_at(grid) - ref[:, n, :])) < 1e-2


def test_sp_and_ap_disagree_on_fate():
    rng = np.random.default_rng(9)
    for _ in range(30):
        lam, b, levels = random_instance(rng, rho=(1.01, 1.5))
        system = SystemSpec.from_rates(lam, b)
        sp = sp_fluid_trajectory(system, levels, 10.0).terminal_growth_rates
        ap = ap_fluid_trajectory(system, levels, 10.0).terminal_growth_rates
        assert all(g == 0 for g in sp[:-1]) and sp[-1] > 0
        assert all(g > 0 for g in ap)
        assert sum(ap) == pytest.approx(sum(sp), abs=1e-12)


def test_growth_proportions_match_queue_fractions():
    rng = np.random.default_rng(10)
    for _ in range(30):
        lam, b, _ = random_instance(rng, rho=(1.01, 1.5))
        g = np.array(ap_growth_rates(SystemSpec.from_rates(lam, b)))
        np.testing.assert_allclose(g / g.sum(), analytic.ap_queue_fractions(np.array(lam) / sum(lam), b),
                                   rtol=0, atol=1e-12)


def test_breakpoint_bound():
    rng = np.random.default_rng(12)
    for _ in range(50):
        lam, b, levels = random_instance(rng)
        k = len(lam)
        traj = ap_fluid_trajectory(SystemSpec.from_rates(lam, b), levels, 1e6)
        assert len(traj.breakpoints) <= 2 * k * k + 1
        assert np.all(np.diff(traj.times) > 0)


def test_export_rows():
    traj = sp_fluid_trajectory(sys3(), (1.0, 0.0, 0.0), 10.0)
    header, rows = export.fluid_rows(traj, 2.0)
    assert header == ["time", "L_1", "L_2", "L_3", "P_1", "P_2", "P_3", "active_set"]
    times = [r[0] for r in rows]
    assert times == sorted(times)
    assert {0.0, 2.0, 4.0, 6.0, 8.0, 10.0} <= set(times)
    assert any(t == pytest.approx(5 / 3) for t in times)
    for r in rows:
        assert r[4:7] == pytest.approx([b * lv / 0.4 for b, lv in zip((3, 2, 1), r[1:4])])


def test_fluid_error_is_runtime_error():
    assert issubclass(FluidError, RuntimeError)
