"""Canned scenarios: the three-class heavy-traffic system and its four figure runs."""

from __future__ import annotations

from .core import Accumulating, ScaledAccumulating, ScenarioSpec, Static, SystemSpec

EPSILON = 1e-3
RATES = (1 / 3, 1 / 3, 1 / 3 - EPSILON)
ACCUMULATION = (3.0, 2.0, 1.0)
FIGURE_HORIZON = 1e6
# Total length of the regime-switch run. Each quarter lasts 1e6 time units,
# about 1/epsilon**2, so the surge quarter has time to build the AP queues up.
SWITCH_HORIZON = 4e6
SAMPLE_INTERVAL = 10.0

FIGURE_SEEDS = {
    "fig1_accumulating": 1001,
    "fig2_static": 1002,
    "fig3_scaled": 1003,
    "fig4_switch": 1004,
}


def heavy_traffic_system(epsilon: float = EPSILON) -> SystemSpec:
    return SystemSpec.from_rates((1 / 3, 1 / 3, 1 / 3 - epsilon), ACCUMULATION)


def fig1_accumulating(seed: int = FIGURE_SEEDS["fig1_accumulating"]) -> ScenarioSpec:
    return ScenarioSpec(heavy_traffic_system(), ((0.0, Accumulating()),), FIGURE_HORIZON, seed, SAMPLE_INTERVAL)


def fig2_static(seed: int = FIGURE_SEEDS["fig2_static"]) -> ScenarioSpec:
    return ScenarioSpec(heavy_traffic_system(), ((0.0, Static()),), FIGURE_HORIZON, seed, SAMPLE_INTERVAL)


def fig3_scaled(seed: int = FIGURE_SEEDS["fig3_scaled"]) -> ScenarioSpec:
    policy = ScaledAccumulating(EPSILON, ACCUMULATION, static_tail_count=1)
    return ScenarioSpec(heavy_traffic_system(), ((0.0, policy),), FIGURE_HORIZON, seed, SAMPLE_INTERVAL)


def fig4_switch(seed: int = FIGURE_SEEDS["fig4_switch"]) -> ScenarioSpec:
    """Light-traffic AP, then a surge of class-3 arrivals under AP, then static priority."""
    quarter = SWITCH_HORIZON / 4
    light = (1 / 3, 1 / 3, 1 / 3 - 0.3)
    return ScenarioSpec(
        system=SystemSpec.from_rates(light, ACCUMULATION),
        policy_schedule=((0.0, Accumulating()), (2 * quarter, Static())),
        horizon=SWITCH_HORIZON,
        seed=seed,
        sample_interval=SAMPLE_INTERVAL,
        rate_schedule=((0.0, light), (quarter, RATES)),
    )


FIGURES = {
    "fig1_accumulating": fig1_accumulating,
    "fig2_static": fig2_static,
    "fig3_scaled": fig3_scaled,
    "fig4_switch": fig4_switch,
}
