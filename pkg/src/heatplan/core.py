"""Shared vocabulary for the planning stack: time grid, observable state,
comfort weights, and the price/comfort reward with its min-max normalizer.

Sign conventions: rewards are <= 0 for nonnegative prices (cost and comfort
terms are both penalties); the normalizer maps [worst, 0] onto [0, 1].
"""

from dataclasses import dataclass

import numpy as np

# Discrete modulation levels available to the planner (fractions of full power).
ACTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform control grid: `n_steps` steps of `step_hours`, starting at `start_hour`."""

    start_hour: float = 0.0
    step_hours: float = 0.5
    n_steps: int = 48

    def __post_init__(self):
        if self.step_hours <= 0:
            raise ValueError("step_hours must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if not 0.0 <= self.start_hour < 24.0:
            raise ValueError("start_hour must lie in [0, 24)")

    def hour_of(self, t: int) -> float:
        """Hour of day of step t, wrapped to [0, 24)."""
        return (self.start_hour + t * self.step_hours) % 24.0

    def hours(self) -> np.ndarray:
        """Hour of day for every step as an array."""
        return (self.start_hour + np.arange(self.n_steps) * self.step_hours) % 24.0

    @property
    def steps_per_day(self) -> int:
        return int(round(24.0 / self.step_hours))


@dataclass(frozen=True)
class ValueRanges:
    """Nominal value domains used to scale signals for the networks and to clip
    synthetic data. These are scaling ranges, not hard input validators; real
    traces may mildly exceed them."""

    room_temp: tuple = (15.0, 25.0)    # degC
    power: tuple = (0.0, 4000.0)       # W electrical
    outdoor_temp: tuple = (-10.0, 20.0)  # degC
    price: tuple = (-0.4, 0.4)         # EUR/kWh


@dataclass(frozen=True)
class ObservableState:
    """What a controller can see at a decision step.

    power_prev_w is the electrical power drawn during the previous step;
    everything else is measured/known at the current step boundary.
    """

    tau: float           # hour of day in [0, 24)
    room_temp: float     # degC
    power_prev_w: float  # W
    outdoor_temp: float  # degC
    price: float         # EUR/kWh
    setpoint: float      # degC


@dataclass(frozen=True)
class ComfortWeights:
    """Asymmetric comfort penalties per degC of deviation per step.

    `below` (undershoot) must exceed `above` (overshoot) so that pre-heating
    above the setpoint is penalized more gently than letting the room cool.
    """

    below: float = 0.5
    above: float = 0.1

    def __post_init__(self):
        if not self.below > self.above > 0.0:
            raise ValueError("comfort weights require below > above > 0")


@dataclass(frozen=True)
class RewardNormalizer:
    """Min-max bounds for mapping raw rewards onto [0, 1]. `upper` is always 0:
    the best possible step draws no power with the room exactly at setpoint."""

    lower: float
    upper: float = 0.0

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("normalizer needs lower < upper")
        if self.upper != 0.0:
            raise ValueError("normalizer upper bound must be 0")


def reward(power_w: float, price: float, step_hours: float, setpoint: float,
           room_temp_next: float, weights: ComfortWeights) -> float:
    """Raw step reward: negative energy cost plus asymmetric comfort penalty.

    Power (W) held over `step_hours` is converted to kWh before the price
    multiplication; comfort compares the post-step room temperature with the
    current setpoint.
    """
    if step_hours <= 0:
        raise ValueError("step_hours must be positive")
    energy_kwh = power_w * step_hours / 1000.0
    shortfall = max(setpoint - room_temp_next, 0.0)
    excess = max(room_temp_next - setpoint, 0.0)
    return -energy_kwh * price - shortfall * weights.below - excess * weights.above


def normalize_reward(value: float, norm: RewardNormalizer) -> float:
    """Map a raw reward onto [0, 1], clipping values outside the bounds."""
    scaled = (value - norm.lower) / (norm.upper - norm.lower)
    return min(max(scaled, 0.0), 1.0)


def reward_bounds(max_power_w: float, max_abs_price: float, step_hours: float,
                  weights: ComfortWeights) -> RewardNormalizer:
    """Worst-case reward bound from observed statistics.

    The cost floor multiplies the largest observed consumption by the largest
    observed absolute price; the comfort floor assumes a 2 degC shortfall at
    the undershoot weight. The upper bound is exactly 0.
    """
    if max_power_w < 0 or max_abs_price < 0 or step_hours <= 0:
        raise ValueError("bounds require nonnegative stats and positive step")
    cost_floor = max_power_w * step_hours / 1000.0 * max_abs_price
    return RewardNormalizer(lower=-(cost_floor + 2.0 * weights.below))
