"""Generation and ingestion of the exogenous traces a run needs: electricity
price, outdoor temperature (true and forecast), setpoint schedule, solar
irradiance, and internal gains.

All generators are deterministic given (arguments, seed). The planner must
only ever read the forecast temperature series; the simulator only ever reads
the true one.
"""

import csv
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .core import TimeGrid


@dataclass(frozen=True)
class NoiseSpec:
    """Cumulative forecast-noise magnitude (degC added per step) and seed."""

    sigma: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


@dataclass(frozen=True)
class ExogStep:
    """Exogenous values for one control step, plus the values at the step's
    end boundary (used to assemble the next observation)."""

    tau: float
    outdoor: float
    solar: float          # W/m^2
    internal_gain: float  # W
    price: float          # EUR/kWh
    setpoint: float       # degC
    tau_next: float
    outdoor_next: float
    price_next: float
    setpoint_next: float


@dataclass
class ScenarioTraces:
    """Aligned per-step series on a common grid."""

    grid: TimeGrid
    price: np.ndarray
    outdoor: np.ndarray
    outdoor_forecast: np.ndarray
    setpoint: np.ndarray
    solar: np.ndarray
    internal: np.ndarray

    def __post_init__(self):
        n = self.grid.n_steps
        for name in ("price", "outdoor", "outdoor_forecast", "setpoint", "solar", "internal"):
            series = np.asarray(getattr(self, name), dtype=float)
            if series.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            if not np.all(np.isfinite(series)):
                raise ValueError(f"{name} contains non-finite values")
            setattr(self, name, series)

    def step_slice(self, t: int) -> ExogStep:
        """Values governing step t -> t+1. Boundary values are clamped at the
        last step so an episode can end on the final grid entry."""
        if not 0 <= t < self.grid.n_steps:
            raise IndexError(f"step {t} outside grid")
        nxt = min(t + 1, self.grid.n_steps - 1)
        return ExogStep(
            tau=self.grid.hour_of(t),
            outdoor=float(self.outdoor[t]),
            solar=float(self.solar[t]),
            internal_gain=float(self.internal[t]),
            price=float(self.price[t]),
            setpoint=float(self.setpoint[t]),
            tau_next=self.grid.hour_of(t + 1),
            outdoor_next=float(self.outdoor[nxt]),
            price_next=float(self.price[nxt]),
            setpoint_next=float(self.setpoint[nxt]),
        )


def square_wave_price(grid: TimeGrid, low: float, high: float,
                      period_h: float = 12.0, phase_h: float = 0.0) -> np.ndarray:
    """Synthetic price profile alternating low/high every half period."""
    if period_h <= 0:
        raise ValueError("period_h must be positive")
    if low > high:
        raise ValueError("low must not exceed high")
    elapsed = grid.start_hour + np.arange(grid.n_steps) * grid.step_hours + phase_h
    in_first_half = np.mod(elapsed, period_h) < period_h / 2.0
    return np.where(in_first_half, low, high).astype(float)


def load_csv_trace(path, grid: TimeGrid, timestamp_col: str = "timestamp",
                   value_col: str = "value") -> np.ndarray:
    """Load a timestamped series (e.g. day-ahead prices) onto the grid.

    Rows are sorted by timestamp and must then be evenly spaced with no gaps
    or duplicates. A spacing that is an integer multiple of the grid step is
    filled by repeating each value (hourly prices over a 30-minute grid repeat
    twice); finer spacing is rejected. The series must cover grid.n_steps.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or timestamp_col not in reader.fieldnames \
                or value_col not in reader.fieldnames:
            raise ValueError(f"CSV needs '{timestamp_col}' and '{value_col}' columns")
        for line in reader:
            try:
                stamp = datetime.fromisoformat(line[timestamp_col].strip())
            except ValueError as exc:
                raise ValueError(f"bad timestamp {line[timestamp_col]!r}") from exc
            try:
                value = float(line[value_col])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"non-numeric value {line[value_col]!r}") from exc
            rows.append((stamp, value))
    if not rows:
        raise ValueError("CSV contains no data rows")
    rows.sort(key=lambda r: r[0])
    stamps = [r[0] for r in rows]
    diffs = {(b - a).total_seconds() for a, b in zip(stamps, stamps[1:])}
    if 0.0 in diffs:
        raise ValueError("duplicate timestamps")
    if len(diffs) > 1:
        raise ValueError("uneven timestamp spacing (gaps?)")
    step_s = grid.step_hours * 3600.0
    if len(rows) == 1:
        spacing = step_s  # single row: spacing unconstrained, treat as grid-spaced
    else:
        spacing = diffs.pop()
    ratio = spacing / step_s
    repeat = int(round(ratio))
    if repeat < 1 or abs(ratio - repeat) > 1e-9:
        raise ValueError(f"row spacing {spacing}s is not an integer multiple of the grid step")
    values = np.repeat([v for _, v in rows], repeat)
    if len(values) < grid.n_steps:
        raise ValueError(f"series covers {len(values)} steps, grid needs {grid.n_steps}")
    return values[: grid.n_steps].astype(float)


def synth_weather(grid: TimeGrid, mean: float, amplitude: float,
                  coldest_hour: float = 6.0, seed: int = 0,
                  noise_std: float = 0.3) -> np.ndarray:
    """Daily sinusoid around `mean` with minimum at `coldest_hour`, plus white
    noise, clipped to the nominal outdoor range [-10, 20] degC."""
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    hours = grid.hours()
    base = mean - amplitude * np.cos(2.0 * np.pi * (hours - coldest_hour) / 24.0)
    if noise_std > 0:
        base = base + np.random.default_rng(seed).normal(0.0, noise_std, grid.n_steps)
    return np.clip(base, -10.0, 20.0)


def cumulative_noise(series_true: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Emulate forecast error that accumulates with lead time.

    The error starts at 0 and random-walks: each step adds sigma * |eta| with
    a fair coin sign, eta standard normal. Since sign*|eta| is again standard
    normal, Var(error at lead t) = t * sigma^2.
    """
    series_true = np.asarray(series_true, dtype=float)
    n = len(series_true)
    error = np.zeros(n)
    if n > 1 and spec.sigma > 0:
        rng = np.random.default_rng(spec.seed)
        signs = rng.integers(0, 2, size=n - 1) * 2 - 1
        magnitudes = np.abs(rng.standard_normal(n - 1))
        error[1:] = np.cumsum(signs * magnitudes * spec.sigma)
    return series_true + error


def setpoint_schedule(grid: TimeGrid, day_temp: float, night_temp: float,
                      day_start_h: float = 7.0, day_end_h: float = 22.0) -> np.ndarray:
    """Rectangular day/night setpoint schedule."""
    for temp in (day_temp, night_temp):
        if not 15.0 <= temp <= 25.0:
            raise ValueError("setpoints must lie within [15, 25] degC")
    hours = grid.hours()
    is_day = (hours >= day_start_h) & (hours < day_end_h)
    return np.where(is_day, day_temp, night_temp).astype(float)


def solar_irradiance(grid: TimeGrid, peak_w_m2: float = 350.0,
                     sunrise_h: float = 8.5, sunset_h: float = 17.0) -> np.ndarray:
    """Clear-sky daytime bell (sin^2 between sunrise and sunset), zero at night."""
    hours = grid.hours()
    daylight = sunset_h - sunrise_h
    frac = (hours - sunrise_h) / daylight
    bell = np.where((frac >= 0.0) & (frac <= 1.0), np.sin(np.pi * np.clip(frac, 0, 1)) ** 2, 0.0)
    return peak_w_m2 * bell


def internal_gains(grid: TimeGrid, base_w: float = 200.0, evening_bump_w: float = 300.0,
                   evening_start_h: float = 18.0, evening_end_h: float = 22.0) -> np.ndarray:
    """Constant occupancy/appliance gains plus an evening bump."""
    hours = grid.hours()
    bump = (hours >= evening_start_h) & (hours < evening_end_h)
    return base_w + np.where(bump, evening_bump_w, 0.0)


def write_traces_csv(traces: ScenarioTraces, path) -> None:
    """Dump all series of a scenario as one CSV (step index, hour, series...)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "hour", "price", "outdoor", "outdoor_forecast",
                         "setpoint", "solar", "internal"])
        for t in range(traces.grid.n_steps):
            writer.writerow([t, repr(traces.grid.hour_of(t)), repr(float(traces.price[t])),
                             repr(float(traces.outdoor[t])),
                             repr(float(traces.outdoor_forecast[t])),
                             repr(float(traces.setpoint[t])), repr(float(traces.solar[t])),
                             repr(float(traces.internal[t]))])
