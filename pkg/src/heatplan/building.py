"""Ground-truth building simulator: a three-capacitance RC network with an
air-to-water heat pump, deliberately richer than the two-state prior the
forecaster assumes, so every trained model faces structural mismatch.

Network layout (all temperatures degC, resistances degC/W, capacitances J/degC):

    ambient --R_ra-- room --R_rm-- mass
    ambient --R_ea-- envelope --R_re-- room

Heat pump, solar and internal gains inject into the room node. The heat pump
delivers COP(T_out) * electrical power, with an affine COP clipped to a
physical band. Only the room temperature is observable; mass and envelope
stay hidden from any controller.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ComfortWeights, ObservableState, reward
from .scenario import ExogStep, ScenarioTraces

logger = logging.getLogger(__name__)

EULER_SUBSTEPS = 10


@dataclass(frozen=True)
class EnvParams:
    """Simulator constants. Defaults give time constants of roughly 4 h for
    the room node, 60 h for the mass, and 20 h for the envelope, and about
    13-15 kW thermal at full modulation around 7 degC outdoors."""

    cap_room: float = 1.25e7     # J/degC
    cap_mass: float = 1.08e8
    cap_envelope: float = 3.24e7
    res_room_mass: float = 2.0e-3   # degC/W
    res_room_out: float = 8.0e-3
    res_room_env: float = 4.0e-3
    res_env_out: float = 5.0e-3
    solar_aperture_m2: float = 3.0
    max_power_w: float = 4000.0
    cop_intercept: float = 3.0
    cop_slope: float = 0.05      # per degC of outdoor temperature
    cop_min: float = 1.5
    cop_max: float = 5.0
    internal_gain_base_w: float = 200.0

    def __post_init__(self):
        for name in ("cap_room", "cap_mass", "cap_envelope", "res_room_mass",
                     "res_room_out", "res_room_env", "res_env_out", "max_power_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def cop(self, outdoor_temp: float) -> float:
        return float(np.clip(self.cop_intercept + self.cop_slope * outdoor_temp,
                             self.cop_min, self.cop_max))


@dataclass(frozen=True)
class GroundTruthState:
    """Full hidden thermal state; controllers only ever see `room`."""

    room: float
    mass: float
    envelope: float
    step_index: int = 0


@dataclass(frozen=True)
class BackupBand:
    """Flexibility band around the setpoint before the safety rule kicks in."""

    below: float = 1.0
    above: float = 1.0

    def __post_init__(self):
        if self.below <= 0 or self.above <= 0:
            raise ValueError("band widths must be positive")


def step(state: GroundTruthState, u: float, exog: ExogStep, params: EnvParams,
         step_hours: float) -> tuple[GroundTruthState, float, ObservableState]:
    """Advance the building by one control step.

    The modulation u in [0, 1] fixes the electrical draw u * max_power_w held
    over the whole step; thermal injection is COP(T_out) times that. The ODE
    is integrated with 10 fixed forward-Euler substeps (internally in
    seconds). Returns the new hidden state, the electrical power drawn, and
    the observation at the step's end boundary.
    """
    if step_hours <= 0:
        raise ValueError("step_hours must be positive")
    power_w = u * params.max_power_w
    q_hp = params.cop(exog.outdoor) * power_w
    q_fixed = q_hp + params.solar_aperture_m2 * exog.solar + exog.internal_gain

    dt = step_hours * 3600.0 / EULER_SUBSTEPS
    t_room, t_mass, t_env = state.room, state.mass, state.envelope
    for _ in range(EULER_SUBSTEPS):
        d_room = ((t_mass - t_room) / params.res_room_mass
                  + (t_env - t_room) / params.res_room_env
                  + (exog.outdoor - t_room) / params.res_room_out
                  + q_fixed) / params.cap_room
        d_mass = ((t_room - t_mass) / params.res_room_mass) / params.cap_mass
        d_env = ((t_room - t_env) / params.res_room_env
                 + (exog.outdoor - t_env) / params.res_env_out) / params.cap_envelope
        t_room += dt * d_room
        t_mass += dt * d_mass
        t_env += dt * d_env
    if not (np.isfinite(t_room) and np.isfinite(t_mass) and np.isfinite(t_env)):
        raise ValueError("integration diverged; simulator parameters are unstable")

    new_state = GroundTruthState(t_room, t_mass, t_env, state.step_index + 1)
    obs = ObservableState(tau=exog.tau_next, room_temp=t_room, power_prev_w=power_w,
                          outdoor_temp=exog.outdoor_next, price=exog.price_next,
                          setpoint=exog.setpoint_next)
    return new_state, power_w, obs


def backup_override(obs: ObservableState, u: float, band: BackupBand) -> float:
    """Safety rule: force full heating below the band, force off above it."""
    if obs.room_temp < obs.setpoint - band.below:
        return 1.0
    if obs.room_temp > obs.setpoint + band.above:
        return 0.0
    return u


@dataclass(frozen=True)
class StepRecord:
    """One closed-loop transition: observation seen, what the controller asked
    for, what actually ran after the backup rule, and the outcome."""

    obs: ObservableState
    u_requested: float
    u_applied: float
    power_w: float
    room_next: float
    reward_raw: float


Controller = Callable[[ObservableState, list], float]


def run_episode(state: GroundTruthState, controller: Controller,
                traces: ScenarioTraces, params: EnvParams, n_steps: int,
                weights: ComfortWeights, band: BackupBand,
                start: int = 0, power_prev_w: float = 0.0,
                ) -> tuple[list[StepRecord], GroundTruthState]:
    """Run `n_steps` of the closed loop from trace index `start`.

    The controller is called with (observation, records-so-far); the backup
    rule is applied to every decision before it reaches the building. If the
    controller raises, the episode aborts and the partial trajectory is
    returned. Returns (records, final hidden state).
    """
    records: list[StepRecord] = []
    if n_steps == 0:
        return records, state
    if start + n_steps > traces.grid.n_steps:
        raise ValueError("traces do not cover the requested episode")

    first = traces.step_slice(start)
    obs = ObservableState(tau=first.tau, room_temp=state.room, power_prev_w=power_prev_w,
                          outdoor_temp=first.outdoor, price=first.price,
                          setpoint=first.setpoint)
    for t in range(start, start + n_steps):
        try:
            u_requested = float(controller(obs, records))
        except Exception:
            logger.warning("controller failed at step %d; returning partial episode",
                           t, exc_info=True)
            return records, state
        u_applied = backup_override(obs, u_requested, band)
        exog = traces.step_slice(t)
        state, power_w, obs_next = step(state, u_applied, exog, params,
                                        traces.grid.step_hours)
        raw = reward(power_w, exog.price, traces.grid.step_hours, exog.setpoint,
                     obs_next.room_temp, weights)
        records.append(StepRecord(obs=obs, u_requested=u_requested, u_applied=u_applied,
                                  power_w=power_w, room_next=obs_next.room_temp,
                                  reward_raw=raw))
        obs = obs_next
    return records, state
