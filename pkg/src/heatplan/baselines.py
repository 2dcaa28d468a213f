"""Rule-based reference controllers. All are pure functions of the current
room temperature and setpoint; boundary comparisons are strict, with equality
falling through to the next branch."""

from .core import ObservableState


def bang_bang(room_temp: float, setpoint: float) -> float:
    """Full power strictly below the setpoint, off otherwise."""
    return 1.0 if room_temp < setpoint else 0.0


def discrete_rule(room_temp: float, setpoint: float) -> float:
    """Five-level rule keyed to the temperature deficit."""
    if room_temp > setpoint:
        return 0.0
    if room_temp > setpoint - 0.05:
        return 0.25
    if room_temp > setpoint - 0.15:
        return 0.5
    if room_temp > setpoint - 0.25:
        return 0.75
    return 1.0


def continuous_rule(room_temp: float, setpoint: float) -> float:
    """Proportional rule: twice the positive deficit, saturated at 1."""
    return min(2.0 * max(setpoint - room_temp, 0.0), 1.0)


CONTROLLERS = {
    "bangbang": bang_bang,
    "discrete": discrete_rule,
    "continuous": continuous_rule,
}


def controller_by_name(name: str):
    """Episode-loop adapter for a named rule, matching the
    (observation, history) -> action controller signature."""
    try:
        rule = CONTROLLERS[name]
    except KeyError:
        raise ValueError(f"unknown controller {name!r}; choose from {sorted(CONTROLLERS)}")

    def controller(obs: ObservableState, history) -> float:
        return rule(obs.room_temp, obs.setpoint)

    return controller
