"""Experiment configuration: defaults, JSON loading with section-wise
overrides, canonical hashing, and builders that turn config sections into
live objects (simulator parameters, traces, forecaster/search settings)."""

import copy
import hashlib
import json

import numpy as np

from .building import BackupBand, EnvParams
from .core import ComfortWeights, TimeGrid
from .forecaster import ForecasterConfig
from .mcts import SearchConfig
from .scenario import (NoiseSpec, ScenarioTraces, cumulative_noise, internal_gains,
                       load_csv_trace, setpoint_schedule, solar_irradiance,
                       square_wave_price, synth_weather)

DEFAULT_CONFIG = {
    "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    "output_dir": "results",
    "workers": 2,
    "scenario": {
        "scenario_seed": 1234,
        "step_hours": 0.5,
        "env": {
            "cap_room": 1.25e7, "cap_mass": 1.08e8, "cap_envelope": 3.24e7,
            "res_room_mass": 2.0e-3, "res_room_out": 8.0e-3,
            "res_room_env": 4.0e-3, "res_env_out": 5.0e-3,
            "solar_aperture_m2": 3.0, "max_power_w": 4000.0,
            "cop_intercept": 3.0, "cop_slope": 0.05,
            "cop_min": 1.5, "cop_max": 5.0, "internal_gain_base_w": 200.0,
        },
        "price": {"kind": "square", "low": 0.05, "high": 0.25,
                  "period_h": 12.0, "phase_h": 0.0},
        "weather": {"mean": 4.0, "amplitude": 6.0, "coldest_hour": 6.0,
                    "noise_std": 0.3},
        "setpoint": {"day": 21.0, "night": 21.0, "day_start_h": 7.0,
                     "day_end_h": 22.0},
        "solar": {"peak_w_m2": 350.0, "sunrise_h": 8.5, "sunset_h": 17.0},
        "internal": {"evening_bump_w": 300.0, "evening_start_h": 18.0,
                     "evening_end_h": 22.0},
        "forecast_noise_sigma": 0.15,
        "comfort": {"below": 0.5, "above": 0.1},
    },
    "forecaster": {
        "window": 24,
        "encoder_hidden": 32,
        "predictor_hidden": 64,
        "physics_weight": 1.0,
        "lr": 1e-3,
        "batch_size": 32,
        "train_updates": 1500,
        "nightly_updates": 300,
        "control_horizon_steps": 12,
        "train_days": [2, 5, 24],
        "horizons_h": [3.0, 6.0, 12.0],
        "modes": ["physics", "blackbox"],
        "eval_test_days": 6,
        "max_train_days": 14,
    },
    "search": {
        "budgets": [50, 100, 250, 500, 1000],
        "alpha_vanilla": 1.0,
        "alpha_alphazero": 3.5,
        "gamma": 0.97,
        "max_depth": 12,
        "band": {"below": 1.0, "above": 1.0},
        "prior_collect_budget": 500,
        "prior_collect_stride": 2,
        "prior_updates": 600,
        "alphazero_budgets": [25, 50, 100, 1000],
    },
    "protocol": {
        "warmup_days": 10,
        "test_days": 11,
        "retrain_daily": True,
        "warmup_controller": "discrete",
        "forecast_data_controller": "continuous",
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None) -> dict:
    """Defaults merged with the JSON file at `path` (file wins per key)."""
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            cfg = _merge(cfg, json.load(fh))
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if not cfg.get("seeds"):
        raise ValueError("config needs a nonempty seeds list")
    for key in ("budgets", "alphazero_budgets"):
        if any(b < 1 for b in cfg["search"][key]):
            raise ValueError(f"search.{key} entries must be >= 1")
    if cfg["protocol"]["warmup_days"] < 1 or cfg["protocol"]["test_days"] < 1:
        raise ValueError("protocol day counts must be >= 1")


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def child_seed(seed: int, *tags: int) -> int:
    """Deterministic derived seed for an independent random stream."""
    return int(np.random.SeedSequence((int(seed),) + tuple(int(t) for t in tags))
               .generate_state(1)[0])


# stream tags for derived seeds
TAG_WEATHER = 1
TAG_FORECAST_SERIES = 2
TAG_TRAIN_INIT = 3
TAG_RETRAIN = 4
TAG_DECISION_NOISE = 5
TAG_PRIOR_TRAIN = 6
TAG_TEST_SCENARIO = 7
TAG_EVAL_WINDOW_NOISE = 8
TAG_PRIOR_COLLECT = 9


def env_params(cfg: dict) -> EnvParams:
    return EnvParams(**cfg["scenario"]["env"])


def comfort_weights(cfg: dict) -> ComfortWeights:
    return ComfortWeights(**cfg["scenario"]["comfort"])


def backup_band(cfg: dict) -> BackupBand:
    return BackupBand(**cfg["search"]["band"])


def time_grid(cfg: dict, n_days: int) -> TimeGrid:
    step = cfg["scenario"]["step_hours"]
    return TimeGrid(start_hour=0.0, step_hours=step,
                    n_steps=int(round(n_days * 24.0 / step)))


def build_traces(cfg: dict, n_days: int, scenario_seed: int) -> ScenarioTraces:
    """Assemble all exogenous series for `n_days` from the scenario section."""
    scn = cfg["scenario"]
    grid = time_grid(cfg, n_days)
    price_cfg = scn["price"]
    if price_cfg["kind"] == "square":
        price = square_wave_price(grid, price_cfg["low"], price_cfg["high"],
                                  price_cfg["period_h"], price_cfg["phase_h"])
    elif price_cfg["kind"] == "csv":
        price = load_csv_trace(price_cfg["path"], grid,
                               price_cfg.get("timestamp_col", "timestamp"),
                               price_cfg.get("value_col", "value"))
    else:
        raise ValueError(f"unknown price kind {price_cfg['kind']!r}")
    weather = scn["weather"]
    outdoor = synth_weather(grid, weather["mean"], weather["amplitude"],
                            weather["coldest_hour"],
                            seed=child_seed(scenario_seed, TAG_WEATHER),
                            noise_std=weather["noise_std"])
    forecast = cumulative_noise(outdoor, NoiseSpec(
        sigma=scn["forecast_noise_sigma"],
        seed=child_seed(scenario_seed, TAG_FORECAST_SERIES)))
    sp = scn["setpoint"]
    setpoint = setpoint_schedule(grid, sp["day"], sp["night"],
                                 sp["day_start_h"], sp["day_end_h"])
    sol = scn["solar"]
    solar = solar_irradiance(grid, sol["peak_w_m2"], sol["sunrise_h"], sol["sunset_h"])
    gains_cfg = scn["internal"]
    internal = internal_gains(grid, base_w=scn["env"]["internal_gain_base_w"],
                              evening_bump_w=gains_cfg["evening_bump_w"],
                              evening_start_h=gains_cfg["evening_start_h"],
                              evening_end_h=gains_cfg["evening_end_h"])
    return ScenarioTraces(grid, price=price, outdoor=outdoor,
                          outdoor_forecast=forecast, setpoint=setpoint,
                          solar=solar, internal=internal)


def forecaster_config(cfg: dict, mode: str) -> ForecasterConfig:
    fc = cfg["forecaster"]
    return ForecasterConfig(window=fc["window"], encoder_hidden=fc["encoder_hidden"],
                            predictor_hidden=fc["predictor_hidden"], mode=mode,
                            physics_weight=fc["physics_weight"], lr=fc["lr"],
                            batch_size=fc["batch_size"],
                            step_hours=cfg["scenario"]["step_hours"])


def search_config(cfg: dict, budget: int, search_mode: str) -> SearchConfig:
    sc = cfg["search"]
    alpha = sc["alpha_alphazero"] if search_mode == "alphazero" else sc["alpha_vanilla"]
    return SearchConfig(n_simulations=budget, max_depth=sc["max_depth"],
                        alpha=alpha, gamma=sc["gamma"], band=backup_band(cfg))


def epochs_for_updates(n_samples: int, batch_size: int, updates: int) -> int:
    """Epochs needed so total Adam updates come close to the requested budget,
    keeping optimization effort comparable across dataset sizes."""
    batches_per_epoch = max(1, int(np.ceil(n_samples / batch_size)))
    return max(1, int(round(updates / batches_per_epoch)))
