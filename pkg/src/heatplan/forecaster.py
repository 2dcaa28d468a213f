"""Multi-step thermal forecaster: an encoder compresses a sliding window of
past (room temperature, power) pairs into a scalar latent interpreted as the
building mass temperature; a predictor maps (latent, current observation,
time-of-day encoding, outdoor temperature, action) to the next room
temperature and electrical power. Rollouts re-encode after every predicted
step, feeding predictions back into the window.

Two training modes share one code path:
  "physics"  - adds a penalty steering the latent along the first-order mass
               dynamics  T_m[t+1] = T_m[t] + theta * (T_r[t] - T_m[t]),
               with theta = dt / (C_m * R_rm) a trainable positive scalar.
  "blackbox" - regression loss only; the physics coefficient is never read
               or updated.

Gradients flow through the whole autoregressive chain, including every
re-encoding, with physics targets treated as constants (theta's own gradient
is taken through the target recursion, its only path).

Checkpoint format ("heatplan-forecaster", version 1): JSON object with mode,
window length, training horizon, step length, latent scaling, value ranges,
the raw physics coefficient, and the two embedded network checkpoints.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .core import ValueRanges
from .nn import Adam, LayerSpec, Network, init_network, network_from_dict, network_to_dict

MODES = ("physics", "blackbox")


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    return float(np.log(np.expm1(y)))


_THETA_RAW_MIN = _softplus_inv(1e-6)
_THETA_RAW_MAX = _softplus_inv(1.0 - 1e-6)


@dataclass(frozen=True)
class Scales:
    """Affine maps between physical units and network units."""

    temp_center: float = 20.0
    temp_halfspan: float = 5.0
    power_max: float = 4000.0
    out_center: float = 5.0
    out_halfspan: float = 15.0
    price_halfspan: float = 0.4
    latent_center: float = 20.0
    latent_halfspan: float = 10.0

    @classmethod
    def from_ranges(cls, ranges: ValueRanges, latent_center=20.0, latent_halfspan=10.0):
        t_lo, t_hi = ranges.room_temp
        o_lo, o_hi = ranges.outdoor_temp
        return cls(temp_center=(t_lo + t_hi) / 2.0, temp_halfspan=(t_hi - t_lo) / 2.0,
                   power_max=ranges.power[1], out_center=(o_lo + o_hi) / 2.0,
                   out_halfspan=(o_hi - o_lo) / 2.0, price_halfspan=ranges.price[1],
                   latent_center=latent_center, latent_halfspan=latent_halfspan)

    def temp_norm(self, t):
        return (t - self.temp_center) / self.temp_halfspan

    def temp_phys(self, y):
        return self.temp_center + self.temp_halfspan * y

    def power_norm(self, p):
        return p / self.power_max

    def out_norm(self, t):
        return (t - self.out_center) / self.out_halfspan

    def price_norm(self, p):
        return p / self.price_halfspan

    def latent_temp(self, z):
        return self.latent_center + self.latent_halfspan * z

    def latent_norm(self, t):
        return (t - self.latent_center) / self.latent_halfspan


@dataclass(frozen=True)
class ForecasterConfig:
    window: int = 24
    encoder_hidden: int = 32
    predictor_hidden: int = 64
    mode: str = "physics"
    physics_weight: float = 1.0
    step_hours: float = 0.5
    theta_init: float | None = None   # default: step / (80 h mass time constant)
    lr: float = 1e-3
    batch_size: int = 32
    grad_clip: float | None = None
    scales: Scales = field(default_factory=Scales)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.physics_weight < 0:
            raise ValueError("physics_weight must be nonnegative")

    @property
    def theta_start(self) -> float:
        return self.theta_init if self.theta_init is not None else self.step_hours / 80.0


@dataclass
class WindowDataset:
    """Training/evaluation samples with a fixed horizon.

    windows[n]   : (window, 2) past (room degC, power W) pairs, newest last
    tau/outdoor  : (n, h) exogenous values during each future step
    actions      : (n, h) modulation applied at each future step
    room_meas    : (n, h) measured room temperature after step j (degC)
    power_meas   : (n, h) measured power drawn during step j (W)
    """

    windows: np.ndarray
    tau: np.ndarray
    outdoor: np.ndarray
    actions: np.ndarray
    room_meas: np.ndarray
    power_meas: np.ndarray

    def __post_init__(self):
        n, _, two = self.windows.shape
        if two != 2:
            raise ValueError("windows must have shape (n, window, 2)")
        h = self.tau.shape[1]
        for name in ("tau", "outdoor", "actions", "room_meas", "power_meas"):
            if getattr(self, name).shape != (n, h):
                raise ValueError(f"{name} must have shape ({n}, {h})")

    def __len__(self):
        return self.windows.shape[0]

    @property
    def horizon(self) -> int:
        return self.tau.shape[1]

    def subset(self, idx) -> "WindowDataset":
        return WindowDataset(self.windows[idx], self.tau[idx], self.outdoor[idx],
                             self.actions[idx], self.room_meas[idx], self.power_meas[idx])


def build_windows(room_bound, power_step, tau_step, outdoor_step, action_step,
                  window: int, horizon: int, stride: int = 1) -> WindowDataset:
    """Cut stride-1 (by default) training samples out of an episode log.

    room_bound has one more entry than the per-step series: room_bound[i] is
    the room temperature at step boundary i; power_step[i] the power drawn
    during step i. The window entry at boundary s pairs room_bound[s] with the
    power drawn during the step that ended at s.
    """
    room_bound = np.asarray(room_bound, dtype=float)
    power_step = np.asarray(power_step, dtype=float)
    tau_step = np.asarray(tau_step, dtype=float)
    outdoor_step = np.asarray(outdoor_step, dtype=float)
    action_step = np.asarray(action_step, dtype=float)
    n = len(power_step)
    if len(room_bound) != n + 1:
        raise ValueError("room_bound must have one more entry than power_step")
    anchors = list(range(window, n - horizon + 1, stride))
    if not anchors:
        raise ValueError(f"series too short: need at least {window + horizon} steps")
    power_end = np.concatenate([[0.0], power_step])  # power ending at boundary s
    wins = np.stack([np.stack([room_bound[t - window + 1: t + 1],
                               power_end[t - window + 1: t + 1]], axis=1)
                     for t in anchors])
    idx = np.array(anchors)
    gather = lambda series: np.stack([series[t: t + horizon] for t in idx])
    return WindowDataset(windows=wins, tau=gather(tau_step), outdoor=gather(outdoor_step),
                         actions=gather(action_step),
                         room_meas=np.stack([room_bound[t + 1: t + horizon + 1] for t in idx]),
                         power_meas=gather(power_step))


def series_from_records(records):
    """Extract the aligned series build_windows needs from StepRecords."""
    room_bound = [r.obs.room_temp for r in records] + [records[-1].room_next]
    power_step = [r.power_w for r in records]
    tau_step = [r.obs.tau for r in records]
    outdoor_step = [r.obs.outdoor_temp for r in records]
    action_step = [r.u_applied for r in records]
    return (np.array(room_bound), np.array(power_step), np.array(tau_step),
            np.array(outdoor_step), np.array(action_step))


class Forecaster:
    """Encoder + predictor pair with the physics coefficient.

    A frozen instance is safe to read concurrently; training mutates in place.
    """

    def __init__(self, config: ForecasterConfig, encoder: Network, predictor: Network,
                 theta_raw: np.ndarray, train_horizon: int | None = None):
        self.config = config
        self.encoder = encoder
        self.predictor = predictor
        self.theta_raw = theta_raw  # shape (1,); theta = softplus(theta_raw)
        self.train_horizon = train_horizon

    # -- construction ------------------------------------------------------

    @classmethod
    def create(cls, config: ForecasterConfig, rng: np.random.Generator) -> "Forecaster":
        encoder = init_network([
            LayerSpec(config.window * 2, config.encoder_hidden, "relu"),
            LayerSpec(config.encoder_hidden, 1, "tanh"),
        ], rng)
        predictor = init_network([
            LayerSpec(7, config.predictor_hidden, "relu"),
            LayerSpec(config.predictor_hidden, 2, ("tanh", "relu")),
        ], rng)
        theta_raw = np.array([_softplus_inv(config.theta_start)])
        return cls(config, encoder, predictor, theta_raw)

    @property
    def theta(self) -> float:
        return float(_softplus(self.theta_raw[0]))

    def params(self) -> list:
        return self.encoder.params() + self.predictor.params() + [self.theta_raw]

    def copy(self) -> "Forecaster":
        return Forecaster(self.config, self.encoder.copy(), self.predictor.copy(),
                          self.theta_raw.copy(), self.train_horizon)

    # -- forward machinery ---------------------------------------------------

    def _norm_windows(self, wins):
        s = self.config.scales
        flat = np.empty((wins.shape[0], wins.shape[1] * 2))
        flat[:, 0::2] = s.temp_norm(wins[:, :, 0])
        flat[:, 1::2] = s.power_norm(wins[:, :, 1])
        return flat

    def _features(self, z2d, wins, tau, outdoor, action):
        s = self.config.scales
        angle = 2.0 * np.pi * np.asarray(tau) / 24.0
        return np.column_stack([
            z2d[:, 0],
            s.temp_norm(wins[:, -1, 0]),
            s.power_norm(wins[:, -1, 1]),
            np.sin(angle),
            np.cos(angle),
            s.out_norm(np.asarray(outdoor)),
            np.asarray(action, dtype=float),
        ])

    def _step_batch(self, wins, tau, outdoor, action, z_known=None):
        """One autoregressive step for a batch of physical-unit windows.

        Returns (next windows, room_next degC, power_next W, z, caches).
        `z_known` skips the encoder pass when the caller already holds the
        latent of exactly these windows (the tree search caches it); it must
        come from the same single-sample encode path to stay bit-identical.
        """
        s = self.config.scales
        if z_known is None:
            flat = self._norm_windows(wins)
            z2d, enc_cache = self.encoder.forward(flat)
        else:
            z2d = np.asarray(z_known, dtype=float).reshape(-1, 1)
            enc_cache = None
        feats = self._features(z2d, wins, tau, outdoor, action)
        out, pred_cache = self.predictor.forward(feats)
        y_temp = out[:, 0]
        y_energy = np.minimum(out[:, 1], 1.0)
        clip_mask = out[:, 1] < 1.0
        room_next = s.temp_phys(y_temp)
        power_next = s.power_max * y_energy
        next_wins = np.concatenate(
            [wins[:, 1:, :], np.stack([room_next, power_next], axis=1)[:, None, :]], axis=1)
        caches = (enc_cache, pred_cache, y_temp, y_energy, clip_mask)
        return next_wins, room_next, power_next, z2d[:, 0], caches

    def encode(self, window):
        """Latent and implied mass temperature for one window or a batch."""
        window = np.asarray(window, dtype=float)
        single = window.ndim == 2
        wins = window[None] if single else window
        if wins.shape[1] != self.config.window:
            raise ValueError(f"window must cover {self.config.window} steps")
        z2d, _ = self.encoder.forward(self._norm_windows(wins))
        z = z2d[:, 0]
        mass = self.config.scales.latent_temp(z)
        if single:
            return float(z[0]), float(mass[0])
        return z, mass

    def single_step(self, window, tau, outdoor, action, z=None):
        """Predict one step ahead from one physical-unit window.

        Returns (room_next, power_next, z_next, mass_next, next_window).
        The next window already contains the prediction as its newest entry.
        Passing `z` (the latent of this exact window) skips one encoder pass.
        """
        wins = np.asarray(window, dtype=float)[None]
        next_wins, room_next, power_next, _, _ = self._step_batch(
            wins, [tau], [outdoor], [action], z_known=None if z is None else [z])
        z_next, _ = self.encoder.forward(self._norm_windows(next_wins))
        z_val = float(z_next[0, 0])
        return (float(room_next[0]), float(power_next[0]), z_val,
                float(self.config.scales.latent_temp(z_val)), next_wins[0])

    def rollout(self, window, tau_seq, outdoor_seq, actions):
        """Autoregressive forecast over the given horizon.

        Returns (room degC (h,), power W (h,), mass degC (h+1,)); mass[0] is
        the encoding of the input window, later entries re-encode windows that
        contain the model's own predictions.
        """
        tau_seq = np.asarray(tau_seq, dtype=float)
        outdoor_seq = np.asarray(outdoor_seq, dtype=float)
        actions = np.asarray(actions, dtype=float)
        h = len(actions)
        if h < 1:
            raise ValueError("horizon must be >= 1")
        if len(tau_seq) != h or len(outdoor_seq) != h:
            raise ValueError("exogenous sequences must match the action horizon")
        win = np.asarray(window, dtype=float)
        if win.shape != (self.config.window, 2):
            raise ValueError(f"window must have shape ({self.config.window}, 2)")
        _, mass0 = self.encode(win)
        rooms, powers, masses = [], [], [mass0]
        for i in range(h):
            room, power, _, mass, win = self.single_step(win, tau_seq[i],
                                                         outdoor_seq[i], actions[i])
            rooms.append(room)
            powers.append(power)
            masses.append(mass)
        return np.array(rooms), np.array(powers), np.array(masses)

    def rollout_batch(self, wins, tau, outdoor, actions):
        """Vectorized rollout over many windows (no gradient bookkeeping)."""
        wins = np.array(wins, dtype=float)
        h = actions.shape[1]
        rooms = np.empty((wins.shape[0], h))
        powers = np.empty((wins.shape[0], h))
        for i in range(h):
            wins, room, power, _, _ = self._step_batch(wins, tau[:, i], outdoor[:, i],
                                                       actions[:, i])
            rooms[:, i] = room
            powers[:, i] = power
        return rooms, powers

    # -- losses and gradients ------------------------------------------------

    def _forward_train(self, batch: WindowDataset):
        """Forward rollout over a batch keeping every cache for backprop."""
        h = batch.horizon
        n = len(batch)
        wins = batch.windows.copy()
        step_caches = []
        z_seq = np.empty((n, h + 1))
        y_temps = np.empty((n, h))
        y_energies = np.empty((n, h))
        for i in range(h):
            wins, _, _, z, caches = self._step_batch(wins, batch.tau[:, i],
                                                     batch.outdoor[:, i],
                                                     batch.actions[:, i])
            z_seq[:, i] = z
            y_temps[:, i] = caches[2]
            y_energies[:, i] = caches[3]
            step_caches.append(caches)
        z_final, enc_cache_final = self.encoder.forward(self._norm_windows(wins))
        z_seq[:, h] = z_final[:, 0]
        return z_seq, y_temps, y_energies, step_caches, enc_cache_final

    def _targets_from_latents(self, batch: WindowDataset, z_seq: np.ndarray):
        """Mass-recursion targets in latent units; plain values, no gradients."""
        s = self.config.scales
        h = batch.horizon
        room_hist = np.column_stack([batch.windows[:, -1, 0],
                                     batch.room_meas[:, : h - 1]])
        r_lat = s.latent_norm(room_hist)
        z_prev = z_seq[:, :h]
        return z_prev + self.theta * (r_lat - z_prev), r_lat, z_prev

    def latent_targets(self, batch: WindowDataset) -> np.ndarray:
        """Latent-unit targets of the mass recursion for each horizon step,
        computed from the current model state."""
        z_seq, _, _, _, _ = self._forward_train(batch)
        targets, _, _ = self._targets_from_latents(batch, z_seq)
        return targets

    def loss_and_grads(self, batch: WindowDataset, z_targets: np.ndarray | None = None):
        """Loss over one batch plus gradients for every parameter.

        Returns (total, reg, phys, grads) where grads aligns with params().
        Losses are means over (sample, horizon step); the regression term sums
        both normalized outputs, the physics term compares latents against the
        constant targets of the mass recursion. Targets are recomputed from
        the current model unless `z_targets` pins them (then the physics
        coefficient, whose only influence is through the targets, gets a zero
        gradient).
        """
        s = self.config.scales
        cfg = self.config
        h = batch.horizon
        n = len(batch)
        use_physics = cfg.mode == "physics"
        scale = 1.0 / (n * h)

        temp_targets = s.temp_norm(batch.room_meas)
        power_targets = s.power_norm(batch.power_meas)
        z_seq, y_temps, y_energies, step_caches, enc_cache_final = \
            self._forward_train(batch)

        loss_reg = float(((y_temps - temp_targets) ** 2
                          + (y_energies - power_targets) ** 2).sum() * scale)

        if use_physics:
            if z_targets is not None:
                z_tgt = np.asarray(z_targets, dtype=float)
                theta_grad = np.zeros(1)  # pinned targets carry no theta dependence
            else:
                z_tgt, r_lat, z_prev = self._targets_from_latents(batch, z_seq)
            resid = z_seq[:, 1:] - z_tgt
            loss_phys = float((resid ** 2).sum() * scale)
            if z_targets is None:
                d_theta = -2.0 * cfg.physics_weight * scale * float(
                    (resid * (r_lat - z_prev)).sum())
                sigmoid = 1.0 / (1.0 + np.exp(-self.theta_raw[0]))
                theta_grad = np.array([d_theta * sigmoid])
        else:
            loss_phys = 0.0
            resid = None
            theta_grad = np.zeros(1)

        total = loss_reg + cfg.physics_weight * loss_phys if use_physics else loss_reg

        # -- reverse pass ----------------------------------------------------
        enc_grads = [np.zeros_like(p) for p in self.encoder.params()]
        pred_grads = [np.zeros_like(p) for p in self.predictor.params()]

        def accumulate(target, grads):
            flat = [g for pair in grads for g in pair]
            for t, g in zip(target, flat):
                t += g

        def encoder_input_to_phys(g_flat):
            g = np.empty((n, cfg.window, 2))
            g[:, :, 0] = g_flat[:, 0::2] / s.temp_halfspan
            g[:, :, 1] = g_flat[:, 1::2] / s.power_max
            return g

        # final encode (latent h) only matters for the physics term
        if use_physics:
            g_z = 2.0 * cfg.physics_weight * scale * resid[:, h - 1]
        else:
            g_z = np.zeros(n)
        g_enc, g_flat = self.encoder.backward(enc_cache_final, g_z[:, None])
        accumulate(enc_grads, g_enc)
        g_win = encoder_input_to_phys(g_flat)   # dL / d window_{h} (physical units)

        for i in range(h - 1, -1, -1):
            enc_cache, pred_cache, _, _, clip_mask = step_caches[i]
            g_room_next = g_win[:, -1, 0]
            g_power_next = g_win[:, -1, 1]
            g_y_temp = (2.0 * scale * (y_temps[:, i] - temp_targets[:, i])
                        + g_room_next * s.temp_halfspan)
            g_y_energy = (2.0 * scale * (y_energies[:, i] - power_targets[:, i])
                          + g_power_next * s.power_max)
            g_out = np.column_stack([g_y_temp, g_y_energy * clip_mask])
            g_pred, g_feats = self.predictor.backward(pred_cache, g_out)
            accumulate(pred_grads, g_pred)

            g_z = g_feats[:, 0]
            if use_physics and i >= 1:
                g_z = g_z + 2.0 * cfg.physics_weight * scale * resid[:, i - 1]
            g_enc, g_flat = self.encoder.backward(enc_cache, g_z[:, None])
            accumulate(enc_grads, g_enc)

            g_prev = np.zeros((n, cfg.window, 2))
            g_prev[:, 1:, :] = g_win[:, :-1, :]
            g_prev += encoder_input_to_phys(g_flat)
            g_prev[:, -1, 0] += g_feats[:, 1] / s.temp_halfspan
            g_prev[:, -1, 1] += g_feats[:, 2] / s.power_max
            g_win = g_prev

        grads = enc_grads + pred_grads + [theta_grad]
        return total, loss_reg, loss_phys, grads


def physics_targets(mass_pred, room_meas, theta: float) -> np.ndarray:
    """Targets of the mass-temperature recursion, in degC.

    Given predicted mass temperatures and measured room temperatures at steps
    0..h-1, the target for step i+1 is mass[i] + theta * (room[i] - mass[i]).
    Targets are plain values; nothing differentiates through them.
    """
    mass_pred = np.asarray(mass_pred, dtype=float)
    room_meas = np.asarray(room_meas, dtype=float)
    if mass_pred.shape != room_meas.shape:
        raise ValueError("mass_pred and room_meas must align")
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    return mass_pred + theta * (room_meas - mass_pred)


def _clip_gradients(grads, max_norm):
    total = np.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        factor = max_norm / total
        grads = [g * factor for g in grads]
    return grads


def train_forecaster(dataset: WindowDataset, config: ForecasterConfig, epochs: int,
                     seed: int):
    """Train a fresh forecaster. Deterministic given (dataset, config, epochs,
    seed). Returns (model, per-epoch mean loss curve)."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(seed)
    model = Forecaster.create(config, rng)
    model.train_horizon = dataset.horizon
    curve = _fit(model, dataset, epochs, rng)
    return model, curve


def retrain_forecaster(model: Forecaster, dataset: WindowDataset, epochs: int,
                       seed: int):
    """Continue training an existing model in place (fresh optimizer state)."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    model.train_horizon = dataset.horizon
    curve = _fit(model, dataset, epochs, np.random.default_rng(seed))
    return model, curve


def _fit(model: Forecaster, dataset: WindowDataset, epochs: int,
         rng: np.random.Generator):
    cfg = model.config
    opt = Adam(lr=cfg.lr)
    params = model.params()
    n = len(dataset)
    batch = min(cfg.batch_size, n)
    curve = []
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, batch):
            sel = order[lo: lo + batch]
            total, _, _, grads = model.loss_and_grads(dataset.subset(sel))
            if cfg.grad_clip is not None:
                grads = _clip_gradients(grads, cfg.grad_clip)
            opt.step(params, grads)
            model.theta_raw[0] = min(max(model.theta_raw[0], _THETA_RAW_MIN),
                                     _THETA_RAW_MAX)
            losses.append(total)
        curve.append(float(np.mean(losses)))
    return curve


def evaluate_mae(model: Forecaster, dataset: WindowDataset):
    """Mean absolute rollout errors over every horizon step of every sample.
    Returns (temperature MAE in degC, power MAE in W)."""
    rooms, powers = model.rollout_batch(dataset.windows, dataset.tau,
                                        dataset.outdoor, dataset.actions)
    return (float(np.abs(rooms - dataset.room_meas).mean()),
            float(np.abs(powers - dataset.power_meas).mean()))


def save_forecaster(model: Forecaster, path) -> None:
    cfg = model.config
    blob = {
        "format": "heatplan-forecaster",
        "version": 1,
        "mode": cfg.mode,
        "window": cfg.window,
        "horizon": model.train_horizon,
        "step_hours": cfg.step_hours,
        "physics_weight": cfg.physics_weight,
        "theta_raw": float(model.theta_raw[0]),
        "scales": {k: getattr(cfg.scales, k) for k in
                   ("temp_center", "temp_halfspan", "power_max", "out_center",
                    "out_halfspan", "price_halfspan", "latent_center",
                    "latent_halfspan")},
        "encoder": network_to_dict(model.encoder),
        "predictor": network_to_dict(model.predictor),
    }
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_forecaster(path) -> Forecaster:
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != "heatplan-forecaster" or blob.get("version") != 1:
        raise ValueError("unsupported forecaster checkpoint")
    encoder = network_from_dict(blob["encoder"])
    predictor = network_from_dict(blob["predictor"])
    config = ForecasterConfig(window=blob["window"], mode=blob["mode"],
                              physics_weight=blob["physics_weight"],
                              step_hours=blob["step_hours"],
                              encoder_hidden=encoder.specs[0].out_dim,
                              predictor_hidden=predictor.specs[0].out_dim,
                              scales=Scales(**blob["scales"]))
    return Forecaster(config, encoder, predictor, np.array([blob["theta_raw"]]),
                      train_horizon=blob.get("horizon"))
