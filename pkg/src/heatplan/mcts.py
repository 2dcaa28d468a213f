"""Tree search over the forecaster-simulated building.

The simulated decision process is deterministic and fully observable: a state
is (time of day, room temperature, estimated mass temperature) plus the
sliding window the forecaster needs; transitions are single forecaster steps;
rewards are normalized to [0, 1] before any tree arithmetic.

Two selection rules share the machinery:
  vanilla    - score = Q + alpha * sqrt(N(x)) / (1 + N(x, u))
  alphazero  - score = Q + P(x, u) * alpha * sqrt(N(x)) / (1 + N(x, u))
with P a learned prior over actions. Backups discount along the traversed
path and divide by the remaining path length, which keeps every Q inside
[0, 1]. Everything is deterministic: ties break toward the lowest action
index, and no randomness enters the search itself.
"""

from dataclasses import dataclass, field

import numpy as np

from .building import BackupBand
from .core import ACTIONS, ComfortWeights, RewardNormalizer, normalize_reward, reward
from .forecaster import Forecaster
from .nn import Adam, LayerSpec, Network, cross_entropy_loss, init_network

ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}

SEARCH_MODES = ("vanilla", "alphazero")


@dataclass(frozen=True)
class SearchConfig:
    n_simulations: int = 500
    max_depth: int = 24
    alpha: float = 1.0
    gamma: float = 0.97
    band: BackupBand = field(default_factory=BackupBand)

    def __post_init__(self):
        if self.n_simulations < 1:
            raise ValueError("n_simulations must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


class SimState:
    """A simulated building state: observable pair plus the forecaster's
    latent mass estimate and the window that produced it."""

    __slots__ = ("tau", "room", "mass", "z", "offset", "window")

    def __init__(self, tau, room, mass, z, offset, window):
        self.tau = tau
        self.room = room
        self.mass = mass
        self.z = z
        self.offset = offset  # index into the environment's forecast arrays
        self.window = window


def allowed_actions(room_temp: float, setpoint: float, band: BackupBand):
    """Backup-rule pruning: forced full power below the band, forced off
    above it, the full discrete set inside."""
    if room_temp < setpoint - band.below:
        return (1.0,)
    if room_temp > setpoint + band.above:
        return (0.0,)
    return ACTIONS


class SimulatedEnv:
    """Deterministic planning environment over a forecast horizon.

    The exogenous arrays (hour of day, forecast outdoor temperature, price,
    setpoint) are indexed by SimState.offset. The forecaster is only read;
    many environments can share one frozen model.
    """

    def __init__(self, model: Forecaster, tau_seq, outdoor_seq, price_seq,
                 setpoint_seq, normalizer: RewardNormalizer, weights: ComfortWeights,
                 band: BackupBand, step_hours: float = 0.5):
        self.model = model
        self.tau_seq = np.asarray(tau_seq, dtype=float)
        self.outdoor_seq = np.asarray(outdoor_seq, dtype=float)
        self.price_seq = np.asarray(price_seq, dtype=float)
        self.setpoint_seq = np.asarray(setpoint_seq, dtype=float)
        n = len(self.tau_seq)
        if any(len(s) != n for s in (self.outdoor_seq, self.price_seq, self.setpoint_seq)):
            raise ValueError("exogenous sequences must share one length")
        self.n_steps = n
        self.normalizer = normalizer
        self.weights = weights
        self.band = band
        self.step_hours = step_hours

    def root_state(self, window, offset: int = 0) -> SimState:
        window = np.asarray(window, dtype=float)
        z, mass = self.model.encode(window)
        return SimState(tau=float(self.tau_seq[offset]), room=float(window[-1, 0]),
                        mass=mass, z=z, offset=offset, window=window)

    def allowed(self, state: SimState):
        return allowed_actions(state.room, float(self.setpoint_seq[state.offset]),
                               self.band)

    def transition(self, state: SimState, u: float):
        """Apply one action; returns (next state, power W, normalized reward)."""
        k = state.offset
        room, power, z_next, mass_next, window_next = self.model.single_step(
            state.window, self.tau_seq[k], self.outdoor_seq[k], u, z=state.z)
        raw = reward(power, float(self.price_seq[k]), self.step_hours,
                     float(self.setpoint_seq[k]), room, self.weights)
        next_state = SimState(tau=float(self.tau_seq[k + 1]) if k + 1 < self.n_steps
                              else (state.tau + self.step_hours) % 24.0,
                              room=room, mass=mass_next, z=z_next, offset=k + 1,
                              window=window_next)
        return next_state, power, normalize_reward(raw, self.normalizer)

    def features(self, state: SimState) -> np.ndarray:
        """Normalized prior-network inputs for a state."""
        s = self.model.config.scales
        k = state.offset
        angle = 2.0 * np.pi * state.tau / 24.0
        return np.array([np.sin(angle), np.cos(angle), s.temp_norm(state.room),
                         s.latent_norm(state.mass), s.out_norm(self.outdoor_seq[k]),
                         s.price_norm(self.price_seq[k]),
                         s.temp_norm(self.setpoint_seq[k])])


class TreeNode:
    __slots__ = ("state", "depth", "visits", "actions", "edge_visits", "edge_q",
                 "edge_prior", "edge_reward", "children", "expanded", "terminal")

    def __init__(self, state: SimState, depth: int):
        self.state = state
        self.depth = depth
        self.visits = 0
        self.actions = ()
        self.edge_visits = None
        self.edge_q = None
        self.edge_prior = None
        self.edge_reward = None
        self.children = []
        self.expanded = False
        self.terminal = False


def unit_prior(features, action_indices):
    """The degenerate prior that multiplies exploration by exactly 1,
    reducing the alphazero rule to the vanilla one."""
    return np.ones(len(action_indices))


def select_edge(node: TreeNode, config: SearchConfig, mode: str) -> int:
    """Pick the edge maximizing value + (prior-weighted) exploration score.
    np.argmax returns the first maximum, i.e. the lowest action index."""
    explore = config.alpha * np.sqrt(node.visits) / (1.0 + node.edge_visits)
    if mode == "alphazero":
        explore = node.edge_prior * explore
    return int(np.argmax(node.edge_q + explore))


def expand(node: TreeNode, env: SimulatedEnv, config: SearchConfig, mode: str,
           prior_fn) -> None:
    """Create one child per allowed action, each via one forecaster step.
    Edge values start at the normalized immediate reward; the first backup
    through an edge replaces that initialization (its visit count is 0)."""
    if node.expanded or node.terminal:
        raise ValueError("node already expanded or terminal")
    if node.depth >= config.max_depth or node.state.offset >= env.n_steps:
        node.terminal = True
        node.visits = max(node.visits, 1)
        return
    actions = env.allowed(node.state)
    n = len(actions)
    node.actions = actions
    node.edge_visits = np.zeros(n)
    node.edge_q = np.empty(n)
    node.edge_reward = np.empty(n)
    node.children = []
    for i, u in enumerate(actions):
        child_state, _, r_norm = env.transition(node.state, u)
        node.edge_q[i] = r_norm
        node.edge_reward[i] = r_norm
        node.children.append(TreeNode(child_state, node.depth + 1))
    if mode == "alphazero":
        idx = [ACTION_INDEX[u] for u in actions]
        node.edge_prior = np.asarray(prior_fn(env.features(node.state), idx),
                                     dtype=float)
        if node.edge_prior.shape != (n,):
            raise ValueError("prior function must return one value per allowed action")
    else:
        node.edge_prior = np.ones(n)
    node.expanded = True
    node.visits = 1


def backpropagate(path, config: SearchConfig) -> None:
    """Update Q and visit counts along a root-to-leaf path.

    path holds (node, edge index) pairs from the root downwards. The
    discounted return from each edge onward is divided by the number of
    remaining steps, so Q stays within [0, 1] for rewards in [0, 1].
    """
    length = len(path)
    if length < 1:
        raise ValueError("path must contain at least one edge")
    g = 0.0
    for k in range(length - 1, -1, -1):
        node, i = path[k]
        g = node.edge_reward[i] + config.gamma * g if k < length - 1 else node.edge_reward[i]
        remaining = length - k
        n = node.edge_visits[i]
        node.edge_q[i] = (n * node.edge_q[i] + g / remaining) / (n + 1.0)
        node.edge_visits[i] = n + 1.0
        node.visits += 1


@dataclass
class SearchResult:
    action: float
    visit_distribution: np.ndarray  # over the full discrete action set
    root: TreeNode
    n_simulations: int


def search(root_state: SimState, env: SimulatedEnv, config: SearchConfig,
           mode: str = "vanilla", prior_fn=None) -> SearchResult:
    """Build a tree from `root_state` and return the most-visited root action.

    Ties break first toward higher Q, then toward the lower action index.
    In alphazero mode a prior function (features, allowed action indices) ->
    weights must be supplied; vanilla ignores it and uses the constant 1.
    """
    if mode not in SEARCH_MODES:
        raise ValueError(f"mode must be one of {SEARCH_MODES}")
    if mode == "alphazero" and prior_fn is None:
        raise ValueError("alphazero mode requires a prior function")
    root = TreeNode(root_state, depth=0)
    expand(root, env, config, mode, prior_fn)
    if root.terminal:
        raise ValueError("root state admits no planning step")

    for _ in range(config.n_simulations):
        node = root
        path = []
        while node.expanded:
            i = select_edge(node, config, mode)
            path.append((node, i))
            node = node.children[i]
        if not node.terminal:
            expand(node, env, config, mode, prior_fn)
        else:
            node.visits += 1
        backpropagate(path, config)

    order = np.lexsort((np.arange(len(root.actions)), -root.edge_q, -root.edge_visits))
    best = int(order[0])
    dist = np.zeros(len(ACTIONS))
    total = root.edge_visits.sum()
    if total > 0:
        for i, u in enumerate(root.actions):
            dist[ACTION_INDEX[u]] = root.edge_visits[i] / total
    return SearchResult(action=root.actions[best], visit_distribution=dist,
                        root=root, n_simulations=config.n_simulations)


def collect_prior_samples(day_windows, env_factory, config: SearchConfig,
                          step_stride: int = 1):
    """Generate prior-training samples from simulated days.

    For each starting history window, the matching environment (from
    `env_factory(day_index)`) is rolled forward by applying the vanilla
    search's chosen action at every decision step; each step contributes one
    (features, root visit distribution) sample. `step_stride` > 1 keeps every
    stride-th sample but still simulates every step.
    """
    features, targets = [], []
    for day_idx, window in enumerate(day_windows):
        env = env_factory(day_idx)
        state = env.root_state(window)
        step_idx = 0
        while state.offset < env.n_steps:
            result = search(state, env, config, mode="vanilla")
            if step_idx % step_stride == 0:
                features.append(env.features(state))
                targets.append(result.visit_distribution)
            state, _, _ = env.transition(state, result.action)
            step_idx += 1
    if not features:
        return np.zeros((0, 7)), np.zeros((0, len(ACTIONS)))
    return np.array(features), np.array(targets)


def train_prior(features: np.ndarray, targets: np.ndarray, seed: int,
                epochs: int = 150, lr: float = 1e-3, batch_size: int = 64) -> Network:
    """Fit the prior policy network (7 -> 64 -> 32 -> softmax over actions)
    to visit distributions with cross entropy. Deterministic given the seed."""
    if len(features) == 0:
        raise ValueError("prior training needs at least one sample")
    rng = np.random.default_rng(seed)
    net = init_network([LayerSpec(7, 64, "relu"), LayerSpec(64, 32, "relu"),
                        LayerSpec(32, len(ACTIONS), "softmax")], rng)
    opt = Adam(lr=lr)
    n = len(features)
    batch = min(batch_size, n)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch):
            sel = order[lo: lo + batch]
            out, cache = net.forward(features[sel])
            _, grad = cross_entropy_loss(out, targets[sel])
            grads, _ = net.backward(cache, grad)
            opt.step(net.params(), [g for pair in grads for g in pair])
    return net


def prior_from_network(net: Network):
    """Wrap a trained policy network as a prior over the allowed actions,
    renormalized so the stored priors sum to 1."""

    def prior_fn(features, action_indices):
        probs, _ = net.forward(features)
        sub = probs[list(action_indices)]
        total = sub.sum()
        if total <= 0.0:
            return np.full(len(action_indices), 1.0 / len(action_indices))
        return sub / total

    return prior_fn


def tree_to_dict(node: TreeNode) -> dict:
    """JSON-ready dump of a search tree for offline inspection."""
    blob = {
        "tau": node.state.tau,
        "room_temp": node.state.room,
        "mass_temp": node.state.mass,
        "depth": node.depth,
        "visits": int(node.visits),
        "terminal": node.terminal,
        "edges": [],
    }
    if node.expanded:
        for i, u in enumerate(node.actions):
            blob["edges"].append({
                "action": u,
                "visits": int(node.edge_visits[i]),
                "q": float(node.edge_q[i]),
                "prior": float(node.edge_prior[i]),
                "reward": float(node.edge_reward[i]),
                "child": tree_to_dict(node.children[i]),
            })
    return blob
