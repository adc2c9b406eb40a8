"""Self-play PPO over the quantum board game.

One shared policy plays both sides; observations are role-relative, so the
trajectory of each (game, player) pair forms its own induced MDP with the
opponent folded into the environment.  Terminal rewards are +1/-1/0 on each
player's final step; everything else is zero.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import game, net, observe
from .engine import O, X
from .game import DRAW, ONGOING, O_WINS, X_WINS
from .observe import EncoderConfig


@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_ratio: float = 0.2
    lr: float = 3e-4
    epochs: int = 4
    minibatch_size: int = 256
    steps_per_update: int = 4096
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    total_steps: int = 200_000
    eval_interval: int = 20_000
    eval_games: int = 100
    hidden_sizes: tuple = (128, 128)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be positive")
        for name in ("epochs", "minibatch_size", "steps_per_update", "eval_games"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class EvalReport:
    games: int
    avg_reward: float
    x_wins: int
    o_wins: int
    draws: int
    agent_wins: int = 0
    agent_losses: int = 0

    def as_dict(self) -> dict:
        return {
            "games": self.games,
            "avg_reward": self.avg_reward,
            "x_wins": self.x_wins,
            "o_wins": self.o_wins,
            "draws": self.draws,
            "agent_wins": self.agent_wins,
            "agent_losses": self.agent_losses,
        }


# ---------------------------------------------------------------- agents

class Agent:
    """Checkpointable policy plus its own observation encoder."""

    def __init__(self, params: dict, enc_cfg: EncoderConfig, name: str = "agent"):
        self.params = params
        self.enc_cfg = enc_cfg
        self.name = name

    def act(self, gs, rng: np.random.Generator, greedy: bool = True) -> int:
        obs = observe.encode(gs, self.enc_cfg, rng)
        mask = game.legal_mask(gs)
        probs, _, _ = net.forward(self.params, obs, mask)
        return pick_action(probs[0], rng, greedy=greedy)

    @classmethod
    def from_checkpoint(cls, path, name: str = None) -> "Agent":
        params, meta = net.load_checkpoint(path)
        enc_cfg = EncoderConfig(
            mode=meta["obs_mode"],
            n_samples=meta.get("n_samples", 100),
            exact=meta.get("exact", False),
            history_norm=meta.get("history_norm", 50.0),
        )
        agent = cls(params, enc_cfg, name=name or os.path.basename(str(path)))
        agent.meta = meta
        return agent


class RandomAgent:
    """Uniform over legal actions; the evaluation yardstick."""

    name = "random"

    def act(self, gs, rng: np.random.Generator, greedy: bool = True) -> int:
        mask = game.legal_mask(gs)
        return int(rng.choice(np.flatnonzero(mask)))


def pick_action(probs: np.ndarray, rng: np.random.Generator, greedy: bool) -> int:
    if greedy:
        best = np.flatnonzero(probs == probs.max())
        return int(rng.choice(best))  # seeded tie-break
    return int(rng.choice(len(probs), p=probs))


# ---------------------------------------------------------------- GAE

def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """Standard exponentially-weighted TD recursion over one step sequence.

    dones[t] marks that the episode ended with step t; the recursion and
    the bootstrap are both cut there.  Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    gae = 0.0
    next_value = last_value
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        adv[t] = gae
        next_value = values[t]
    return adv, adv + values


# ---------------------------------------------------------------- rollouts

def terminal_rewards(result: str) -> dict:
    if result == X_WINS:
        return {X: 1.0, O: -1.0}
    if result == O_WINS:
        return {X: -1.0, O: 1.0}
    return {X: 0.0, O: 0.0}


def collect_selfplay(params: dict, version: str, enc_cfg: EncoderConfig,
                     n_steps: int, rng: np.random.Generator,
                     move_cap: int = game.DEFAULT_MOVE_CAP) -> dict:
    """Roll complete self-play games until at least n_steps are recorded.

    The shared policy acts for both players with sampled actions.  Each
    player's last step of a game carries that player's terminal reward and
    a done flag, so per-(game, player) slices are full episodes.
    """
    columns = ("obs", "mask", "action", "logp", "value", "reward", "done",
               "player", "episode")
    batch = {key: [] for key in columns}
    if n_steps == 0:
        obs_dim = observe.obs_size(enc_cfg.mode)
        return {
            "obs": np.zeros((0, obs_dim)),
            "mask": np.zeros((0, game.N_ACTIONS), dtype=bool),
            "action": np.zeros(0, dtype=np.int64),
            "logp": np.zeros(0),
            "value": np.zeros(0),
            "reward": np.zeros(0),
            "done": np.zeros(0, dtype=bool),
            "player": np.zeros(0, dtype=np.int64),
            "episode": np.zeros(0, dtype=np.int64),
        }
    episode = 0
    while len(batch["action"]) < n_steps:
        gs = game.reset(version, int(rng.integers(2**63)), move_cap=move_cap)
        last_index = {X: None, O: None}
        done = False
        while not done:
            obs = observe.encode(gs, enc_cfg, rng)
            mask = game.legal_mask(gs)
            probs, values, _ = net.forward(params, obs, mask)
            action = pick_action(probs[0], rng, greedy=False)
            mover = gs.turn
            gs, _, done = game.step(gs, action)

            last_index[mover] = len(batch["action"])
            batch["obs"].append(obs)
            batch["mask"].append(mask)
            batch["action"].append(action)
            batch["logp"].append(float(np.log(probs[0, action])))
            batch["value"].append(float(values[0]))
            batch["reward"].append(0.0)
            batch["done"].append(False)
            batch["player"].append(mover)
            batch["episode"].append(episode)
        rewards = terminal_rewards(gs.result)
        for mark, idx in last_index.items():
            if idx is not None:
                batch["reward"][idx] = rewards[mark]
                batch["done"][idx] = True
        episode += 1

    return {
        "obs": np.array(batch["obs"], dtype=np.float64),
        "mask": np.array(batch["mask"], dtype=bool),
        "action": np.array(batch["action"], dtype=np.int64),
        "logp": np.array(batch["logp"], dtype=np.float64),
        "value": np.array(batch["value"], dtype=np.float64),
        "reward": np.array(batch["reward"], dtype=np.float64),
        "done": np.array(batch["done"], dtype=bool),
        "player": np.array(batch["player"], dtype=np.int64),
        "episode": np.array(batch["episode"], dtype=np.int64),
    }


def add_advantages(batch: dict, gamma: float, lam: float) -> dict:
    """GAE per (episode, player) slice; each slice ends with a done flag."""
    n = len(batch["action"])
    adv = np.zeros(n)
    ret = np.zeros(n)
    for episode in np.unique(batch["episode"]):
        for player in (X, O):
            idx = np.flatnonzero((batch["episode"] == episode) & (batch["player"] == player))
            if len(idx) == 0:
                continue
            a, r = compute_gae(
                batch["reward"][idx], batch["value"][idx], batch["done"][idx], gamma, lam
            )
            adv[idx] = a
            ret[idx] = r
    batch["adv"] = adv
    batch["ret"] = ret
    return batch


# ---------------------------------------------------------------- PPO loss

def ppo_loss_and_grads(params: dict, mb: dict, cfg: PPOConfig):
    """Clipped-surrogate + value MSE - entropy bonus; analytic gradients.

    mb["adv"] is expected to be normalized already.  Returns (stats, grads).
    """
    obs, mask, actions = mb["obs"], mb["mask"], mb["action"]
    adv, ret, logp_old = mb["adv"], mb["ret"], mb["logp"]
    n = len(actions)
    probs, values, cache = net.forward(params, obs, mask)
    rows = np.arange(n)
    p_act = np.maximum(probs[rows, actions], 1e-300)
    logp_new = np.log(p_act)
    ratio = np.exp(logp_new - logp_old)

    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio) * adv
    surrogate = np.minimum(unclipped, clipped)
    policy_loss = -surrogate.mean()

    value_err = values - ret
    value_loss = np.mean(value_err**2)

    logp_full = np.where(probs > 0, np.log(np.maximum(probs, 1e-300)), 0.0)
    row_entropy = -(probs * logp_full).sum(axis=1)
    entropy = row_entropy.mean()

    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite PPO loss (policy={policy_loss}, value={value_loss}, entropy={entropy})"
        )

    # d(-surrogate.mean())/dlogp_new: gradient flows through the unclipped
    # branch wherever it is the active minimum; the clipped branch is flat.
    dsurr_dlogp = np.where(unclipped <= clipped, ratio * adv, 0.0)
    dlogp = -dsurr_dlogp / n
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    dlogits = dlogp[:, None] * (onehot - probs)
    # Entropy term: dH/dz_j = -p_j (log p_j + H).
    dH_dlogits = -probs * (logp_full + row_entropy[:, None])
    dlogits += (-cfg.entropy_coef / n) * dH_dlogits
    dvalues = cfg.value_coef * 2.0 * value_err / n

    grads = net.backward(params, cache, dlogits, dvalues)
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "approx_kl": float(np.mean(logp_old - logp_new)),
    }
    return stats, grads


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(params: dict, adam_state: dict, batch: dict, cfg: PPOConfig,
               rng: np.random.Generator) -> dict:
    """Epochs of shuffled minibatch Adam steps; returns mean loss stats."""
    n = len(batch["action"])
    if n == 0:
        raise ValueError("empty batch")
    batch = dict(batch)
    batch["adv"] = normalize_advantages(batch["adv"])
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "approx_kl": 0.0}
    count = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            take = perm[start:start + cfg.minibatch_size]
            mb = {k: batch[k][take] for k in ("obs", "mask", "action", "logp", "adv", "ret")}
            stats, grads = ppo_loss_and_grads(params, mb, cfg)
            net.adam_step(params, grads, adam_state, cfg.lr)
            for key in totals:
                totals[key] += stats[key]
            count += 1
    return {key: value / count for key, value in totals.items()}


# ---------------------------------------------------------------- evaluation

def play_series(agent_x, agent_o, version: str, games: int, rng: np.random.Generator,
                greedy: bool = True, move_cap: int = game.DEFAULT_MOVE_CAP):
    """Fixed-role series; returns (x_wins, o_wins, draws, results)."""
    x_wins = o_wins = draws = 0
    results = []
    for _ in range(games):
        gs = game.reset(version, int(rng.integers(2**63)), move_cap=move_cap)
        done = False
        while not done:
            agent = agent_x if gs.turn == X else agent_o
            gs, _, done = game.step(gs, agent.act(gs, rng, greedy=greedy))
        results.append(gs.result)
        if gs.result == X_WINS:
            x_wins += 1
        elif gs.result == O_WINS:
            o_wins += 1
        else:
            draws += 1
    return x_wins, o_wins, draws, results


def evaluate(agent, version: str, games: int, rng: np.random.Generator,
             opponent=None, greedy: bool = True) -> EvalReport:
    """Alternating-side series against an opponent (default uniform random)."""
    opponent = opponent or RandomAgent()
    x_wins = o_wins = draws = agent_wins = agent_losses = 0
    for index in range(games):
        agent_is_x = index % 2 == 0
        pair = (agent, opponent) if agent_is_x else (opponent, agent)
        xw, ow, dr, _ = play_series(pair[0], pair[1], version, 1, rng, greedy=greedy)
        x_wins += xw
        o_wins += ow
        draws += dr
        agent_wins += xw if agent_is_x else ow
        agent_losses += ow if agent_is_x else xw
    return EvalReport(
        games=games,
        avg_reward=(agent_wins - agent_losses) / games,
        x_wins=x_wins,
        o_wins=o_wins,
        draws=draws,
        agent_wins=agent_wins,
        agent_losses=agent_losses,
    )


def pit(agent_a, agent_b, version: str, games: int, rng: np.random.Generator,
        greedy: bool = True) -> EvalReport:
    """Head-to-head with fixed roles: agent_a plays X for every game."""
    x_wins, o_wins, draws, _ = play_series(agent_a, agent_b, version, games, rng, greedy=greedy)
    return EvalReport(
        games=games,
        avg_reward=(x_wins - o_wins) / games,
        x_wins=x_wins,
        o_wins=o_wins,
        draws=draws,
        agent_wins=x_wins,
        agent_losses=o_wins,
    )


# ---------------------------------------------------------------- training

METRICS_COLUMNS = ("step", "avg_reward_100", "x_wins", "o_wins", "draws",
                   "policy_loss", "value_loss", "entropy")


@dataclass
class TrainResult:
    params: dict
    metrics: list
    best_step: int
    best_avg_reward: float
    checkpoint_dir: str = None
    aborted: bool = False


def train(version: str, obs_mode: str, cfg: PPOConfig, out_dir=None,
          enc_cfg: EncoderConfig = None, quiet: bool = True) -> TrainResult:
    """Alternate self-play collection and PPO updates for cfg.total_steps.

    Every eval_interval steps the current policy is scored against the
    uniform-random opponent (greedy actions) and a metrics row is appended;
    checkpoints (last / best / periodic) are written when out_dir is given.
    Fully deterministic for a fixed config in this single-worker setup.
    """
    enc_cfg = enc_cfg or EncoderConfig(mode=obs_mode)
    if enc_cfg.mode != obs_mode:
        raise ValueError(f"encoder mode {enc_cfg.mode!r} != requested {obs_mode!r}")
    rng = np.random.default_rng(cfg.seed)
    params = net.init_params(observe.obs_size(obs_mode), cfg.hidden_sizes, rng)
    adam_state = net.adam_init(params)
    meta = {
        "obs_mode": obs_mode,
        "rule_version": version,
        "hidden_sizes": list(cfg.hidden_sizes),
        "n_samples": enc_cfg.n_samples,
        "exact": enc_cfg.exact,
        "history_norm": enc_cfg.history_norm,
        "seed": cfg.seed,
        "step": 0,
    }

    ckpt_dir = None
    if out_dir is not None:
        ckpt_dir = os.path.join(str(out_dir), "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)

    def save(tag, step):
        if ckpt_dir is None:
            return None
        path = os.path.join(ckpt_dir, f"{tag}.npz")
        net.save_checkpoint(path, params, {**meta, "step": step})
        return path

    metrics = []
    steps_done = 0
    next_eval = cfg.eval_interval
    best_avg = -np.inf
    best_step = 0
    aborted = False

    def run_eval(step, update_stats):
        nonlocal best_avg, best_step
        eval_rng = np.random.default_rng(int(rng.integers(2**63)))
        report = evaluate(Agent(params, enc_cfg), version, cfg.eval_games, eval_rng)
        row = {
            "step": step,
            "avg_reward_100": report.avg_reward,
            "x_wins": report.x_wins,
            "o_wins": report.o_wins,
            "draws": report.draws,
            "policy_loss": update_stats["policy_loss"],
            "value_loss": update_stats["value_loss"],
            "entropy": update_stats["entropy"],
        }
        metrics.append(row)
        if not quiet:
            print(f"step {step}: avg_reward={report.avg_reward:+.3f} "
                  f"entropy={update_stats['entropy']:.3f}")
        save("last", step)
        if report.avg_reward > best_avg:
            best_avg = report.avg_reward
            best_step = step
            save("best", step)

    last_stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "approx_kl": 0.0}
    while steps_done < cfg.total_steps:
        budget = min(cfg.steps_per_update, cfg.total_steps - steps_done)
        batch = collect_selfplay(params, version, enc_cfg, budget, rng)
        add_advantages(batch, cfg.gamma, cfg.lam)
        try:
            last_stats = ppo_update(params, adam_state, batch, cfg, rng)
        except RuntimeError:
            aborted = True  # keep the last finite parameters saved below
            break
        if any(not np.isfinite(v).all() for v in params.values()):
            aborted = True
            break
        steps_done += len(batch["action"])
        if steps_done >= next_eval or steps_done >= cfg.total_steps:
            run_eval(steps_done, last_stats)
            next_eval += cfg.eval_interval

    if not metrics and not aborted:
        run_eval(steps_done, last_stats)
    if out_dir is not None:
        write_metrics(os.path.join(str(out_dir), "metrics.csv"), metrics)
    return TrainResult(
        params=params,
        metrics=metrics,
        best_step=best_step,
        best_avg_reward=best_avg if metrics else 0.0,
        checkpoint_dir=ckpt_dir,
        aborted=aborted,
    )


def write_metrics(path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_COLUMNS)
        writer.writeheader()
        for row in metrics:
            writer.writerow({key: row[key] for key in METRICS_COLUMNS})
