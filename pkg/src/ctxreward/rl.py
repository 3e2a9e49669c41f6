"""Actor-critic policy optimization over the kitchen world with pluggable rewards."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn as nn

from .memory import ContextMemory, InteractionCounter, activity_reward, coverage_reward, total_reward
from .priors import CompatibilityTable, uniform_prior
from .tasks import TASKS, EpisodeConfig, task_reward, world_from_config
from .world import Layout

log = logging.getLogger(__name__)

REWARD_MODES = ("vanilla", "aco", "uniform", "nav_coverage", "aco_plus_nav")


@dataclass
class TrainConfig:
    task_id: str
    reward_mode: str = "vanilla"
    lambda_aux: float = 1.0
    horizon: int = 96
    total_steps: int = 200_000
    rollout_len: int = 96
    num_actors: int = 8
    learning_rate: float = 2.5e-4
    clip_param: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    minibatches: int = 2
    epochs: int = 4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    seed: int = 0
    hidden: tuple[int, int] = (128, 64)
    anneal_lr: bool = True  # linear decay to zero over the step budget
    eval_every: int = 50_000
    nav_weight: float = 0.5  # aco_plus_nav mixes both rewards at equal weight

    def __post_init__(self):
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"unknown reward mode {self.reward_mode}")
        for name in ("learning_rate", "clip_param", "horizon", "total_steps", "rollout_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


class ActorCritic(nn.Module):
    """Small feedforward encoder with categorical actor and scalar critic heads."""

    def __init__(self, obs_dim: int, n_actions: int, hidden: tuple[int, int] = (128, 64)):
        super().__init__()
        self.body = nn.Sequential(
            nn.Linear(obs_dim, hidden[0]),
            nn.Tanh(),
            nn.Linear(hidden[0], hidden[1]),
            nn.Tanh(),
        )
        self.actor = nn.Linear(hidden[1], n_actions)
        self.critic = nn.Linear(hidden[1], 1)

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        z = self.body(obs)
        return self.actor(z), self.critic(z).squeeze(-1)

    def distribution(self, obs: torch.Tensor) -> torch.distributions.Categorical:
        logits, _ = self(obs)
        return torch.distributions.Categorical(logits=logits)


class EpisodeRunner:
    """One rollout worker: owns a world, its reward bookkeeping, and episode sampling."""

    def __init__(
        self,
        layouts: dict[str, Layout],
        episodes: list[EpisodeConfig],
        config: TrainConfig,
        table: CompatibilityTable | None,
        seed: int,
    ):
        self.layouts = layouts
        self.episodes = episodes
        self.config = config
        self.table = table
        self.task = TASKS[config.task_id]
        self.rng = random.Random(seed)
        self.reset()

    def reset(self) -> np.ndarray:
        ep = self.episodes[self.rng.randrange(len(self.episodes))]
        self.world = world_from_config(self.layouts[ep.scene], ep)
        self.memory = ContextMemory()
        self.counter = InteractionCounter()
        self.visited: set[str] = set()
        self.steps = 0
        return self.world.observe()

    def _aux_reward(self, event, success: bool) -> float:
        mode = self.config.reward_mode
        if mode == "vanilla":
            return 0.0
        aco = 0.0
        if mode in ("aco", "uniform", "aco_plus_nav") and success and event.kind != "navigate":
            if event.kind in ("put", "take"):
                self.memory.apply(event, self.world.world_positions())
            held = self.world.objects[self.world.held].cls if self.world.held else None
            # a put's interaction target is the receptacle (the action is
            # "put <receptacle>"); the event itself tracks the placed instance
            target = event.target_class
            if event.verb == "put":
                container = self.world.objects[event.target_instance].contained_in
                if container is not None:
                    target = self.world.objects[container].cls
            aco = activity_reward(self.memory, event.verb, target, held, self.counter, self.table)
        cov = 0.0
        if mode in ("nav_coverage", "aco_plus_nav"):
            cov, self.visited = coverage_reward(self.world.visible_classes(), self.visited)
        if mode == "aco_plus_nav":
            return self.config.nav_weight * aco + self.config.nav_weight * cov
        return aco if mode in ("aco", "uniform") else cov

    def step(self, action: int) -> tuple[np.ndarray, float, float, bool]:
        """Returns (next_obs, reward, auxiliary component, done)."""
        event, success = self.world.step(action)
        task_r, goal = task_reward(self.world, self.task)
        aux = self._aux_reward(event, success)
        reward = total_reward(task_r, aux, self.config.lambda_aux)
        self.steps += 1
        done = goal or self.steps >= self.config.horizon
        obs = self.reset() if done else self.world.observe()
        return obs, reward, aux, done


def ppo_loss(
    policy: ActorCritic,
    obs: torch.Tensor,
    actions: torch.Tensor,
    old_logp: torch.Tensor,
    returns: torch.Tensor,
    advantages: torch.Tensor,
    clip_param: float,
    value_coef: float,
    entropy_coef: float,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Clipped-surrogate policy loss plus value regression and entropy bonus."""
    logits, values = policy(obs)
    dist = torch.distributions.Categorical(logits=logits)
    logp = dist.log_prob(actions)
    ratio = torch.exp(logp - old_logp)
    clipped = torch.clamp(ratio, 1.0 - clip_param, 1.0 + clip_param)
    policy_loss = -torch.min(ratio * advantages, clipped * advantages).mean()
    value_loss = 0.5 * (values - returns).pow(2).mean()
    entropy = dist.entropy().mean()
    loss = policy_loss + value_coef * value_loss - entropy_coef * entropy
    diag = {
        "policy_loss": float(policy_loss.detach()),
        "value_loss": float(value_loss.detach()),
        "entropy": float(entropy.detach()),
        "clip_fraction": float((torch.abs(ratio - 1.0) > clip_param).float().mean()),
    }
    return loss, diag


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_values: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets; arrays are (T, A)."""
    t_len, n = rewards.shape
    advantages = np.zeros((t_len, n), dtype=np.float64)
    gae = np.zeros(n, dtype=np.float64)
    next_values = last_values
    for t in reversed(range(t_len)):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * nonterminal - values[t]
        gae = delta + gamma * lam * nonterminal * gae
        advantages[t] = gae
        next_values = values[t]
    return advantages, advantages + values


def advantage_update(
    policy: ActorCritic,
    optimizer: torch.optim.Optimizer,
    batch: dict[str, torch.Tensor],
    config: TrainConfig,
    generator: torch.Generator,
) -> dict[str, float]:
    """One PPO update over a collected batch; returns averaged diagnostics."""
    n = batch["obs"].shape[0]
    adv = batch["advantages"]
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    diags: dict[str, float] = {}
    count = 0
    for _ in range(config.epochs):
        perm = torch.randperm(n, generator=generator)
        for chunk in perm.chunk(config.minibatches):
            loss, diag = ppo_loss(
                policy,
                batch["obs"][chunk],
                batch["actions"][chunk],
                batch["old_logp"][chunk],
                batch["returns"][chunk],
                adv[chunk],
                config.clip_param,
                config.value_coef,
                config.entropy_coef,
            )
            optimizer.zero_grad()
            loss.backward()
            grads_finite = all(
                p.grad is None or torch.isfinite(p.grad).all() for p in policy.parameters()
            )
            if not grads_finite:
                raise FloatingPointError(f"non-finite gradient; diagnostics: {diag}")
            nn.utils.clip_grad_norm_(policy.parameters(), 0.5)
            optimizer.step()
            for k, v in diag.items():
                diags[k] = diags.get(k, 0.0) + v
            count += 1
    return {k: v / count for k, v in diags.items()}


@dataclass
class TrainResult:
    policy: ActorCritic
    config: TrainConfig
    curve: list[tuple[int, float]] = field(default_factory=list)
    diagnostics: list[dict[str, float]] = field(default_factory=list)


def train(
    config: TrainConfig,
    layouts: dict[str, Layout],
    train_episodes: list[EpisodeConfig],
    eval_episodes: list[EpisodeConfig] | None = None,
    table: CompatibilityTable | None = None,
) -> TrainResult:
    """Synchronous PPO: collect rollout_len steps from each actor, then update.

    Deterministic for a fixed seed (actors are stepped sequentially in-process).
    """
    if config.reward_mode in ("aco", "aco_plus_nav") and table is None:
        raise ValueError(f"reward mode {config.reward_mode} requires a compatibility table")
    if config.reward_mode == "uniform":
        vocab = layouts[train_episodes[0].scene].vocabulary()
        table = uniform_prior(vocab)

    torch.manual_seed(config.seed)
    # single-threaded math keeps fixed-seed runs bit-identical; override via env
    torch.set_num_threads(int(os.environ.get("CTXREWARD_THREADS", "1")))
    generator = torch.Generator().manual_seed(config.seed + 1)

    runners = [
        EpisodeRunner(layouts, train_episodes, config, table, seed=config.seed * 7919 + i)
        for i in range(config.num_actors)
    ]
    probe = runners[0].world
    policy = ActorCritic(probe.observation_size(), len(probe.action_space), hidden=tuple(config.hidden))
    optimizer = torch.optim.Adam(policy.parameters(), lr=config.learning_rate)
    result = TrainResult(policy, config)

    obs = np.stack([r.world.observe() for r in runners])
    steps_done = 0
    next_eval = 0
    while steps_done < config.total_steps:
        if eval_episodes and steps_done >= next_eval:
            rate, _ = evaluate(policy, layouts, eval_episodes)
            result.curve.append((steps_done, rate))
            next_eval += config.eval_every

        if config.anneal_lr:
            frac = 1.0 - steps_done / config.total_steps
            for group in optimizer.param_groups:
                group["lr"] = config.learning_rate * frac

        t_len, n = config.rollout_len, config.num_actors
        buf_obs = np.zeros((t_len, n, obs.shape[1]), dtype=np.float32)
        buf_act = np.zeros((t_len, n), dtype=np.int64)
        buf_logp = np.zeros((t_len, n), dtype=np.float32)
        buf_val = np.zeros((t_len, n), dtype=np.float64)
        buf_rew = np.zeros((t_len, n), dtype=np.float64)
        buf_done = np.zeros((t_len, n), dtype=np.float64)

        with torch.no_grad():
            for t in range(t_len):
                obs_t = torch.from_numpy(obs)
                logits, values = policy(obs_t)
                dist = torch.distributions.Categorical(logits=logits)
                actions = dist.sample()
                buf_obs[t] = obs
                buf_act[t] = actions.numpy()
                buf_logp[t] = dist.log_prob(actions).numpy()
                buf_val[t] = values.numpy()
                for i, runner in enumerate(runners):
                    nxt, reward, _aux, done = runner.step(int(actions[i]))
                    obs[i] = nxt
                    buf_rew[t, i] = reward
                    buf_done[t, i] = float(done)
            _, last_values = policy(torch.from_numpy(obs))

        advantages, returns = compute_gae(
            buf_rew, buf_val, buf_done, last_values.numpy().astype(np.float64),
            config.gamma, config.gae_lambda,
        )
        batch = {
            "obs": torch.from_numpy(buf_obs.reshape(t_len * n, -1)),
            "actions": torch.from_numpy(buf_act.reshape(-1)),
            "old_logp": torch.from_numpy(buf_logp.reshape(-1)),
            "returns": torch.from_numpy(returns.reshape(-1).astype(np.float32)),
            "advantages": torch.from_numpy(advantages.reshape(-1).astype(np.float32)),
        }
        diag = advantage_update(policy, optimizer, batch, config, generator)
        result.diagnostics.append(diag)
        steps_done += t_len * n

    if eval_episodes:
        rate, _ = evaluate(policy, layouts, eval_episodes)
        result.curve.append((steps_done, rate))
    return result


def evaluate(
    policy: ActorCritic, layouts: dict[str, Layout], episodes: list[EpisodeConfig]
) -> tuple[float, list[dict]]:
    """Greedy success rate over an episode set; never mutates policy or layouts."""
    if not episodes:
        raise ValueError("empty episode set")
    records = []
    successes = 0
    with torch.no_grad():
        for ep in episodes:
            world = world_from_config(layouts[ep.scene], ep)
            task = TASKS[ep.task_id]
            success = False
            steps = 0
            for _ in range(ep.horizon):
                obs = torch.from_numpy(world.observe()).unsqueeze(0)
                logits, _ = policy(obs)
                world.step(int(torch.argmax(logits, dim=-1)))
                steps += 1
                _, done = task_reward(world, task)
                if done:
                    success = True
                    break
            successes += int(success)
            records.append(
                {
                    "scene": ep.scene,
                    "task": ep.task_id,
                    "seed": ep.seed,
                    "difficulty": ep.difficulty,
                    "success": success,
                    "steps": steps,
                }
            )
    return successes / len(episodes), records


def difficulty_report(records: list[dict], n_bins: int = 8) -> list[dict]:
    """Equal-count difficulty bins with per-bin success rates."""
    if not records:
        raise ValueError("no records")
    ordered = sorted(records, key=lambda r: (r["difficulty"], r["scene"], r["seed"]))
    bins = min(n_bins, len(ordered))
    if bins < n_bins:
        log.warning("only %d records; using %d difficulty bins", len(ordered), bins)
    out = []
    edges = np.array_split(np.arange(len(ordered)), bins)
    for b, idx in enumerate(edges):
        chunk = [ordered[i] for i in idx]
        out.append(
            {
                "bin": b,
                "difficulty_lo": chunk[0]["difficulty"],
                "difficulty_hi": chunk[-1]["difficulty"],
                "count": len(chunk),
                "success_rate": sum(r["success"] for r in chunk) / len(chunk),
            }
        )
    return out


def save_checkpoint(result: TrainResult, path) -> None:
    torch.save(
        {
            "state_dict": result.policy.state_dict(),
            "config": asdict(result.config),
            "fingerprint": result.config.fingerprint(),
            "curve": result.curve,
            "obs_dim": result.policy.body[0].in_features,
            "n_actions": result.policy.actor.out_features,
        },
        path,
    )


def load_checkpoint(path) -> tuple[ActorCritic, dict]:
    blob = torch.load(path, weights_only=False)
    hidden = tuple(blob["config"].get("hidden", (128, 64)))
    policy = ActorCritic(blob["obs_dim"], blob["n_actions"], hidden=hidden)
    policy.load_state_dict(blob["state_dict"])
    return policy, blob
