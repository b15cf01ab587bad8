"""Soft actor-critic: twin critics with polyak targets, automatic temperature,
prioritized replay and the multi-configuration training loop."""
from __future__ import annotations

import csv
import io
import json
import math
import pickle
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .env import EnvPool
from .neural import (HIDDEN, LOG_STD_MAX, LOG_STD_MIN, TANH_EPS, AdamState, GaussianPolicy, Mlp, QNetwork,
                     adam_step, clip_grad_norm, sample_squashed)
from .replay import Batch, PrioritizedReplay

LOG_COLUMNS = ("step", "critic_loss", "actor_loss", "alpha", "mean_return_per_config", "buffer_size")
PRIORITY_EPS = 1e-6


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    batch: int = 256
    lr: float = 1e-4
    training_frequency: int = 2
    total_steps: int = 1_000_000
    tau: float = 0.005
    target_entropy: float = -2.0
    reward_scale: float = 5.0
    warmup: int = 2000
    capacity: int = 1_000_000
    priority_alpha: float = 0.6
    beta_start: float = 0.4
    beta_end: float = 1.0
    grad_clip: float = 10.0
    init_alpha: float = 1.0
    hidden: tuple[int, ...] = HIDDEN
    dtype: str = "float64"
    log_interval: int = 1000
    checkpoint_interval: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.batch <= 0 or self.training_frequency <= 0 or self.capacity <= 0:
            raise ValueError("batch, training_frequency and capacity must be positive")
        if self.init_alpha <= 0:
            raise ValueError("init_alpha must be positive")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")


def polyak_update(targets, sources, tau: float) -> None:
    """target <- (1 - tau) * target + tau * source, in place."""
    for t, s in zip(targets, sources):
        t *= 1.0 - tau
        t += tau * s


def critic_gradients(q: QNetwork, s: np.ndarray, a: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Importance-weighted squared TD loss mean(w * (Q(s, a) - y)^2) and its gradients."""
    pred = q(s, a)
    td = pred - y
    grads, _ = q.net.backward((2.0 * w * td / len(y))[:, None].astype(q.net.dtype))
    return float(np.mean(w * td * td)), td, grads


class SacAgent:
    def __init__(self, obs_dim: int, action_dim: int, cfg: SacConfig, rng: np.random.Generator):
        self.cfg = cfg
        dt = np.dtype(cfg.dtype)
        self.policy = GaussianPolicy(obs_dim, action_dim, rng, hidden=cfg.hidden, dtype=dt)
        self.q1 = QNetwork(obs_dim, action_dim, rng, hidden=cfg.hidden, dtype=dt)
        self.q2 = QNetwork(obs_dim, action_dim, rng, hidden=cfg.hidden, dtype=dt)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = math.log(cfg.init_alpha)
        self.opt_policy = AdamState.zeros_like(self.policy.net.params)
        self.opt_q1 = AdamState.zeros_like(self.q1.net.params)
        self.opt_q2 = AdamState.zeros_like(self.q2.net.params)
        self.opt_alpha = AdamState.zeros_like([np.zeros(1)])
        self.action_dim = action_dim

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    # ------------------------------------------------------------------
    def critic_target(self, r, s2, done, rng, alpha: float | None = None) -> np.ndarray:
        """Bootstrapped target; rewards are used as stored (already scaled)."""
        alpha = self.alpha if alpha is None else alpha
        cont = self.cfg.gamma * (1.0 - np.asarray(done, dtype=float))
        y = np.asarray(r, dtype=float).copy()
        live = cont != 0.0
        if np.any(live):
            mean, log_std, _ = self.policy.heads(s2[live], keep=False)
            smp = sample_squashed(mean, log_std, rng)
            qmin = np.minimum(self.q1_target(s2[live], smp.action, keep=False),
                              self.q2_target(s2[live], smp.action, keep=False))
            y[live] += cont[live] * (qmin - alpha * smp.log_prob)
        return y

    def critic_update(self, batch: Batch, rng: np.random.Generator) -> tuple[float, np.ndarray, np.ndarray]:
        """One Adam step on both critics; returns (loss, td errors of q1, new priorities)."""
        cfg = self.cfg
        y = self.critic_target(batch.r, batch.s2, batch.done, rng)
        w = batch.weights
        loss = 0.0
        tds = []
        for q, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            q_loss, td, grads = critic_gradients(q, batch.s, batch.a, y, w)
            loss += q_loss
            clip_grad_norm(grads, cfg.grad_clip)
            adam_step(q.net.params, grads, opt, cfg.lr)
            tds.append(td)
        priorities = 0.5 * (np.abs(tds[0]) + np.abs(tds[1])) + PRIORITY_EPS
        return loss, tds[0], priorities

    def actor_gradients(self, batch_s: np.ndarray, rng: np.random.Generator):
        """Actor loss, its policy-parameter gradients and the sampled log-probabilities."""
        alpha = self.alpha
        n = len(batch_s)
        mean, log_std, raw = self.policy.heads(batch_s)
        smp = sample_squashed(mean, log_std, rng)
        a, eps = smp.action, smp.noise
        q1 = self.q1(batch_s, a)
        q2 = self.q2(batch_s, a)
        use1 = q1 <= q2
        qmin = np.where(use1, q1, q2)
        actor_loss = float(np.mean(alpha * smp.log_prob - qmin))

        # dQmin/da through whichever critic is smaller for each sample
        obs_dim = batch_s.shape[1]
        g1 = self.q1.net.input_grad((use1 / n)[:, None].astype(self.q1.net.dtype))[:, obs_dim:]
        g2 = self.q2.net.input_grad((~use1 / n)[:, None].astype(self.q2.net.dtype))[:, obs_dim:]
        d_a = -(g1 + g2)
        t = a
        d_u = d_a * (1.0 - t * t) + (alpha / n) * 2.0 * t * (1.0 - t * t) / (1.0 - t * t + TANH_EPS)
        d_mean = d_u
        d_log_std = d_u * np.exp(log_std) * eps - alpha / n
        d_log_std = d_log_std * ((raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX))
        grads, _ = self.policy.net.backward(np.concatenate([d_mean, d_log_std], axis=1))
        return actor_loss, grads, smp.log_prob

    def actor_and_alpha_update(self, batch_s: np.ndarray, rng: np.random.Generator) -> tuple[float, float]:
        cfg = self.cfg
        actor_loss, grads, logp = self.actor_gradients(batch_s, rng)
        clip_grad_norm(grads, cfg.grad_clip)
        adam_step(self.policy.net.params, grads, self.opt_policy, cfg.lr)

        logp = logp.astype(float)
        alpha_loss = float(np.mean(-self.log_alpha * (logp + cfg.target_entropy)))
        g_alpha = np.array([-np.mean(logp + cfg.target_entropy)])
        la = np.array([self.log_alpha])
        adam_step([la], [g_alpha], self.opt_alpha, cfg.lr)
        self.log_alpha = float(la[0])
        return actor_loss, alpha_loss

    def update_targets(self) -> None:
        polyak_update(self.q1_target.net.params, self.q1.net.params, self.cfg.tau)
        polyak_update(self.q2_target.net.params, self.q2.net.params, self.cfg.tau)

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None, deterministic: bool = False) -> np.ndarray:
        return self.policy.act(obs, rng, deterministic=deterministic)

    def networks(self) -> dict:
        return {"policy": self.policy.net, "q1": self.q1.net, "q2": self.q2.net,
                "q1_target": self.q1_target.net, "q2_target": self.q2_target.net}


@dataclass
class UpdateStats:
    critic_loss: list = field(default_factory=list)
    actor_loss: list = field(default_factory=list)


class Trainer:
    """Owns the agent, the pool, the replay buffer and the master RNG."""

    def __init__(self, pool: EnvPool, cfg: SacConfig, rng: np.random.Generator, *, config_hash: str = "",
                 out_dir=None):
        self.pool = pool
        self.cfg = cfg
        self.rng = rng
        self.config_hash = config_hash
        self.out_dir = FsPath(out_dir) if out_dir is not None else None
        obs_dim = pool.observation_dim
        self.action_dim = pool.envs[0].action_dim
        self.agent = SacAgent(obs_dim, self.action_dim, cfg, rng)
        self.buffer = PrioritizedReplay(cfg.capacity, obs_dim, self.action_dim, alpha=cfg.priority_alpha,
                                        beta=cfg.beta_start, dtype=np.dtype(cfg.dtype))
        self.decisions = 0
        self.updates = 0
        self.log_rows: list[dict] = []
        self._stats = UpdateStats()
        self._returns: dict[str, list[float]] = defaultdict(list)
        self._seen_finished = 0
        self.sampled_configs: set = set()

    # ------------------------------------------------------------------
    def beta(self) -> float:
        frac = min(1.0, self.decisions / max(1, self.cfg.total_steps))
        return self.cfg.beta_start + frac * (self.cfg.beta_end - self.cfg.beta_start)

    def _choose_actions(self) -> np.ndarray:
        k = len(self.pool)
        if self.decisions < self.cfg.warmup:
            return self.rng.uniform(-1.0, 1.0, size=(k, self.action_dim))
        return self.agent.act(np.stack(self.pool.obs), self.rng)

    def _update(self) -> None:
        cfg = self.cfg
        self.buffer.beta = self.beta()
        batch = self.buffer.sample(cfg.batch, self.rng)
        self.sampled_configs.update(batch.config_id.tolist())
        c_loss, _, prio = self.agent.critic_update(batch, self.rng)
        a_loss, _ = self.agent.actor_and_alpha_update(batch.s, self.rng)
        if not (math.isfinite(c_loss) and math.isfinite(a_loss) and math.isfinite(self.agent.log_alpha)):
            self._dump_divergence(c_loss, a_loss, batch)
        self.buffer.update_priorities(batch.indices, prio)
        self.agent.update_targets()
        self.updates += 1
        self._stats.critic_loss.append(c_loss)
        self._stats.actor_loss.append(a_loss)

    def _dump_divergence(self, c_loss, a_loss, batch) -> None:
        info = {"step": self.decisions, "updates": self.updates, "critic_loss": repr(c_loss),
                "actor_loss": repr(a_loss), "log_alpha": repr(self.agent.log_alpha),
                "batch_reward_range": [float(np.min(batch.r)), float(np.max(batch.r))],
                "batch_obs_finite": bool(np.all(np.isfinite(batch.s)))}
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / "divergence.json").write_text(json.dumps(info, indent=2))
        raise TrainingDiverged(f"non-finite loss at decision {self.decisions}: {info}")

    def step(self) -> None:
        """Collect one decision from every pooled environment, then run the due updates."""
        cfg = self.cfg
        actions = self._choose_actions()
        before = self.decisions
        for tr in self.pool.step_all(actions):
            self.buffer.push(tr.s, tr.a, tr.r * cfg.reward_scale, tr.s2, tr.done, tr.config_id)
        self.decisions += len(self.pool)
        for fin in self.pool.finished[self._seen_finished:]:
            self._returns[fin.config_id].append(fin.episode_return)
        self._seen_finished = len(self.pool.finished)
        for d in range(before + 1, self.decisions + 1):
            if d % cfg.training_frequency == 0 and d > cfg.warmup and self.buffer.ready(cfg.batch):
                self._update()
        if cfg.log_interval and self.decisions // cfg.log_interval > before // cfg.log_interval:
            self._log_row()
        if (cfg.checkpoint_interval and self.out_dir is not None
                and self.decisions // cfg.checkpoint_interval > before // cfg.checkpoint_interval):
            self.save_checkpoint()

    def run(self, until: int | None = None) -> "Trainer":
        until = self.cfg.total_steps if until is None else until
        while self.decisions < until:
            self.step()
        return self

    # ------------------------------------------------------------------
    def _log_row(self) -> None:
        s = self._stats
        returns = ";".join(f"{k}={np.mean(v):.6g}" for k, v in sorted(self._returns.items()) if v)
        row = {"step": self.decisions,
               "critic_loss": f"{np.mean(s.critic_loss):.10g}" if s.critic_loss else "",
               "actor_loss": f"{np.mean(s.actor_loss):.10g}" if s.actor_loss else "",
               "alpha": f"{self.agent.alpha:.10g}",
               "mean_return_per_config": returns,
               "buffer_size": len(self.buffer)}
        self.log_rows.append(row)
        self._stats = UpdateStats()
        self._returns = defaultdict(list)
        if self.out_dir is not None:
            self.write_log()

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=LOG_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(self.log_rows)
        return buf.getvalue()

    def write_log(self) -> FsPath:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / "train_log.csv"
        path.write_text(self.log_csv())
        return path

    def save_checkpoint(self, directory=None) -> FsPath:
        directory = FsPath(directory) if directory is not None else self.out_dir / f"ckpt_{self.decisions:09d}"
        directory.mkdir(parents=True, exist_ok=True)
        for name, net in self.agent.networks().items():
            net.save(directory / f"{name}.bin")
        manifest = {"step": self.decisions, "updates": self.updates, "config_hash": self.config_hash,
                    "log_alpha": self.agent.log_alpha, "rng_state": self.rng.bit_generator.state,
                    "observation_dim": self.pool.observation_dim, "action_dim": self.action_dim,
                    "sac": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.cfg).items()}}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        with open(directory / "trainer_state.pkl", "wb") as fh:
            pickle.dump(self, fh, protocol=pickle.HIGHEST_PROTOCOL)
        return directory

    @staticmethod
    def resume(directory) -> "Trainer":
        with open(FsPath(directory) / "trainer_state.pkl", "rb") as fh:
            return pickle.load(fh)


def train(pool: EnvPool, cfg: SacConfig, rng: np.random.Generator, *, out_dir=None, config_hash: str = "") -> Trainer:
    """Run the full budget; writes the log and a final checkpoint when ``out_dir`` is given."""
    tr = Trainer(pool, cfg, rng, config_hash=config_hash, out_dir=out_dir)
    tr.run()
    if out_dir is not None:
        tr.write_log()
        tr.save_checkpoint()
    return tr


def load_policy(directory, *, dtype=np.float64) -> GaussianPolicy:
    """Policy network from a checkpoint directory (or a bare ``policy.bin`` path)."""
    p = FsPath(directory)
    if p.is_dir():
        p = p / "policy.bin"
    net = Mlp.load(p, dtype=dtype)
    pol = GaussianPolicy.__new__(GaussianPolicy)
    pol.action_dim, pol.net = net.spec.output_dim // 2, net
    return pol
