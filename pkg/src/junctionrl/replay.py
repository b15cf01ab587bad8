"""Proportional prioritized replay over a ring buffer, backed by an array sum tree."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BufferNotReady(RuntimeError):
    """Raised when a batch is requested from a buffer holding fewer transitions."""


class SumTree:
    """Complete binary tree of non-negative leaf values with O(log n) prefix search."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.leaves = 1
        while self.leaves < capacity:
            self.leaves *= 2
        self.nodes = np.zeros(2 * self.leaves)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    def get(self, idx) -> np.ndarray:
        return self.nodes[np.asarray(idx) + self.leaves]

    def set(self, idx, values) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        values = np.broadcast_to(np.asarray(values, dtype=float), idx.shape)
        if np.any(values < 0):
            raise ValueError("sum tree values must be >= 0")
        pos = idx + self.leaves
        self.nodes[pos] = values
        # duplicates are fine: parents are recomputed from children, level by level
        pos = np.unique(pos // 2)
        while pos[0] >= 1:
            self.nodes[pos] = self.nodes[2 * pos] + self.nodes[2 * pos + 1]
            if pos[0] == 1:
                break
            pos = np.unique(pos // 2)

    def find(self, mass: np.ndarray) -> np.ndarray:
        """Leaf index whose cumulative interval contains each entry of ``mass``."""
        mass = np.array(mass, dtype=float)
        pos = np.ones(mass.shape, dtype=np.int64)
        while pos[0] < self.leaves if pos.size else False:
            left = 2 * pos
            lv = self.nodes[left]
            go_right = mass >= lv
            # never walk into an all-zero subtree because of rounding at the top edge
            go_right &= self.nodes[left + 1] > 0
            mass = np.where(go_right, mass - lv, mass)
            pos = np.where(go_right, left + 1, left)
        return pos - self.leaves


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray
    config_id: np.ndarray
    indices: np.ndarray
    weights: np.ndarray


class PrioritizedReplay:
    """Ring storage; new transitions enter with the running max priority.

    Sampling probability is ``p_i ** alpha / sum_j p_j ** alpha``; importance weights
    ``(N * P(i)) ** -beta`` are divided by their maximum within the batch.
    """

    def __init__(self, capacity: int, obs_dim: int, action_dim: int = 2, *, alpha: float = 0.6,
                 beta: float = 0.4, dtype=np.float64):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        if alpha < 0:
            raise ValueError("alpha must be >= 0")
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        # storage grows by doubling up to capacity, so a nominal 10^6 buffer
        # only costs what is actually filled
        n = min(capacity, 1024)
        self.s = np.zeros((n, obs_dim), dtype=dtype)
        self.s2 = np.zeros((n, obs_dim), dtype=dtype)
        self.a = np.zeros((n, action_dim), dtype=dtype)
        self.r = np.zeros(n)
        self.done = np.zeros(n, dtype=bool)
        self.config_id = np.empty(n, dtype=object)
        self.priority = np.zeros(n)
        self.tree = SumTree(capacity)
        self.max_priority = 1.0
        self.size = 0
        self.next = 0

    def __len__(self) -> int:
        return self.size

    def ready(self, batch: int) -> bool:
        return self.size >= batch

    def _grow(self) -> None:
        n = min(self.capacity, 2 * len(self.r))
        for name in ("s", "s2", "a", "r", "done", "config_id", "priority"):
            old = getattr(self, name)
            new = np.zeros((n,) + old.shape[1:], dtype=old.dtype) if old.dtype != object else np.empty(n, dtype=object)
            new[:len(old)] = old
            setattr(self, name, new)

    def push(self, s, a, r: float, s2, done: bool, config_id: str = "") -> int:
        i = self.next
        if i >= len(self.r):
            self._grow()
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self.done[i] = done
        self.config_id[i] = config_id
        self.priority[i] = self.max_priority
        self.tree.set(i, self.max_priority ** self.alpha)
        self.next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def probabilities(self) -> np.ndarray:
        """Exact sampling distribution over the stored slots."""
        p = self.tree.get(np.arange(self.size))
        return p / p.sum()

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        if not self.ready(batch):
            raise BufferNotReady(f"buffer holds {self.size} transitions, batch needs {batch}")
        total = self.tree.total
        idx = self.tree.find(rng.uniform(0.0, total, size=batch))
        idx = np.minimum(idx, self.size - 1)
        prob = self.tree.get(idx) / total
        w = (self.size * prob) ** (-self.beta)
        w = w / w.max()
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx].astype(float),
                     self.config_id[idx], idx, w)

    def update_priorities(self, indices, priorities) -> None:
        priorities = np.asarray(priorities, dtype=float)
        if np.any(~np.isfinite(priorities)) or np.any(priorities <= 0):
            raise ValueError("priorities must be finite and > 0")
        indices = np.asarray(indices, dtype=np.int64)
        self.priority[indices] = priorities
        self.tree.set(indices, priorities ** self.alpha)
        self.max_priority = max(self.max_priority, float(priorities.max()))
