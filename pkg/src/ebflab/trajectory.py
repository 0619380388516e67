"""Order-sensitive trajectory statistics.

Times are 1-based as in the arrival-segment recursion: a trajectory of
``N`` steps visits states ``s_1 .. s_{N+1}`` and step ``t`` earns ``r_t``
in ``s_t``.  ``N + 2`` is the explicit "never" sentinel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class Trajectory:
    """Consecutive steps (s_t, a_t, r_t, s_{t+1}) stored column-wise.

    ``states`` has length N + 1; ``actions`` and ``rewards`` length N.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        actions = np.asarray(self.actions, dtype=np.int64)
        rewards = np.asarray(self.rewards, dtype=float)
        if states.ndim != 1 or len(states) < 1:
            raise InvalidInput("a trajectory needs at least its initial state")
        if len(actions) != len(states) - 1 or len(rewards) != len(actions):
            raise InvalidInput("states must be one longer than actions and rewards")
        if not np.all(np.isfinite(rewards)):
            raise InvalidInput("rewards must be finite")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)

    @classmethod
    def from_steps(cls, steps, initial_state: int | None = None) -> "Trajectory":
        """Build from ``(s, a, r, s_next)`` tuples, checking consecutive consistency."""
        steps = list(steps)
        if not steps:
            if initial_state is None:
                raise InvalidInput("empty step list needs an explicit initial_state")
            return cls([initial_state], [], [])
        states = [steps[0][0]]
        for i, (s, _, _, s_next) in enumerate(steps):
            if s != states[-1]:
                raise InvalidInput(f"step {i + 1} starts in {s} but previous step ended in {states[-1]}")
            states.append(s_next)
        return cls(states, [st[1] for st in steps], [st[2] for st in steps])

    @classmethod
    def empty(cls, initial_state: int = 0) -> "Trajectory":
        return cls([initial_state], [], [])

    def __len__(self) -> int:
        return len(self.actions)

    def prefix(self, n: int) -> "Trajectory":
        """The first ``n`` steps."""
        return Trajectory(self.states[: n + 1], self.actions[:n], self.rewards[:n])

    def steps(self):
        for t in range(len(self)):
            yield int(self.states[t]), int(self.actions[t]), float(self.rewards[t]), int(self.states[t + 1])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "s", "a", "r", "s_next"])
            for t, (s, a, r, s2) in enumerate(self.steps(), start=1):
                w.writerow([t, s, a, repr(r), s2])

    @classmethod
    def from_csv(cls, path: str | Path, initial_state: int | None = None) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        steps = [(int(x["s"]), int(x["a"]), float(x["r"]), int(x["s_next"])) for x in rows]
        return cls.from_steps(steps, initial_state)


@dataclass(frozen=True)
class ArrivalSegments:
    """Segments from a visit of ``s`` to the next visit of ``s_next``.

    ``ends`` may carry the sentinel ``N + 2`` for a trailing open segment;
    ``count`` only includes segments closed by time ``N + 1``.
    """

    pair: tuple[int, int]
    starts: tuple[int, ...]
    ends: tuple[int, ...]
    count: int
    n_steps: int

    @property
    def sentinel(self) -> int:
        return self.n_steps + 2


def arrival_segments(traj: Trajectory, s: int, s_next: int) -> ArrivalSegments:
    if s == s_next:
        raise InvalidInput("arrival segments need two distinct states")
    N = len(traj)
    starts, ends = [], []
    seeking_start = True
    for t, state in enumerate(traj.states.tolist(), start=1):
        if seeking_start and state == s:
            starts.append(t)
            seeking_start = False
        elif not seeking_start and state == s_next:
            ends.append(t)
            seeking_start = True
    count = len(ends)
    if not seeking_start:
        ends.append(N + 2)
    return ArrivalSegments((s, s_next), tuple(starts), tuple(ends), count, N)


def l1_statistic(h, s: int, s_next: int, traj: Trajectory, rho_hat: float) -> float:
    """Sum over completed segments of (h[s'] - h[s]) plus centred segment rewards."""
    seg = arrival_segments(traj, s, s_next)
    h = np.asarray(h, dtype=float)
    total = 0.0
    for k in range(seg.count):
        # step i lives at index i - 1
        rew = traj.rewards[seg.starts[k] - 1: seg.ends[k] - 1]
        total += (h[s_next] - h[s]) + float(np.sum(rew - rho_hat))
    return total


@dataclass(frozen=True)
class ArrivalSummary:
    """Per-pair sufficient statistics for the L1 statistic.

    For every ordered pair the L1 statistic is linear in ``h``:
    ``count * (h[s'] - h[s]) + reward_sum - rho_hat * length``.
    """

    count: np.ndarray
    reward_sum: np.ndarray
    length: np.ndarray
    rho_hat: float

    def l1(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        out = self.count * (h[None, :] - h[:, None]) + self.reward_sum - self.rho_hat * self.length
        np.fill_diagonal(out, 0.0)
        return out


class ArrivalTracker:
    """Incremental arrival-segment bookkeeping for all ordered pairs at once.

    Each pair keeps the start time of its open segment (0 when closed) and the
    running totals of completed segments.  Reward prefix sums make closing O(1).
    """

    def __init__(self, n_states: int, initial_state: int):
        self.S = n_states
        self.t = 1
        self.open_start = [[0] * n_states for _ in range(n_states)]
        self.count = np.zeros((n_states, n_states), dtype=np.int64)
        self.reward_sum = np.zeros((n_states, n_states))
        self.length = np.zeros((n_states, n_states), dtype=np.int64)
        self._prefix = [0.0]
        self._total_reward = 0.0
        self._open_from(initial_state)

    def _open_from(self, s: int) -> None:
        row = self.open_start[s]
        for j in range(self.S):
            if j != s and row[j] == 0:
                row[j] = self.t

    def push(self, reward: float, next_state: int) -> None:
        """Record step ``t`` (reward earned at s_t) and arrival at s_{t+1}."""
        self._total_reward += reward
        self._prefix.append(self._total_reward)
        self.t += 1
        t = self.t
        y = next_state
        for x in range(self.S):
            start = self.open_start[x][y]
            if x != y and start:
                self.count[x, y] += 1
                self.reward_sum[x, y] += self._prefix[t - 1] - self._prefix[start - 1]
                self.length[x, y] += t - start
                self.open_start[x][y] = 0
        self._open_from(y)

    @property
    def n_steps(self) -> int:
        return self.t - 1

    def summary(self) -> ArrivalSummary:
        n = self.n_steps
        rho_hat = self._total_reward / max(n, 1)
        return ArrivalSummary(self.count.copy(), self.reward_sum.copy(), self.length.copy(), rho_hat)


def arrival_summary(traj: Trajectory, n_states: int | None = None) -> ArrivalSummary:
    """Full recompute of :class:`ArrivalSummary` from a frozen trajectory."""
    if n_states is None:
        n_states = int(traj.states.max()) + 1
    tracker = ArrivalTracker(n_states, int(traj.states[0]))
    for r, s2 in zip(traj.rewards.tolist(), traj.states[1:].tolist()):
        tracker.push(r, s2)
    return tracker.summary()


@dataclass(frozen=True)
class TrajectoryStats:
    """Counts and empirical model of a trajectory.

    Rows of ``p_hat`` for never-visited pairs are uniform and flagged in
    ``unvisited``; ``n_floor`` is the visit count floored at 1.
    """

    visit_counts: np.ndarray
    triple_counts: np.ndarray
    p_hat: np.ndarray
    rho_hat: float
    length: int

    @property
    def n_floor(self) -> np.ndarray:
        return np.maximum(self.visit_counts, 1)

    @property
    def unvisited(self) -> np.ndarray:
        return self.visit_counts == 0

    @classmethod
    def from_counts(cls, triple_counts: np.ndarray, reward_total: float, length: int) -> "TrajectoryStats":
        triple = np.asarray(triple_counts, dtype=np.int64)
        visits = triple.sum(axis=2)
        S = triple.shape[0]
        p_hat = np.where(visits[..., None] > 0, triple / np.maximum(visits, 1)[..., None], 1.0 / S)
        return cls(visits, triple, p_hat, reward_total / max(length, 1), length)


def compute_stats(traj: Trajectory, n_states: int, n_actions: int) -> TrajectoryStats:
    triple = np.zeros((n_states, n_actions, n_states), dtype=np.int64)
    np.add.at(triple, (traj.states[:-1], traj.actions, traj.states[1:]), 1)
    return TrajectoryStats.from_counts(triple, float(np.sum(traj.rewards)), len(traj))
