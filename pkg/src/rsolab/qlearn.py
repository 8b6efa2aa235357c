"""Epsilon-greedy tabular Q-learning with pluggable operator targets.

Each timestep applies ``Q(x,a) <- (1 - alpha) Q(x,a) + alpha * target`` to
the visited pair, where ``target`` is the single-sample target of the chosen
operator. The per-step loop is compiled with numba. All randomness is
drawn from a numpy ``Generator`` in fixed-size blocks per episode, so every
operator consumes the stream identically and paired seeds stay paired.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numba
import numpy as np

from .discretize import GridSpec, encode
from .envs import env_step, observe, reset_raw
from .mdp import greedy_value
from .operators import Bellman, Consistent, OperatorKind, Rso

DEFAULT_GAMMA = 0.99

OP_BELLMAN, OP_CONSISTENT, OP_RSO = 0, 1, 2
SCHED_CONSTANT, SCHED_LINEAR, SCHED_INVERSE_VISIT = 0, 1, 2


# --------------------------------------------------------------------------
# schedules
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantSchedule:
    v: float

    def __post_init__(self):
        if not 0.0 <= self.v <= 1.0:
            raise ValueError(f"schedule value must lie in [0, 1], got {self.v}")

    def value(self, t: int, visits: int = 1) -> float:
        return self.v

    def encode(self):
        return SCHED_CONSTANT, self.v, 0.0, 0.0

    def __str__(self):
        return f"constant:{self.v!r}"


@dataclass(frozen=True)
class LinearDecay:
    """Linear interpolation from ``start`` to ``end`` over ``steps`` ticks, then flat."""

    start: float
    end: float
    steps: int

    def __post_init__(self):
        if not (0.0 <= self.start <= 1.0 and 0.0 <= self.end <= 1.0):
            raise ValueError("linear schedule endpoints must lie in [0, 1]")
        if self.steps < 1:
            raise ValueError("linear schedule needs steps >= 1")

    def value(self, t: int, visits: int = 1) -> float:
        frac = min(1.0, t / self.steps)
        return self.start + (self.end - self.start) * frac

    def encode(self):
        return SCHED_LINEAR, self.start, self.end, float(self.steps)

    def __str__(self):
        return f"linear:{self.start!r}:{self.end!r}:{self.steps}"


@dataclass(frozen=True)
class InverseVisit:
    """``min(1, c / n)`` where ``n`` counts visits to the updated pair."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("inverse-visit schedule needs c > 0")

    def value(self, t: int, visits: int = 1) -> float:
        return min(1.0, self.c / max(visits, 1))

    def encode(self):
        return SCHED_INVERSE_VISIT, self.c, 0.0, 0.0

    def __str__(self):
        return f"inverse:{self.c!r}"


Schedule = Union[ConstantSchedule, LinearDecay, InverseVisit]


def parse_schedule(text: str) -> Schedule:
    """Parse ``constant:v``, ``linear:start:end:steps`` or ``inverse:c``."""
    head, _, rest = text.strip().partition(":")
    try:
        if head == "constant":
            return ConstantSchedule(float(rest))
        if head == "linear":
            a, b, n = rest.split(":")
            return LinearDecay(float(a), float(b), int(n))
        if head == "inverse":
            return InverseVisit(float(rest))
    except ValueError as err:
        raise ValueError(f"invalid schedule {text!r}: {err}") from None
    raise ValueError(f"unknown schedule {text!r}")


@dataclass(frozen=True)
class Schedules:
    """Learning rate (indexed by global step) and exploration rate (indexed by episode)."""

    alpha: Schedule = ConstantSchedule(0.1)
    epsilon: Schedule = ConstantSchedule(0.1)
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if isinstance(self.epsilon, InverseVisit):
            raise ValueError("epsilon cannot use an inverse-visit schedule")
        if isinstance(self.alpha, ConstantSchedule) and self.alpha.v == 0.0:
            raise ValueError("alpha must be positive")
        if isinstance(self.alpha, LinearDecay) and min(self.alpha.start, self.alpha.end) == 0.0:
            raise ValueError("alpha must stay positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


# --------------------------------------------------------------------------
# single-pair primitives
# --------------------------------------------------------------------------


def epsilon_greedy(q: np.ndarray, x: int, eps: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability ``eps``, otherwise the greedy one."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if rng.random() < eps:
        return int(rng.integers(q.shape[1]))
    return greedy_value(q, x)[1]


def td_update(q: np.ndarray, x: int, a: int, target: float, alpha: float) -> float:
    """In-place ``q[x,a] <- (1 - alpha) q[x,a] + alpha * target``; returns the new entry."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    q[x, a] = (1.0 - alpha) * q[x, a] + alpha * target
    return float(q[x, a])


# --------------------------------------------------------------------------
# compiled episode loop
# --------------------------------------------------------------------------


def encode_operator(kind: OperatorKind):
    """``(op_code, starts, lo, hi)`` arrays describing the operator for the kernel."""
    if isinstance(kind, Bellman):
        return OP_BELLMAN, np.zeros(1, np.int64), np.zeros(1), np.zeros(1)
    if isinstance(kind, Consistent):
        return OP_CONSISTENT, np.zeros(1, np.int64), np.zeros(1), np.zeros(1)
    if isinstance(kind, Rso):
        segs = kind.beta.segments()
        return (
            OP_RSO,
            np.array([s[0] for s in segs], dtype=np.int64),
            np.array([s[1] for s in segs], dtype=float),
            np.array([s[2] for s in segs], dtype=float),
        )
    raise TypeError(f"unknown operator kind {kind!r}")


@numba.njit(cache=True)
def _greedy(q, x):
    best = 0
    for b in range(1, q.shape[1]):
        if q[x, b] > q[x, best]:
            best = b
    return best


@numba.njit(cache=True)
def _state_gap(q, x):
    """Best minus second-best action value at ``x``."""
    n = q.shape[1]
    if n < 2:
        return 0.0
    b = _greedy(q, x)
    second = -np.inf
    for a in range(n):
        if a != b and q[x, a] > second:
            second = q[x, a]
    return q[x, b] - second


@numba.njit(cache=True)
def _episode_kernel(env_code, params, cap, raw, obs, lo, hi, bins, q,
                    op_code, beta_starts, beta_lo, beta_hi, gamma,
                    alpha_code, alpha_a, alpha_b, alpha_c, eps,
                    uniforms, learn, visits, step0, mark, episode_id, visited):
    n_actions = q.shape[1]
    observe(env_code, raw, obs)
    x = encode(lo, hi, bins, obs)
    steps = 0
    n_visited = 0
    seg = 0
    while True:
        if mark[x] != episode_id:
            mark[x] = episode_id
            visited[n_visited] = x
            n_visited += 1
        # action selection
        if uniforms[0, steps] < eps:
            a = int(uniforms[1, steps] * n_actions)
            if a >= n_actions:
                a = n_actions - 1
        else:
            a = _greedy(q, x)
        reward, terminated = env_step(env_code, params, raw, a)
        observe(env_code, raw, obs)
        x_next = encode(lo, hi, bins, obs)
        steps += 1
        if learn:
            k = step0 + steps - 1
            v_next = 0.0 if terminated else q[x_next, _greedy(q, x_next)]
            if op_code == 0:
                target = reward + gamma * v_next
            elif op_code == 1:
                if x_next == x and not terminated:
                    target = reward + gamma * q[x, a]
                else:
                    target = reward + gamma * v_next
            else:
                while seg + 1 < beta_starts.shape[0] and beta_starts[seg + 1] <= k:
                    seg += 1
                beta = beta_lo[seg] + (beta_hi[seg] - beta_lo[seg]) * uniforms[2, steps - 1]
                gap = q[x, _greedy(q, x)] - q[x, a]
                target = reward + gamma * v_next - beta * gap
            visits[x, a] += 1
            if alpha_code == 0:
                alpha = alpha_a
            elif alpha_code == 1:
                frac = min(1.0, k / alpha_c)
                alpha = alpha_a + (alpha_b - alpha_a) * frac
            else:
                alpha = min(1.0, alpha_a / visits[x, a])
            q[x, a] = (1.0 - alpha) * q[x, a] + alpha * target
        x = x_next
        if terminated or steps >= cap:
            break
    total = 0.0
    for i in range(n_visited):
        total += _state_gap(q, visited[i])
    mean_gap = total / n_visited if n_visited > 0 else 0.0
    return steps, terminated, mean_gap


@dataclass
class _Workspace:
    """Per-trial scratch buffers and counters for the compiled loop."""

    env: object
    grid: GridSpec
    q: np.ndarray
    kind: OperatorKind
    gamma: float = DEFAULT_GAMMA
    alpha: Schedule = ConstantSchedule(0.1)
    visits: np.ndarray = None
    step_count: int = 0
    episode_count: int = 0

    def __post_init__(self):
        if self.grid.ndim != self.env.obs_dim:
            raise ValueError(f"grid has {self.grid.ndim} dimensions, {self.env.name} observes {self.env.obs_dim}")
        if self.q.shape != (self.grid.n_states, self.env.n_actions):
            raise ValueError(
                f"Q-table shape {self.q.shape} does not match grid/env "
                f"({self.grid.n_states}, {self.env.n_actions})"
            )
        if self.visits is None:
            self.visits = np.zeros(self.q.shape, dtype=np.int64)
        self.params = self.env.params()
        self.lo, self.hi, self.bins = self.grid.arrays()
        self.op = encode_operator(self.kind)
        self.mark = np.full(self.grid.n_states, -1, dtype=np.int64)
        self.visited = np.empty(self.env.cap + 1, dtype=np.int64)
        self.obs = np.empty(self.env.obs_dim)

    def episode(self, eps: float, rng: np.random.Generator, learn: bool = True):
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {eps}")
        raw = reset_raw(self.env, rng)
        uniforms = rng.random((3, self.env.cap))
        op_code, starts, blo, bhi = self.op
        a_code, a_a, a_b, a_c = self.alpha.encode()
        steps, _, gap = _episode_kernel(
            self.env.code, self.params, self.env.cap, raw, self.obs, self.lo, self.hi, self.bins,
            self.q, op_code, starts, blo, bhi, self.gamma, a_code, a_a, a_b, a_c, eps,
            uniforms, learn, self.visits, self.step_count, self.mark, self.episode_count,
            self.visited,
        )
        self.episode_count += 1
        if learn:
            self.step_count += steps
        return float(steps), int(steps), float(gap)


def run_episode(env, grid: GridSpec, q: np.ndarray, kind: OperatorKind, alpha_sched: Schedule,
                eps: float, rng: np.random.Generator, gamma: float = DEFAULT_GAMMA,
                learn: bool = True) -> tuple[float, int]:
    """Play one episode, updating ``q`` in place after every step.

    The score is the episode length in timesteps (the quantity minimized for
    MountainCar and Acrobot and maximized for CartPole).
    """
    ws = _Workspace(env, grid, q, kind, gamma, alpha_sched)
    score, steps, _ = ws.episode(eps, rng, learn)
    return score, steps


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class TrialRecord:
    seed: int
    operator: str
    env: str
    scores: np.ndarray
    mean_gaps: np.ndarray
    q: np.ndarray = field(repr=False)
    test_scores: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def episodes(self) -> int:
        return len(self.scores)


def train(env, grid: GridSpec, kind: OperatorKind, episodes: int, schedules: Schedules = Schedules(),
          seed: int = 0, test_episodes: int = 0) -> TrialRecord:
    """Train a zero-initialized Q-table for ``episodes`` episodes.

    After training, ``test_episodes`` greedy episodes (no exploration, no
    updates) are played with the same stream and recorded separately.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    rng = np.random.default_rng(seed)
    q = np.zeros((grid.n_states, env.n_actions))
    ws = _Workspace(env, grid, q, kind, schedules.gamma, schedules.alpha)
    scores = np.empty(episodes)
    gaps = np.empty(episodes)
    for i in range(episodes):
        eps = schedules.epsilon.value(i)
        scores[i], _, gaps[i] = ws.episode(eps, rng)
    tests = np.empty(test_episodes)
    for i in range(test_episodes):
        tests[i], _, _ = ws.episode(0.0, rng, learn=False)
    return TrialRecord(seed, str(kind), env.name, scores, gaps, q, tests)
