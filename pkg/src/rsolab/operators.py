"""Robust stochastic (RSO) backups next to the Bellman and consistent Bellman operators.

The RSO backup subtracts a randomly scaled action gap from the Bellman
backup::

    T_beta Q(x, a) = R(x, a) + gamma * E[max_b Q(x', b)] - beta * (V(x) - Q(x, a))

where ``beta`` is drawn from a :class:`BetaSpec` with mean in ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .mdp import TabularMdp, _check_action, _check_state, bellman_table, gap_table, state_values

BOUNDS_TOL = 1e-12


# --------------------------------------------------------------------------
# beta distributions
# --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class Constant:
    """Degenerate ``beta = c``."""

    c: float

    def __post_init__(self):
        if not math.isfinite(self.c) or not 0.0 <= self.c <= 1.0:
            raise ValueError(f"constant beta must lie in [0, 1], got mean {self.c}")

    @property
    def mean(self) -> float:
        return float(self.c)

    @property
    def variance(self) -> float:
        return 0.0

    def segments(self):
        return [(0, self.c, self.c)]

    def leaf(self, k: int):
        return self

    def __str__(self):
        return f"constant:{_fmt(self.c)}"


@dataclass(frozen=True)
class UniformHalfOpen:
    """``beta ~ U[lo, hi)``."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("uniform beta needs finite bounds")
        if self.lo < 0:
            raise ValueError(f"uniform beta needs lo >= 0, got {self.lo}")
        if self.hi <= self.lo:
            raise ValueError(f"uniform beta needs hi > lo, got [{self.lo}, {self.hi})")
        if not 0.0 <= self.mean <= 1.0:
            raise ValueError(
                f"mean of U[{self.lo}, {self.hi}) is {self.mean}, outside [0, 1]"
            )

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def variance(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    def segments(self):
        return [(0, self.lo, self.hi)]

    def leaf(self, k: int):
        return self

    def __str__(self):
        return f"uniform:{_fmt(self.lo)}:{_fmt(self.hi)}"


@dataclass(frozen=True)
class PiecewiseSchedule:
    """Switch between beta distributions at given iteration indices.

    ``pieces`` is a sequence of ``(start_k, spec)``; the first start must be
    0 and starts must be strictly increasing. Nested schedules index by the
    same global iteration counter.
    """

    pieces: tuple

    def __post_init__(self):
        pieces = tuple((int(k), spec) for k, spec in self.pieces)
        if not pieces:
            raise ValueError("schedule needs at least one piece")
        if pieces[0][0] != 0:
            raise ValueError("schedule must start at iteration 0")
        starts = [k for k, _ in pieces]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError(f"schedule switch points must be strictly increasing, got {starts}")
        object.__setattr__(self, "pieces", pieces)

    def leaf(self, k: int):
        spec = self.pieces[0][1]
        for start, s in self.pieces:
            if k >= start:
                spec = s
            else:
                break
        return spec.leaf(k)

    def mean_at(self, k: int) -> float:
        return self.leaf(k).mean

    def variance_at(self, k: int) -> float:
        return self.leaf(k).variance

    def segments(self):
        """Flatten into ``[(start_k, lo, hi), ...]`` with leaves sampled as ``lo + (hi-lo)u``."""
        out = []
        for i, (start, spec) in enumerate(self.pieces):
            stop = self.pieces[i + 1][0] if i + 1 < len(self.pieces) else None
            inner = spec.segments()
            for j, (s, lo, hi) in enumerate(inner):
                s_next = inner[j + 1][0] if j + 1 < len(inner) else None
                if s_next is not None and s_next <= start:
                    continue
                if stop is not None and s >= stop:
                    break
                out.append((max(s, start), lo, hi))
        return out

    def __str__(self):
        body = ",".join(f"{k}={spec}" for k, spec in self.pieces)
        return f"schedule:[{body}]"


BetaSpec = Union[Constant, UniformHalfOpen, PiecewiseSchedule]


def beta_mean(spec: BetaSpec, k: int = 0) -> float:
    return spec.leaf(k).mean


def beta_variance(spec: BetaSpec, k: int = 0) -> float:
    return spec.leaf(k).variance


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_beta_spec(text: str) -> BetaSpec:
    """Parse ``constant:c``, ``uniform:lo:hi`` or ``schedule:[k0=spec0,k1=spec1,...]``."""
    text = text.strip()
    head, _, rest = text.partition(":")
    head = head.lower()
    try:
        if head == "constant":
            return Constant(float(rest))
        if head == "uniform":
            lo, hi = rest.split(":")
            return UniformHalfOpen(float(lo), float(hi))
        if head == "schedule":
            if not (rest.startswith("[") and rest.endswith("]")):
                raise ValueError("schedule body must be enclosed in [...]")
            pieces = []
            for item in _split_top(rest[1:-1], ","):
                k, _, sub = item.partition("=")
                pieces.append((int(k), parse_beta_spec(sub)))
            return PiecewiseSchedule(tuple(pieces))
    except ValueError as err:
        raise ValueError(f"invalid beta spec {text!r}: {err}") from None
    raise ValueError(f"unknown beta spec {text!r}")


def sample_beta(spec: BetaSpec, k: int, rng: np.random.Generator) -> float:
    """Draw ``beta_k``. Constants consume no randomness."""
    leaf = spec.leaf(k)
    if isinstance(leaf, Constant):
        return float(leaf.c)
    return leaf.lo + (leaf.hi - leaf.lo) * rng.random()


# --------------------------------------------------------------------------
# operator kinds
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bellman:
    def __str__(self):
        return "bellman"


@dataclass(frozen=True)
class Consistent:
    def __str__(self):
        return "consistent"


@dataclass(frozen=True)
class Rso:
    beta: BetaSpec

    def __post_init__(self):
        if not isinstance(self.beta, (Constant, UniformHalfOpen, PiecewiseSchedule)):
            raise TypeError(f"Rso needs a BetaSpec, got {type(self.beta).__name__}")

    def __str__(self):
        return f"rso:{self.beta}"


OperatorKind = Union[Bellman, Consistent, Rso]


def parse_operator(text: str) -> OperatorKind:
    """Parse ``bellman``, ``consistent`` or ``rso:<beta spec>``."""
    text = text.strip()
    low = text.lower()
    if low == "bellman":
        return Bellman()
    if low == "consistent":
        return Consistent()
    if low.startswith("rso:"):
        return Rso(parse_beta_spec(text[4:]))
    raise ValueError(f"unknown operator {text!r} (expected bellman, consistent or rso:<beta>)")


# --------------------------------------------------------------------------
# model-based backups
# --------------------------------------------------------------------------


def _check_pair(mdp: TabularMdp, q: np.ndarray, x: int, a: int) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"Q-table shape {q.shape} does not match MDP")
    _check_state(q, x)
    _check_action(q, a)
    return q


def bellman_backup(mdp: TabularMdp, q: np.ndarray, x: int, a: int) -> float:
    q = _check_pair(mdp, q, x, a)
    return float(mdp.reward[x, a] + mdp.gamma * (mdp.transition[x, a] @ q.max(axis=1)))


def consistent_backup(mdp: TabularMdp, q: np.ndarray, x: int, a: int) -> float:
    """Bellman backup that keeps ``Q(x, a)`` as the continuation on self-transitions."""
    q = _check_pair(mdp, q, x, a)
    cont = q.max(axis=1)
    cont[x] = q[x, a]
    return float(mdp.reward[x, a] + mdp.gamma * (mdp.transition[x, a] @ cont))


def rso_backup(mdp: TabularMdp, q: np.ndarray, x: int, a: int, beta: float) -> float:
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    q = _check_pair(mdp, q, x, a)
    gap = q[x].max() - q[x, a]
    return bellman_backup(mdp, q, x, a) - beta * gap


def family_bounds_check(
    mdp: TabularMdp, q: np.ndarray, x: int, a: int, candidate_value: float, beta: float
) -> bool:
    """Is ``candidate_value`` between the RSO lower bound and the Bellman upper bound?"""
    q = _check_pair(mdp, q, x, a)
    upper = bellman_backup(mdp, q, x, a)
    lower = upper - beta * (q[x].max() - q[x, a])
    return lower - BOUNDS_TOL <= candidate_value <= upper + BOUNDS_TOL


def apply_operator(mdp: TabularMdp, kind: OperatorKind, q: np.ndarray, beta: float = 0.0) -> np.ndarray:
    """Synchronous backup of every (x, a); ``beta`` is used only for :class:`Rso`."""
    if isinstance(kind, Bellman):
        return bellman_table(mdp, q)
    if isinstance(kind, Consistent):
        v = state_values(q)
        p_self = mdp.self_loop
        # sum_{x' != x} P(x'|x,a) V(x') + P(x|x,a) Q(x,a)
        off_diag = mdp.transition @ v - p_self * v[:, None]
        return mdp.reward + mdp.gamma * (off_diag + p_self * q)
    if isinstance(kind, Rso):
        if beta < 0:
            raise ValueError(f"beta must be non-negative, got {beta}")
        return bellman_table(mdp, q) - beta * gap_table(q)
    raise TypeError(f"unknown operator kind {kind!r}")


# --------------------------------------------------------------------------
# model-free single-sample targets
# --------------------------------------------------------------------------


def sampled_target(
    kind: OperatorKind,
    q: np.ndarray,
    x: int,
    a: int,
    reward: float,
    x_next: int,
    beta: float = 0.0,
    gamma: float = 0.99,
    terminal: bool = False,
) -> float:
    """One-sample target for a Q-learning update.

    ``terminal`` replaces the continuation with zero for every operator.
    """
    q = np.asarray(q)
    _check_state(q, x)
    _check_state(q, x_next)
    _check_action(q, a)
    next_v = 0.0 if terminal else float(q[x_next].max())
    if isinstance(kind, Bellman):
        return reward + gamma * next_v
    if isinstance(kind, Consistent):
        cont = float(q[x, a]) if x_next == x and not terminal else next_v
        return reward + gamma * cont
    if isinstance(kind, Rso):
        return reward + gamma * next_v - beta * (float(q[x].max()) - float(q[x, a]))
    raise TypeError(f"unknown operator kind {kind!r}")
