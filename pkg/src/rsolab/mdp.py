"""Finite discounted MDPs, Q-table helpers and the exact value-iteration solver."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_SUM_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Raised when value iteration fails to reach the requested residual."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"value iteration did not converge after {iterations} sweeps "
            f"(final residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class TabularMdp:
    """A finite MDP ``(P, R, gamma)`` with dense transitions.

    ``transition`` has shape ``(n_states, n_actions, n_states)`` and holds
    ``P(x'|x,a)`` in ``transition[x, a, x']``. ``reward`` has shape
    ``(n_states, n_actions)``.
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        p = np.array(self.transition, dtype=float)
        r = np.array(self.reward, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape[:2]:
            raise ValueError(f"reward shape {r.shape} does not match transition {p.shape[:2]}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("need at least one state and one action")
        if np.any(p < 0):
            raise ValueError("transition probabilities must be non-negative")
        sums = p.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise ValueError(f"transition rows must sum to 1 (worst deviation {worst:.3e})")
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        if not 0.0 <= float(self.gamma) < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def self_loop(self) -> np.ndarray:
        """``P(x|x,a)`` as an ``(n_states, n_actions)`` array."""
        idx = np.arange(self.n_states)
        return self.transition[idx, :, idx]

    def zeros_q(self) -> np.ndarray:
        return np.zeros((self.n_states, self.n_actions))

    def check_q(self, q: np.ndarray) -> np.ndarray:
        """Validate a Q-table against this MDP and return it as a float array."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_states, self.n_actions):
            raise ValueError(
                f"Q-table shape {q.shape} does not match MDP "
                f"({self.n_states}, {self.n_actions})"
            )
        if not np.all(np.isfinite(q)):
            raise ValueError("Q-table entries must be finite")
        return q


def m2() -> TabularMdp:
    """Two-state, two-action test MDP with ``Q*(0,.) = (2, 0)`` and ``Q*(1,.) = 0``.

    Action 0 in state 0 loops back with reward 1; action 1 moves to the
    absorbing zero-reward state 1. Discount 0.5.
    """
    p = np.zeros((2, 2, 2))
    p[0, 0, 0] = 1.0
    p[0, 1, 1] = 1.0
    p[1, :, 1] = 1.0
    r = np.array([[1.0, 0.0], [0.0, 0.0]])
    return TabularMdp(p, r, 0.5)


def _check_state(q: np.ndarray, x: int) -> None:
    if not 0 <= x < q.shape[0]:
        raise IndexError(f"state index {x} out of range for {q.shape[0]} states")


def _check_action(q: np.ndarray, a: int) -> None:
    if not 0 <= a < q.shape[1]:
        raise IndexError(f"action index {a} out of range for {q.shape[1]} actions")


def greedy_value(q: np.ndarray, x: int) -> tuple[float, int]:
    """Return ``(max_a q[x, a], argmax)`` with ties broken toward the lowest action."""
    q = np.asarray(q)
    _check_state(q, x)
    a = int(np.argmax(q[x]))
    return float(q[x, a]), a


def action_gap(q: np.ndarray, x: int, a: int) -> float:
    """``V(x) - q[x, a]``, the margin of the greedy action over ``a``."""
    q = np.asarray(q)
    _check_state(q, x)
    _check_action(q, a)
    return greedy_value(q, x)[0] - float(q[x, a])


def state_values(q: np.ndarray) -> np.ndarray:
    return np.max(q, axis=1)


def gap_table(q: np.ndarray) -> np.ndarray:
    """All action gaps ``V(x) - q[x, a]`` at once."""
    return np.max(q, axis=1, keepdims=True) - q


def bellman_table(mdp: TabularMdp, q: np.ndarray) -> np.ndarray:
    """Apply the Bellman optimality backup to every (x, a) simultaneously."""
    return mdp.reward + mdp.gamma * (mdp.transition @ state_values(q))


def bellman_residual(mdp: TabularMdp, q: np.ndarray) -> float:
    return float(np.max(np.abs(bellman_table(mdp, q) - q)))


def exact_q_star(mdp: TabularMdp, tol: float = 1e-10, max_iters: int = 100_000) -> np.ndarray:
    """Solve for ``Q*`` by value iteration.

    Iterates until the sup-norm Bellman residual of the returned table is at
    most ``tol``.

    Raises:
        ValueError: if ``tol`` is not positive.
        ConvergenceError: if the residual is still above ``tol`` after
            ``max_iters`` sweeps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = mdp.zeros_q()
    residual = np.inf
    for it in range(max_iters + 1):
        q_next = bellman_table(mdp, q)
        residual = float(np.max(np.abs(q_next - q)))
        if residual <= tol:
            return q
        if it == max_iters:
            break
        q = q_next
    raise ConvergenceError(residual, max_iters)


def random_mdp(seed: int, n_states: int, n_actions: int, gamma: float) -> TabularMdp:
    """Draw a random MDP: flat-Dirichlet transition rows, rewards uniform on [0, 1]."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("n_states and n_actions must be at least 1")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return TabularMdp(p, r, gamma)



def random_corpus(n: int = 50, max_states: int = 10, max_actions: int = 4, max_gamma: float = 0.95):
    """Deterministic list of ``n`` random MDPs for property checks.

    MDP ``i`` draws its size and discount from ``default_rng(i)``: states in
    ``[2, max_states]``, actions in ``[2, max_actions]``, gamma uniform on
    ``[0, max_gamma)``. Its tables come from ``random_mdp(i, ...)``.
    """
    out = []
    for i in range(n):
        rng = np.random.default_rng(i)
        s = int(rng.integers(2, max_states + 1))
        a = int(rng.integers(2, max_actions + 1))
        g = float(rng.uniform(0.0, max_gamma))
        out.append(random_mdp(i, s, a, g))
    return out

# MDP file format (JSON):
#   {"n_states": S, "n_actions": A, "gamma": g,
#    "reward": [[R(0,0), ...], ...],                 S rows of A values
#    "transition": [[[P(0|0,0), ...], ...], ...]}     [x][a][x']
# Floats are written with repr(), which round-trips doubles exactly.


def mdp_to_dict(mdp: TabularMdp) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "reward": mdp.reward.tolist(),
        "transition": mdp.transition.tolist(),
    }


def mdp_from_dict(data: dict) -> TabularMdp:
    mdp = TabularMdp(
        np.array(data["transition"], dtype=float),
        np.array(data["reward"], dtype=float),
        float(data["gamma"]),
    )
    if mdp.n_states != int(data["n_states"]) or mdp.n_actions != int(data["n_actions"]):
        raise ValueError(
            f"declared size ({data['n_states']}, {data['n_actions']}) does not match "
            f"tables ({mdp.n_states}, {mdp.n_actions})"
        )
    return mdp


def save_mdp(mdp: TabularMdp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=1) + "\n")


def load_mdp(path: str | Path) -> TabularMdp:
    return mdp_from_dict(json.loads(Path(path).read_text()))
