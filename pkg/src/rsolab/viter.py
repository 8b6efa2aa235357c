"""Synchronous operator iteration ``Q_{k+1} = T_k Q_k`` and its diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .mdp import TabularMdp, gap_table, state_values
from .operators import Bellman, Consistent, OperatorKind, Rso, sample_beta

TAIL_FRACTION = 0.1
TAIL_SLACK = 1e-9


def tail_length(k_max: int, fraction: float = TAIL_FRACTION) -> int:
    """Number of final iterations treated as the trace tail (at least one)."""
    return max(1, math.ceil(fraction * k_max))


@dataclass
class IterationTrace:
    """Sample path of one synchronous run.

    ``values[k]`` is ``V_k`` for every ``k = 0..k_max``; ``deltas[k]`` is
    ``||V_{k+1} - V_k||_inf`` and ``betas[k]`` the ``beta_k`` used to build
    ``Q_{k+1}`` (NaN for deterministic operators). Gap snapshots are kept at
    every ``stride``-th iteration and at every iteration of the tail window.
    """

    k_max: int
    stride: int
    tail_start: int
    values: np.ndarray
    deltas: np.ndarray
    betas: np.ndarray
    snapshot_ks: np.ndarray
    gap_snapshots: np.ndarray
    final_q: np.ndarray = field(repr=False)

    def tail_gaps(self) -> np.ndarray:
        mask = self.snapshot_ks >= self.tail_start
        return self.gap_snapshots[mask]


@numba.njit(cache=True)
def _sweeps(p, r, gamma, consistent, betas, q, snap_ks, values, deltas, snaps):
    """Run ``len(betas)`` synchronous backups in place, recording V_k and gap snapshots.

    ``betas`` is all zeros for the Bellman operator; ``consistent`` selects the
    self-loop continuation instead of the gap penalty.
    """
    n_s, n_a = q.shape
    v = np.empty(n_s)
    nxt = np.empty_like(q)
    for x in range(n_s):
        v[x] = q[x].max()
    values[0] = v
    si = 0
    if snap_ks[0] == 0:
        for x in range(n_s):
            for a in range(n_a):
                snaps[0, x, a] = v[x] - q[x, a]
        si = 1
    for k in range(betas.shape[0]):
        for x in range(n_s):
            for a in range(n_a):
                ev = 0.0
                for y in range(n_s):
                    ev += p[x, a, y] * v[y]
                if consistent:
                    ev += p[x, a, x] * (q[x, a] - v[x])
                    nxt[x, a] = r[x, a] + gamma * ev
                else:
                    nxt[x, a] = r[x, a] + gamma * ev - betas[k] * (v[x] - q[x, a])
        q[:] = nxt
        delta = 0.0
        for x in range(n_s):
            vx = q[x].max()
            delta = max(delta, abs(vx - v[x]))
            v[x] = vx
        values[k + 1] = v
        deltas[k] = delta
        if si < snap_ks.shape[0] and snap_ks[si] == k + 1:
            for x in range(n_s):
                for a in range(n_a):
                    snaps[si, x, a] = v[x] - q[x, a]
            si += 1


def iterate_operator(
    mdp: TabularMdp,
    kind: OperatorKind,
    q0: np.ndarray,
    k_max: int,
    seed: int,
    snapshot_stride: int = 10,
) -> tuple[np.ndarray, IterationTrace]:
    """Run ``k_max`` synchronous sweeps of ``kind`` starting from ``q0``.

    RSO draws a single ``beta_k`` per sweep, shared by every (x, a).
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be at least 1")
    if not isinstance(kind, (Bellman, Consistent, Rso)):
        raise TypeError(f"unknown operator kind {kind!r}")
    q = mdp.check_q(q0).copy()
    rng = np.random.default_rng(seed)
    tail_start = k_max - tail_length(k_max) + 1

    betas = np.full(k_max, np.nan)
    if isinstance(kind, Rso):
        betas[:] = [sample_beta(kind.beta, k, rng) for k in range(k_max)]
    ks = np.arange(k_max + 1)
    snap_ks = ks[(ks % snapshot_stride == 0) | (ks >= tail_start)]

    values = np.empty((k_max + 1, mdp.n_states))
    deltas = np.empty(k_max)
    snaps = np.empty((len(snap_ks), mdp.n_states, mdp.n_actions))
    sweep_betas = np.nan_to_num(betas, nan=0.0)
    _sweeps(mdp.transition, mdp.reward, mdp.gamma, isinstance(kind, Consistent), sweep_betas, q,
            snap_ks, values, deltas, snaps)

    trace = IterationTrace(
        k_max=k_max,
        stride=snapshot_stride,
        tail_start=tail_start,
        values=values,
        deltas=deltas,
        betas=betas,
        snapshot_ks=snap_ks,
        gap_snapshots=snaps,
        final_q=q.copy(),
    )
    return q, trace


@dataclass
class ConvergenceReport:
    k: int
    value_error: np.ndarray  # |V_k(x) - V*(x)| per state
    tail_min_gap: np.ndarray  # min over the trace tail of V_k(x) - Q_k(x, a)
    baseline_gap: np.ndarray  # V*(x) - Q*(x, a)

    @property
    def max_value_error(self) -> float:
        return float(np.max(self.value_error))

    @property
    def gap_excess(self) -> np.ndarray:
        return self.tail_min_gap - self.baseline_gap


def convergence_report(trace: IterationTrace, q_star: np.ndarray) -> ConvergenceReport:
    """Compare a trace's final values and tail gaps with the exact solution."""
    q_star = np.asarray(q_star, dtype=float)
    if len(trace.snapshot_ks) == 0:
        raise ValueError("empty trace")
    if q_star.shape != trace.gap_snapshots.shape[1:]:
        raise ValueError(f"Q* shape {q_star.shape} does not match trace {trace.gap_snapshots.shape[1:]}")
    tail = trace.tail_gaps()
    if len(tail) == 0:
        tail = trace.gap_snapshots[-1:]
    return ConvergenceReport(
        k=int(trace.snapshot_ks[-1]),
        value_error=np.abs(trace.values[-1] - state_values(q_star)),
        tail_min_gap=tail.min(axis=0),
        baseline_gap=gap_table(q_star),
    )


def geometric_tail_check(trace: IterationTrace, gamma: float, slack: float = TAIL_SLACK) -> bool:
    """Check ``V_{k+1}(x) - V_k(x) >= -gamma^k ||V_1 - V_0||_inf`` along the whole trace."""
    v = np.asarray(trace.values)
    if len(v) < 2:
        return True
    steps = np.diff(v, axis=0)
    scale = np.max(np.abs(steps[0]))
    bound = -(gamma ** np.arange(len(steps))) * scale
    return bool(np.all(steps >= bound[:, None] - slack))


def monotone_aux_check(trace: IterationTrace, gamma: float, slack: float = TAIL_SLACK) -> bool:
    """``V_k(x) + f_k`` must be non-decreasing, ``f_k = ||V_1-V_0|| sum_{l<k} gamma^l``."""
    v = np.asarray(trace.values)
    if len(v) < 2:
        return True
    scale = np.max(np.abs(v[1] - v[0]))
    f = scale * np.concatenate([[0.0], np.cumsum(gamma ** np.arange(len(v) - 1))])
    aux = v + f[:, None]
    return bool(np.all(np.diff(aux, axis=0) >= -slack))


def trace_rows(trace: IterationTrace):
    """Yield ``(k, sup_delta, gaps...)`` rows at snapshot iterations for CSV export."""
    for k, gaps in zip(trace.snapshot_ks, trace.gap_snapshots):
        delta = trace.deltas[k - 1] if k > 0 else float("nan")
        yield int(k), float(delta), gaps.ravel()
