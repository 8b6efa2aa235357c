"""Empirical checks of stochastic and convex order between action-gap samples.

Tolerances come from the sample sizes:

* stochastic order compares empirical CDFs, each a binomial proportion with
  standard error at most ``sqrt(1/(4n))``; the default tolerance is three
  standard errors of the difference, ``3 * sqrt(1/(4n_hat) + 1/(4n_tilde))``.
* convex order compares means and stop-loss transforms ``E[(X - c)+]``.
  ``(x - c)+`` is 1-Lipschitz so its variance never exceeds ``Var[X]``; the
  default tolerance is ``3 * sqrt(s_hat^2/n_hat + s_tilde^2/n_tilde)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, exact_q_star, gap_table, greedy_value
from .operators import BetaSpec, OperatorKind, rso_backup, sample_beta
from .viter import convergence_report, iterate_operator

Z_SCORE = 3.0
GRID_POINTS = 41


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray
    label: str = ""
    seeds: tuple[int, int] = (0, 0)  # half-open range [first, last + 1)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("sample set must be non-empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class Verdict:
    passed: bool
    max_violation: float
    tol: float
    detail: str = ""

    def __bool__(self):
        return self.passed

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} (max violation {self.max_violation:.4g}, tol {self.tol:.4g}){' ' + self.detail if self.detail else ''}"


def gap_distribution(
    mdp: TabularMdp,
    kind: OperatorKind,
    pair: tuple[int, int],
    n_trials: int,
    k_max: int,
    base_seed: int = 0,
    q0: np.ndarray | None = None,
) -> SampleSet:
    """Tail-min action gap at ``pair`` over ``n_trials`` independent sample paths.

    Trial ``i`` uses seed ``base_seed + i``. An optimal pair has zero gap on
    every path; it triggers a warning and an all-zero sample set.
    """
    x, a = pair
    q_star = exact_q_star(mdp)
    if gap_table(q_star)[x, a] <= 0:
        warnings.warn(f"pair {pair} is optimal under Q*; its gap is identically zero", stacklevel=2)
        return SampleSet(np.zeros(n_trials), f"{kind}@{pair}", (base_seed, base_seed + n_trials))
    q0 = mdp.zeros_q() if q0 is None else q0
    out = np.empty(n_trials)
    for i in range(n_trials):
        _, trace = iterate_operator(mdp, kind, q0, k_max, base_seed + i, snapshot_stride=k_max)
        out[i] = convergence_report(trace, q_star).tail_min_gap[x, a]
    return SampleSet(out, f"{kind}@{pair}", (base_seed, base_seed + n_trials))


def ecdf(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Right-continuous empirical CDF of ``values`` evaluated at ``points``."""
    v = np.sort(np.asarray(values, dtype=float))
    return np.searchsorted(v, points, side="right") / v.size


def stochastic_order_tol(n_hat: int, n_tilde: int, z: float = Z_SCORE) -> float:
    return z * np.sqrt(0.25 / n_hat + 0.25 / n_tilde)


def convex_order_tol(hat: SampleSet, tilde: SampleSet, z: float = Z_SCORE) -> float:
    se2 = hat.values.var(ddof=1) / len(hat) if len(hat) > 1 else 0.0
    se2 += tilde.values.var(ddof=1) / len(tilde) if len(tilde) > 1 else 0.0
    return float(z * np.sqrt(se2))


def check_stochastic_order(hat: SampleSet, tilde: SampleSet, tol: float | None = None) -> Verdict:
    """Does ``hat >=_st tilde`` hold, i.e. ``F_hat <= F_tilde + tol`` at every pooled point?"""
    if tol is None:
        tol = stochastic_order_tol(len(hat), len(tilde))
    points = np.union1d(hat.values, tilde.values)
    excess = ecdf(hat.values, points) - ecdf(tilde.values, points)
    worst = float(max(excess.max(), 0.0))
    return Verdict(bool(worst <= tol), worst, tol)


def default_grid(hat: SampleSet, tilde: SampleSet, n: int = GRID_POINTS) -> np.ndarray:
    pooled = np.concatenate([hat.values, tilde.values])
    return np.linspace(pooled.min(), pooled.max(), n)


def stop_loss(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """``E[(X - c)+]`` for each ``c`` in ``thresholds``."""
    v = np.asarray(values, dtype=float)
    return np.maximum(v[None, :] - np.asarray(thresholds)[:, None], 0.0).mean(axis=1)


def check_convex_order(
    hat: SampleSet,
    tilde: SampleSet,
    threshold_grid: np.ndarray | None = None,
    tol: float | None = None,
) -> Verdict:
    """Does ``hat >=_cx tilde`` hold (equal means, larger stop-loss everywhere)?"""
    if threshold_grid is None:
        threshold_grid = default_grid(hat, tilde)
    if tol is None:
        tol = convex_order_tol(hat, tilde)
    mean_diff = abs(hat.mean - tilde.mean)
    shortfall = stop_loss(tilde.values, threshold_grid) - stop_loss(hat.values, threshold_grid)
    worst = float(max(mean_diff, shortfall.max(), 0.0))
    detail = f"|mean diff| {mean_diff:.4g}, max stop-loss shortfall {max(shortfall.max(), 0.0):.4g}"
    return Verdict(bool(worst <= tol), worst, tol, detail)


def one_step_variance_identity(
    mdp: TabularMdp,
    q: np.ndarray,
    pair: tuple[int, int],
    spec: BetaSpec,
    n_samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte Carlo vs closed-form variance of one RSO backup at a fixed ``q``.

    Conditioned on ``q`` the backup is affine in beta, so its variance is
    ``Var[beta] * (V(x) - q[x, a])^2``.
    """
    x, a = pair
    q = mdp.check_q(q)
    rng = np.random.default_rng(seed)
    betas = np.array([sample_beta(spec, 0, rng) for _ in range(n_samples)])
    backups = np.array([rso_backup(mdp, q, x, a, b) for b in betas])
    gap = greedy_value(q, x)[0] - q[x, a]
    analytic = spec.leaf(0).variance * gap**2
    return float(backups.var(ddof=1)), float(analytic)
