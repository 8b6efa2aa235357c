import numpy as np
import pytest

from rsolab.mdp import exact_q_star, random_mdp, state_values
from rsolab.operators import Bellman, Consistent, Constant, Rso, UniformHalfOpen, apply_operator
from rsolab.viter import (
    IterationTrace,
    convergence_report,
    geometric_tail_check,
    iterate_operator,
    monotone_aux_check,
    tail_length,
    trace_rows,
)

RSO2 = Rso(UniformHalfOpen(0.0, 2.0))


def test_tail_length():
    assert tail_length(1) == 1
    assert tail_length(10) == 1
    assert tail_length(5000) == 500
    assert tail_length(11) == 2


def test_bellman_contraction_bound():
    mdp = random_mdp(3, 5, 3, 0.9)
    q_star = exact_q_star(mdp)
    q0 = np.zeros((5, 3))
    for k in (10, 50, 200):
        q, _ = iterate_operator(mdp, Bellman(), q0, k, 0)
        bound = mdp.gamma**k * np.max(np.abs(q0 - q_star))
        assert np.max(np.abs(q - q_star)) <= bound + 1e-9


def test_m2_rso_converges(mdp2):
    for seed in range(5):
        q, _ = iterate_operator(mdp2, RSO2, np.zeros((2, 2)), 500, seed)
        assert abs(q[0].max() - 2.0) < 1e-3


def test_deterministic(mdp2):
    _, a = iterate_operator(mdp2, RSO2, np.zeros((2, 2)), 200, 7)
    _, b = iterate_operator(mdp2, RSO2, np.zeros((2, 2)), 200, 7)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.betas, b.betas)
    np.testing.assert_array_equal(a.gap_snapshots, b.gap_snapshots)


def test_one_beta_per_sweep(mdp2):
    _, trace = iterate_operator(mdp2, RSO2, np.zeros((2, 2)), 50, 3)
    rng = np.random.default_rng(3)
    np.testing.assert_array_equal(trace.betas, 2.0 * rng.random(50))
    _, tb = iterate_operator(mdp2, Bellman(), np.zeros((2, 2)), 5, 3)
    assert np.all(np.isnan(tb.betas))


def test_snapshots_cover_stride_and_tail(mdp2):
    _, trace = iterate_operator(mdp2, RSO2, np.zeros((2, 2)), 100, 0, snapshot_stride=25)
    ks = list(trace.snapshot_ks)
    assert ks[:4] == [0, 25, 50, 75]
    assert ks[-10:] == list(range(91, 101))
    assert np.all(np.diff(trace.snapshot_ks) > 0)


def test_errors(mdp2):
    with pytest.raises(ValueError):
        iterate_operator(mdp2, Bellman(), np.zeros((3, 2)), 10, 0)
    with pytest.raises(ValueError):
        iterate_operator(mdp2, Bellman(), np.zeros((2, 2)), 0, 0)
    with pytest.raises(ValueError):
        iterate_operator(mdp2, Bellman(), np.zeros((2, 2)), 5, 0, snapshot_stride=0)


def test_report_bellman_gaps_exact():
    mdp = random_mdp(12, 4, 3, 0.8)
    q_star = exact_q_star(mdp)
    _, trace = iterate_operator(mdp, Bellman(), np.zeros((4, 3)), 400, 0)
    rep = convergence_report(trace, q_star)
    np.testing.assert_allclose(rep.tail_min_gap, rep.baseline_gap, atol=1e-6)
    assert rep.max_value_error < 1e-9


def test_report_m2_gap_increase(mdp2):
    _, trace = iterate_operator(mdp2, RSO2, np.zeros((2, 2)), 500, 4)
    rep = convergence_report(trace, exact_q_star(mdp2))
    assert rep.tail_min_gap[0, 1] >= 2.0 - 1e-6


def test_report_single_iteration(mdp2):
    _, trace = iterate_operator(mdp2, Bellman(), np.zeros((2, 2)), 1, 0)
    rep = convergence_report(trace, exact_q_star(mdp2))
    np.testing.assert_array_equal(rep.tail_min_gap, trace.gap_snapshots[-1])
    np.testing.assert_allclose(rep.value_error, np.abs(trace.values[-1] - np.array([2.0, 0.0])), atol=1e-9)


def test_report_shape_mismatch(mdp2):
    _, trace = iterate_operator(mdp2, Bellman(), np.zeros((2, 2)), 3, 0)
    with pytest.raises(ValueError):
        convergence_report(trace, np.zeros((3, 2)))


class TestGeometricTail:
    def test_bellman(self):
        for seed in range(5):
            mdp = random_mdp(seed, 6, 3, 0.9)
            q0 = np.random.default_rng(seed).normal(size=(6, 3)) * 5
            _, trace = iterate_operator(mdp, Bellman(), q0, 200, 0)
            assert geometric_tail_check(trace, mdp.gamma)
            assert monotone_aux_check(trace, mdp.gamma)

    def test_rso_m2(self, mdp2):
        for seed in range(20):
            _, trace = iterate_operator(mdp2, RSO2, np.zeros((2, 2)), 300, seed)
            assert geometric_tail_check(trace, mdp2.gamma)
            assert monotone_aux_check(trace, mdp2.gamma)

    def test_violation_detected(self, mdp2):
        _, trace = iterate_operator(mdp2, Bellman(), np.zeros((2, 2)), 100, 0)
        values = trace.values.copy()
        values[90:] -= 1.0
        bad = IterationTrace(**{**trace.__dict__, "values": values})
        assert not geometric_tail_check(bad, mdp2.gamma)
        assert not monotone_aux_check(bad, mdp2.gamma)


def test_trace_rows(mdp2):
    _, trace = iterate_operator(mdp2, Consistent(), np.zeros((2, 2)), 20, 0, snapshot_stride=5)
    rows = list(trace_rows(trace))
    assert rows[0][0] == 0 and np.isnan(rows[0][1])
    k, delta, gaps = rows[1]
    assert k == 5 and delta == trace.deltas[4] and gaps.shape == (4,)


def test_constant_rso_matches_apply(mdp2):
    q, trace = iterate_operator(mdp2, Rso(Constant(1.0)), np.zeros((2, 2)), 100, 0)
    np.testing.assert_allclose(state_values(q), [2.0, 0.0], atol=1e-9)
    assert np.all(trace.betas == 1.0)


@pytest.mark.parametrize("kind", [Bellman(), Consistent(), RSO2, Rso(Constant(0.4))], ids=str)
def test_compiled_sweeps_match_apply_operator(kind):
    mdp = random_mdp(31, 5, 3, 0.9)
    q0 = np.random.default_rng(31).normal(size=(5, 3))
    q, trace = iterate_operator(mdp, kind, q0, 60, 2, snapshot_stride=7)
    ref = q0.copy()
    refs = [ref]
    for k in range(60):
        beta = 0.0 if np.isnan(trace.betas[k]) else trace.betas[k]
        ref = apply_operator(mdp, kind, ref, beta)
        refs.append(ref)
    np.testing.assert_allclose(q, ref, atol=1e-12)
    np.testing.assert_allclose(trace.values, [state_values(r) for r in refs], atol=1e-12)
    for k, snap in zip(trace.snapshot_ks, trace.gap_snapshots):
        np.testing.assert_allclose(snap, state_values(refs[k])[:, None] - refs[k], atol=1e-12)
