import math

import numpy as np
import pytest

from adamcheck.core import (
    GradSequence,
    HyperParams,
    StepRecord,
    Trajectory,
    record_step,
    seeded_rng,
)
from adamcheck.optimizers import adam_run
from adamcheck.problems import quadratic_problem, evaluate
from adamcheck.analysis import (
    BoundReport,
    FuzzCandidate,
    InsufficientDataError,
    _batch_sides,
    _rhs_coefficient,
    _sides_f64,
    _trial_sequence,
    average_regret_series,
    conjecture_fuzz,
    conjecture_sides,
    conjecture_sides_exact,
    default_fuzz_grid,
    default_param_grid,
    error_sum,
    geometric_sum_bound_check,
    geometric_sum_closed_form,
    load_counterexample,
    replay_counterexample,
    theorem_bound,
    vhat_bound_check,
    write_counterexample,
    CounterexampleRecord,
)


def constant_w_trajectory(w_value, e_value, T, params=None):
    params = params or HyperParams()
    traj = Trajectory(d=1, params=params)
    z = np.zeros(1)
    for t in range(1, T + 1):
        rec = StepRecord(
            t=t, w_before=[w_value], g=z, e=e_value,
            m_hat=z, v_hat=z, w_after=[w_value],
        )
        record_step(traj, rec)
    return traj


# ---------------------------------------------------------------------------
# error sum
# ---------------------------------------------------------------------------

def test_error_sum_zero_when_at_minimizer():
    p = quadratic_problem(np.eye(1), np.zeros(1))
    traj = constant_w_trajectory(0.0, 0.0, 5)
    assert error_sum(traj, p, [0.0]) == 0.0


def test_error_sum_hand_value():
    # constant w_t = 1 on e(w) = 0.5 w^2, w* = 0: R = 3 * 0.5
    p = quadratic_problem(np.eye(1), np.zeros(1))
    traj = constant_w_trajectory(1.0, 0.5, 3)
    assert error_sum(traj, p, [0.0]) == pytest.approx(1.5, rel=1e-15)


def test_error_sum_horizon_mismatch():
    p = quadratic_problem(np.eye(1), np.zeros(1))
    traj = constant_w_trajectory(1.0, 0.5, 3)
    with pytest.raises(ValueError, match="horizon mismatch"):
        error_sum(traj, p, [0.0], T=4)


def test_error_sum_requires_objective_values():
    p = quadratic_problem(np.eye(1), np.zeros(1))
    traj = constant_w_trajectory(1.0, math.nan, 2)
    with pytest.raises(ValueError, match="objective"):
        error_sum(traj, p, [0.0])


# ---------------------------------------------------------------------------
# bound evaluation
# ---------------------------------------------------------------------------

def test_theorem_bound_pinned_single_step():
    # quadratic e(w) = 0.5 w^2, w0 = 1, so g1 = 1 and w1 = 0 under eta = 1,
    # eps = 0; every field below frozen from a 250-bit re-computation
    problem = quadratic_problem(np.eye(1), np.zeros(1))
    p = HyperParams(eta=1.0, beta1=0.9, beta2=0.999, lam=0.999, epsilon=0.0)
    traj = adam_run([1.0], lambda w, t: evaluate(problem, w, t), p, 1)
    assert traj.records[0].w_after[0] == pytest.approx(0.0, abs=1e-15)
    report = theorem_bound(traj, [0.0], problem)
    assert report.regret == pytest.approx(0.5, rel=1e-12)
    assert report.D_inf == pytest.approx(1.0, rel=1e-12)
    assert report.D_2 == pytest.approx(1.0, rel=1e-12)
    assert report.G_inf == pytest.approx(1.0, rel=1e-12)
    assert report.G_2 == pytest.approx(1.0, rel=1e-12)
    assert report.term1 == pytest.approx(5.0, rel=1e-12)
    assert report.term2 == pytest.approx(5000000.0, rel=1e-12)
    assert report.term3 == pytest.approx(3169.0377849103852, rel=1e-12)
    assert report.bound == pytest.approx(5003174.0377849108, rel=1e-12)
    assert report.slack == pytest.approx(5003173.5377849108, rel=1e-12)
    assert report.bound == report.term1 + report.term2 + report.term3


def test_theorem_bound_zero_gradient_run():
    problem = quadratic_problem(np.eye(2), np.zeros(2))
    p = HyperParams(eta=0.5)
    traj = adam_run(np.zeros(2), lambda w, t: evaluate(problem, w, t), p, 10)
    report = theorem_bound(traj, np.zeros(2), problem)
    assert report.regret == 0.0
    assert report.term1 == 0.0
    assert report.G_inf == 0.0
    assert report.slack == report.term2 == 0.0
    assert report.slack >= 0.0


def test_theorem_bound_rejects_empty_trajectory():
    problem = quadratic_problem(np.eye(1), np.zeros(1))
    with pytest.raises(ValueError, match="empty"):
        theorem_bound(Trajectory(d=1, params=HyperParams()), [0.0], problem)


# ---------------------------------------------------------------------------
# moment-ratio inequality sides
# ---------------------------------------------------------------------------

def test_sides_single_step():
    # T=1: m_hat = g and v_hat = g**2 exactly regardless of lam, so the
    # left side is |g| and the slack exceeds |g| (the coefficient is > 2)
    p = HyperParams(beta1=0.9, beta2=0.999, lam=0.999)
    for c in (3.7, -0.2):
        report = conjecture_sides(GradSequence(d=1, g=[[c]], g_inf_cap=4.0), p)
        assert report.lhs[0] == pytest.approx(abs(c), rel=1e-12)
        assert report.rhs[0] == pytest.approx(_rhs_coefficient(p) * abs(c), rel=1e-12)
        assert report.rhs[0] > 2 * abs(c)
        assert report.min_slack > abs(c)
        assert not report.violated


def test_sides_all_zero_sequence():
    p = HyperParams()
    report = conjecture_sides(GradSequence(d=2, g=np.zeros((6, 2)), g_inf_cap=1.0), p)
    assert np.array_equal(report.lhs, [0.0, 0.0])
    assert np.array_equal(report.rhs, [0.0, 0.0])
    assert report.min_slack == 0.0
    assert not report.violated


def test_sides_alternating_pinned():
    # g = +1, -1, +1, ... for T = 64; frozen from the 250-bit evaluation
    g = np.array([1.0 if t % 2 == 0 else -1.0 for t in range(64)]).reshape(-1, 1)
    p = HyperParams(beta1=0.9, beta2=0.999, lam=0.999)
    report = conjecture_sides(GradSequence(d=1, g=g, g_inf_cap=1.0), p)
    assert report.lhs[0] == pytest.approx(1.1634361992862992, rel=1e-12)
    assert report.rhs[0] == pytest.approx(2668.6633978192717, rel=1e-12)
    assert report.min_slack == pytest.approx(2667.4999616199852, rel=1e-12)


def test_sides_scale_homogeneity():
    rng = seeded_rng(17)
    g = rng.uniform(-1.0, 1.0, size=40).reshape(20, 2)
    p = HyperParams(beta1=0.8, beta2=0.99, lam=0.95)
    base = conjecture_sides(GradSequence(d=2, g=g, g_inf_cap=1.0), p)
    c = 3.25
    scaled = conjecture_sides(GradSequence(d=2, g=c * g, g_inf_cap=c), p)
    assert scaled.lhs == pytest.approx(c * base.lhs, rel=1e-12)
    assert scaled.rhs == pytest.approx(c * base.rhs, rel=1e-12)


def test_exact_sides_agree_with_double():
    rng = seeded_rng(23)
    g = rng.uniform(-1.0, 1.0, size=30).reshape(30, 1)
    p = HyperParams(beta1=0.9, beta2=0.999, lam=0.9)
    seq = GradSequence(d=1, g=g, g_inf_cap=1.0)
    report = conjecture_sides(seq, p)
    _, _, exact_slack = conjecture_sides_exact(seq, p)
    assert exact_slack == pytest.approx(report.min_slack, rel=1e-9)


def test_exact_sides_requires_enough_precision():
    seq = GradSequence(d=1, g=[[1.0]], g_inf_cap=1.0)
    with pytest.raises(ValueError, match="160"):
        conjecture_sides_exact(seq, HyperParams(), prec_bits=64)


def test_batch_engine_matches_reference_sides():
    rng = seeded_rng(31)
    grid = default_fuzz_grid()
    t_max, d, count = 48, 2, 16
    g = np.zeros((count, t_max, d))
    t_arr = np.empty(count, dtype=np.int64)
    params = []
    for j in range(count):
        T = 1 + int(rng.uniform() * t_max)
        t_arr[j] = T
        g[j, :T, :] = rng.uniform(-1.0, 1.0, size=T * d).reshape(T, d)
        params.append(grid[j % len(grid)])
    lhs_batch, rhs_batch = _batch_sides(g, t_arr, params)
    for j in range(count):
        lhs_ref, rhs_ref = _sides_f64(g[j, : t_arr[j], :], params[j])
        assert lhs_batch[j] == pytest.approx(lhs_ref, rel=1e-13, abs=1e-300)
        assert rhs_batch[j] == pytest.approx(rhs_ref, rel=1e-13, abs=1e-300)


# ---------------------------------------------------------------------------
# auxiliary chains
# ---------------------------------------------------------------------------

def test_geometric_sum_closed_form_hand_case():
    # 0 + 0.5*1 + 0.25*2 = 1.0
    assert geometric_sum_closed_form(0.5, 3) == pytest.approx(1.0, rel=1e-14)
    assert geometric_sum_closed_form(0.3, 1) == pytest.approx(0.0, abs=1e-15)


def test_geometric_sum_closed_form_vs_brute_force():
    rng = seeded_rng(41)
    for _ in range(200):
        lam = rng.uniform(0.01, 0.99)
        T = 1 + int(rng.uniform() * 500)
        direct = float(sum(lam ** t * t for t in range(T)))
        closed = geometric_sum_closed_form(lam, T)
        assert closed == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_geometric_sum_bound_hand_case():
    p = HyperParams(beta1=0.9, beta2=0.999, lam=0.5)
    lhs, rhs = geometric_sum_bound_check(p, 3)
    assert lhs == pytest.approx(10.659937284021737, rel=1e-12)
    assert rhs == pytest.approx(40.0, rel=1e-15)
    assert lhs <= rhs


def test_geometric_sum_bound_single_term():
    p = HyperParams(beta1=0.7, beta2=0.9, lam=0.5)
    lhs, rhs = geometric_sum_bound_check(p, 1)
    assert lhs == pytest.approx(0.7 / 0.3, rel=1e-14)
    assert lhs <= rhs


def test_vhat_bound_equality_at_constant_gradient():
    g_inf = 2.5

    def oracle(w, t):
        return 0.0, np.full(1, g_inf)

    p = HyperParams(beta1=0.9, beta2=0.99, lam=0.9)
    traj = adam_run([0.0], oracle, p, 30)
    # constant gradient telescopes: v_hat = g**2 at every t
    for rec in traj.records:
        assert math.sqrt(rec.v_hat[0]) == pytest.approx(g_inf, rel=1e-12)
    assert vhat_bound_check(traj, g_inf)


def test_vhat_bound_zero_gradients():
    traj = adam_run([1.0], lambda w, t: (0.0, np.zeros(1)), HyperParams(), 5)
    assert vhat_bound_check(traj, 2.0)


def test_vhat_bound_precondition_violation_names_offender():
    def oracle(w, t):
        return 0.0, np.array([1.0, 5.0 if t == 3 else 1.0])

    traj = adam_run([0.0, 0.0], oracle, HyperParams(), 5)
    with pytest.raises(ValueError, match=r"t=3, i=2"):
        vhat_bound_check(traj, 2.0)


def test_vhat_bound_on_random_trajectories():
    rng = seeded_rng(53)
    for trial in range(50):
        T = 1 + int(rng.uniform() * 40)
        g_all = rng.uniform(-3.0, 3.0, size=T * 2).reshape(T, 2)
        gs = iter(g_all)
        p = HyperParams(beta1=0.8, beta2=0.95, lam=0.99)
        traj = adam_run(np.zeros(2), lambda w, t: (0.0, next(gs)), p, T)
        assert vhat_bound_check(traj, float(np.max(np.abs(g_all))))


# ---------------------------------------------------------------------------
# average regret series
# ---------------------------------------------------------------------------

def synthetic_report(T, bound, regret=1.0):
    return BoundReport(
        T=T, d=1, regret=regret, D_inf=1, D_2=1, G_inf=1, G_2=1,
        term1=bound, term2=0.0, term3=0.0, bound=bound, slack=bound - regret,
    )


def test_average_regret_series_recovers_sqrt_slope():
    reports = [synthetic_report(T, math.sqrt(T)) for T in (100, 316, 1000, 3162, 10000)]
    rows, slope = average_regret_series(reports)
    assert len(rows) == 5
    assert slope == pytest.approx(-0.5, abs=1e-6)


def test_average_regret_series_fits_largest_decade_only():
    # junk growth below T = 1000 must not disturb the decade fit
    reports = [
        synthetic_report(100, 100.0 ** 2),
        synthetic_report(316, 316.0 ** 2),
        synthetic_report(1000, math.sqrt(1000)),
        synthetic_report(3162, math.sqrt(3162)),
        synthetic_report(10000, math.sqrt(10000)),
    ]
    _, slope = average_regret_series(reports)
    assert slope == pytest.approx(-0.5, abs=1e-6)


def test_average_regret_series_requires_three_reports():
    reports = [synthetic_report(10, 1.0)]
    with pytest.raises(InsufficientDataError):
        average_regret_series(reports)


def test_average_regret_series_requires_increasing_T():
    reports = [synthetic_report(T, 1.0) for T in (10, 10, 20)]
    with pytest.raises(ValueError, match="increasing"):
        average_regret_series(reports)


# ---------------------------------------------------------------------------
# counterexample records
# ---------------------------------------------------------------------------

def make_record(label="unit", rhs_coeff=None):
    rng = seeded_rng(61)
    g = rng.uniform(-1.0, 1.0, size=12).reshape(6, 2)
    p = HyperParams(beta1=0.9, beta2=0.999, lam=0.99)
    coeff = _rhs_coefficient(p) if rhs_coeff is None else rhs_coeff
    lhs, rhs = _sides_f64(g, p, rhs_coeff=coeff)
    return CounterexampleRecord(
        label=label, params=p, T=6, d=2, g=g, g_inf_cap=1.0, rhs_coeff=coeff,
        lhs=lhs, rhs=rhs, min_slack=float(np.min(rhs - lhs)),
        exact_min_slack=float(np.min(rhs - lhs)),
    )


def test_counterexample_round_trip(tmp_path):
    rec = make_record()
    path = tmp_path / "ce.txt"
    write_counterexample(path, rec)
    back = load_counterexample(path)
    assert back.label == rec.label
    assert back.params == rec.params
    assert np.array_equal(back.g, rec.g)
    assert np.array_equal(back.lhs, rec.lhs)
    assert back.min_slack == rec.min_slack


def test_replay_counterexample_reproduces_slack(tmp_path):
    rec = make_record()
    path = tmp_path / "ce.txt"
    write_counterexample(path, rec)
    loaded, recomputed = replay_counterexample(path)
    assert recomputed == pytest.approx(loaded.min_slack, rel=1e-12)


# ---------------------------------------------------------------------------
# fuzz engine
# ---------------------------------------------------------------------------

def test_fuzz_zero_trials_sentinel():
    summary = conjecture_fuzz(0, 16, 1, default_fuzz_grid(), seed=1)
    assert summary.min_slack == math.inf
    assert summary.argmin_label is None
    assert not summary.violation_found


def test_fuzz_seed_determinism():
    a = conjecture_fuzz(500, 32, 1, default_fuzz_grid(), seed=99)
    b = conjecture_fuzz(500, 32, 1, default_fuzz_grid(), seed=99)
    assert a.min_slack == b.min_slack
    assert a.min_rel_slack == b.min_rel_slack
    assert a.argmin_label == b.argmin_label
    assert a.family_counts == b.family_counts
    assert [(n.label, n.outcome) for n in a.near_misses] == [
        (n.label, n.outcome) for n in b.near_misses
    ]
    c = conjecture_fuzz(500, 32, 1, default_fuzz_grid(), seed=100)
    assert c.min_slack != a.min_slack or c.argmin_label != a.argmin_label


def test_fuzz_argmin_sequence_replays():
    summary = conjecture_fuzz(300, 32, 1, default_fuzz_grid(), seed=5)
    assert summary.argmin_seq is not None
    report = conjecture_sides(summary.argmin_seq, summary.argmin_params)
    assert report.min_slack == pytest.approx(summary.min_slack, rel=1e-12, abs=1e-15)


def test_fuzz_rejects_empty_grid():
    with pytest.raises(ValueError):
        conjecture_fuzz(1, 8, 1, [], seed=1)


def test_fuzz_injected_synthetic_violation_is_detected(tmp_path):
    # shrinking the right-side coefficient makes a genuinely recomputable
    # "violation": the machinery must screen, escalate, confirm, serialize
    rng = seeded_rng(71)
    g = rng.uniform(-1.0, 1.0, size=24).reshape(24, 1)
    p = HyperParams(beta1=0.9, beta2=0.999, lam=0.999)
    seq = GradSequence(d=1, g=g, g_inf_cap=1.0)
    lhs, _ = _sides_f64(np.asarray(seq.g), p)
    tiny_coeff = float(lhs[0]) / float(np.linalg.norm(g)) * 0.5
    cand = FuzzCandidate(label="synthetic", params=p, seq=seq, rhs_coeff=tiny_coeff)

    summary = conjecture_fuzz(
        0, 24, 1, default_fuzz_grid(), seed=3, out_dir=tmp_path, injected=[cand]
    )
    assert summary.violation_found
    assert summary.near_misses[0].outcome == "confirmed"
    assert summary.near_misses[0].exact_min_slack < 0

    violation = summary.violations[0]
    assert violation.path is not None
    loaded, recomputed = replay_counterexample(violation.path)
    assert loaded.min_slack < 0
    assert recomputed == pytest.approx(loaded.min_slack, rel=1e-12)


def test_fuzz_injected_honest_candidate_is_not_flagged(tmp_path):
    rng = seeded_rng(73)
    g = rng.uniform(-1.0, 1.0, size=24).reshape(24, 1)
    p = HyperParams(beta1=0.9, beta2=0.999, lam=0.999)
    cand = FuzzCandidate(
        label="honest", params=p, seq=GradSequence(d=1, g=g, g_inf_cap=1.0)
    )
    summary = conjecture_fuzz(
        0, 24, 1, default_fuzz_grid(), seed=3, out_dir=tmp_path, injected=[cand]
    )
    assert not summary.violation_found
    assert summary.near_misses == []


def test_fuzz_near_miss_is_escalated_and_cleared(tmp_path):
    # choose the coefficient so the slack is positive but under the screen
    # threshold: the escalation must run and clear it
    rng = seeded_rng(79)
    g = rng.uniform(-1.0, 1.0, size=16).reshape(16, 1)
    p = HyperParams(beta1=0.9, beta2=0.999, lam=0.999)
    seq = GradSequence(d=1, g=g, g_inf_cap=1.0)
    lhs, _ = _sides_f64(np.asarray(seq.g), p)
    norm = float(np.linalg.norm(g))
    coeff = float(lhs[0]) / norm * (1.0 + 5e-7)  # slack ~ 5e-7 * rhs
    cand = FuzzCandidate(label="near", params=p, seq=seq, rhs_coeff=coeff)
    summary = conjecture_fuzz(
        0, 16, 1, default_fuzz_grid(), seed=3, out_dir=tmp_path, injected=[cand]
    )
    assert len(summary.near_misses) == 1
    assert summary.near_misses[0].outcome == "cleared"
    assert not summary.violation_found


def test_report_serializers():
    from adamcheck.analysis import (
        bound_report_text,
        bound_reports_csv,
        conjecture_report_csv,
        conjecture_report_text,
    )

    report = synthetic_report(10, 4.0)
    csv = bound_reports_csv([report, report])
    lines = csv.splitlines()
    assert lines[0].startswith("T,d,regret")
    assert len(lines) == 3
    assert "slack" in bound_report_text(report)

    p = HyperParams()
    side = conjecture_sides(GradSequence(d=2, g=np.ones((4, 2)), g_inf_cap=1.0), p)
    assert np.all(side.lhs >= 0) and np.all(side.rhs >= 0)
    ccsv = conjecture_report_csv(side)
    assert ccsv.splitlines()[0] == "i,lhs,rhs,slack"
    assert len(ccsv.splitlines()) == 3
    assert "min slack" in conjecture_report_text(side)


def test_fuzz_trial_sequences_respect_cap_and_families():
    seen = set()
    for k in range(200):
        fam, T, g = _trial_sequence(seed=11, k=k, t_max=32, d=2, cap=1.0)
        seen.add(fam)
        assert 1 <= T <= 32
        assert g.shape == (T, 2)
        assert np.max(np.abs(g)) <= 1.0
    assert seen == {0, 1, 2, 3}


def test_default_grids_satisfy_gamma_hypothesis():
    for p in default_param_grid() + default_fuzz_grid():
        assert p.gamma < 1
    assert len(default_fuzz_grid()) >= 8
