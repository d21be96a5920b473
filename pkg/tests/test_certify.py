import csv
import json

import numpy as np
import pytest

from cosparse_admm.certify import (
    HMetric,
    Tolerances,
    certified_reference,
    certify_all,
    check_contraction,
    check_ergodic_rate,
    check_lemma1,
    check_lemma2_identity,
    check_lemma3,
    check_summability,
    ergodic_average,
    h_norm_sq,
    init_is_consistent,
    sampled_ks,
)
from cosparse_admm.errors import InsufficientTraceError
from cosparse_admm.frame import TightFrame
from cosparse_admm.problem import ProblemInstance
from cosparse_admm.solver import MUTATIONS, SolverConfig, solve
from cosparse_admm.vi import ViPoint, sphere_probes
from conftest import scalar_instance, standard_instance
from oracles import scalar_admm, scalar_kkt_by_bisection, two_pass_mean


def fixed(n):
    return SolverConfig(max_iters=n, min_iters=n)


@pytest.fixture(scope="module")
def scalar_trace():
    return solve(scalar_instance(), fixed(1001))


@pytest.fixture(scope="module")
def std_case():
    inst = standard_instance()
    ref, _ = certified_reference(inst)
    return inst, ref, solve(inst, fixed(200))


def test_h_norm_examples():
    assert h_norm_sq(([1.0], [2.0]), ([1.0], [2.0]), 1.0) == 0.0
    assert h_norm_sq(([3.0], [4.0]), ([0.0], [0.0]), 1.0) == 25.0
    assert h_norm_sq(([3.0], [4.0]), ([0.0], [0.0]), 4.0) == 66.25


def test_h_metric_uses_gram_for_non_tight():
    m = HMetric(2.0, np.diag([2.0, 1.0]))
    assert m.sq(np.array([1.0]), np.array([1.0, 1.0]))[0] == pytest.approx(0.5 + 2.0 * 3.0)


def test_sampled_ks():
    assert sampled_ks(0) == [0]
    assert sampled_ks(10) == [0, 1, 2, 4, 8, 10]


# ---- step bound on the scalar example, values from the hand-written recurrence

def _oracle_step_bound(k, beta=1.0):
    z, x, lam = scalar_admm(10.0, 1.0, beta, k + 1)
    margin = beta * (x[k] - z[k + 1]) ** 2 - beta * (x[k] - x[k + 1]) ** 2 - (lam[k] - lam[k + 1]) ** 2 / beta
    cross = (lam[k] - lam[k + 1]) * (x[k] - x[k + 1])
    return margin, cross


def test_scalar_step_bound_first_sweep(scalar_trace):
    l3 = check_lemma3(scalar_trace, scalar_instance())
    margin, cross = _oracle_step_bound(0)
    assert (margin, cross) == (-50.0, -25.0)
    assert l3["margin"][0] == pytest.approx(margin, abs=1e-12)
    assert l3["cross"][0] == pytest.approx(cross, abs=1e-12)


def test_scalar_step_bound_later_sweeps(scalar_trace):
    l3 = check_lemma3(scalar_trace, scalar_instance())
    for k in (1, 2, 3, 10):
        m, c = _oracle_step_bound(k)
        assert l3["margin"][k] == pytest.approx(m, abs=1e-12) and l3["cross"][k] == pytest.approx(c, abs=1e-12)
    assert np.all(l3["margin"][1:] >= -1e-8 * l3["scale"][1:])
    assert np.all(l3["cross"][1:] >= -1e-8 * l3["scale"][1:])
    assert np.all(l3["identity_defect"] <= 1e-8 * l3["scale"])


def test_first_sweep_needs_stationary_start(std_case):
    # from a zero start x^0 is not the x-update of lam^0, and the first-sweep bound can fail;
    # a stationary start restores it from k = 0
    inst, _, tr = std_case
    assert not init_is_consistent(tr, inst)
    l3 = check_lemma3(tr, inst)
    assert l3["margin"][0] < 0
    ok = solve(inst, SolverConfig(max_iters=200, min_iters=200, lambda0="consistent"))
    assert init_is_consistent(ok, inst)
    l3 = check_lemma3(ok, inst)
    assert np.all(l3["margin"] >= -1e-8 * l3["scale"])


def test_standard_step_bound(std_case):
    inst, _, tr = std_case
    l3 = check_lemma3(tr, inst)
    assert np.all(l3["margin"][1:] >= -1e-8 * l3["scale"][1:])
    assert np.all(l3["identity_defect"] <= 1e-8 * l3["scale"])


def test_stationary_trace_is_all_zero(std_case):
    inst, ref, _ = std_case
    tr = solve(inst, SolverConfig(x0=tuple(ref.x), lambda0=tuple(ref.lam), max_iters=20, min_iters=20))
    v_star = (ref.lam, ref.x)
    l3 = check_lemma3(tr, inst)
    assert np.max(np.abs(l3["margin"])) <= 1e-12 and np.max(np.abs(l3["cross"])) <= 1e-12
    c = check_contraction(tr, inst, 1.0, v_star)
    assert np.max(np.abs(c["h_dist"])) <= 1e-18
    s = check_summability(tr, 1.0, v_star)
    assert s["lhs_partial"] <= 1e-18
    rep = certify_all(tr, inst, ref, t_list=(10,))
    assert rep.overall_pass


# ---- contraction and summability

def test_scalar_contraction(scalar_trace):
    inst = scalar_instance()
    z, x, lam = scalar_kkt_by_bisection(10.0, 1.0)
    short = solve(inst, fixed(50))
    c = check_contraction(short, inst, 1.0, (np.array([lam]), np.array([x])))
    assert np.all(c["margin"] >= -1e-9)


def test_scalar_summability():
    inst = scalar_instance()
    _, x, lam = scalar_kkt_by_bisection(10.0, 1.0)
    tr = solve(inst, fixed(200))
    s = check_summability(tr, 1.0, (np.array([lam]), np.array([x])))
    assert np.all(np.diff(s["partial"]) >= 0)
    assert s["lhs_partial"] <= s["rhs"] + 1e-6 * s["scale"]


def test_standard_contraction_and_tail(std_case):
    inst, ref, tr = std_case
    c = check_contraction(tr, inst, 1.0, (ref.lam, ref.x))
    assert np.all(c["margin"][1:] >= -1e-7 * c["scale"])
    assert np.all(c["increase"][1:] <= 1e-9 * c["scale"])
    s = check_summability(tr, 1.0, (ref.lam, ref.x), k0=1)
    assert s["tail_decay"] is True
    assert np.all(s["margin"] >= -1e-6 * s["scale"])


# ---- telescoping identity and one-step inequality

def test_telescoping_at_next_iterate(std_case):
    inst, _, tr = std_case
    for k in (0, 5, 50):
        defect, scale = check_lemma2_identity(tr, inst, tr.point(k + 1))
        assert defect[k] <= 1e-10 * scale[k]


def test_telescoping_scalar_first_sweep_by_hand(scalar_trace):
    # w = (z, x, lam) = (1, 2, 3), beta = 1; iterates (z,x,lam): k=0 (0,0,0), k=1 (0,5,-5)
    w = ViPoint([1.0], [2.0], [3.0])
    lhs = (1 - 0) * (0 - 5) + (3 - (-5)) * (0 - (-5))
    rhs = -0.5 * (0 - 3) ** 2 - 0.5 * (0 - 1) ** 2 + 0.5 * (-5 - 3) ** 2 + 0.5 * (5 - 1) ** 2 + 0.5 * (0 - 0) ** 2
    assert lhs == rhs == 35
    defect, _ = check_lemma2_identity(scalar_trace, scalar_instance(), w)
    assert defect[0] == 0.0


def test_telescoping_zero_trace(zero_instance):
    tr = solve(zero_instance, fixed(5))
    defect, _ = check_lemma2_identity(tr, zero_instance, ViPoint.zeros(zero_instance))
    assert np.all(defect == 0.0)


def test_one_step_inequality(std_case):
    inst, ref, tr = std_case
    gen = np.random.default_rng(0)
    for k in sampled_ks(199):
        probes = sphere_probes(tr.point(k + 1), 20, gen) + [ref.point]
        slack, scale = check_lemma1(tr, inst, k, probes)
        assert np.all(slack >= -1e-7 * scale)


# ---- ergodic average and bound

def test_ergodic_average_examples(zero_instance):
    inst = scalar_instance()
    tr = solve(inst, fixed(12))
    avg = ergodic_average(tr, 1)
    assert avg.x[0] == pytest.approx((tr.x[1, 0] + tr.x[2, 0]) / 2)
    a9 = ergodic_average(tr, 9)
    rows = [list(tr.z[i]) + list(tr.x[i]) + list(tr.lam[i]) for i in range(1, 11)]
    np.testing.assert_allclose(a9.flat(), two_pass_mean(rows), rtol=0, atol=1e-12)
    const = solve(zero_instance, fixed(4))
    assert ergodic_average(const, 3).norm() == 0.0


def test_ergodic_needs_long_trace():
    tr = solve(scalar_instance(), fixed(5))
    with pytest.raises(InsufficientTraceError):
        ergodic_average(tr, 5)


def test_scalar_ergodic_bound(scalar_trace):
    z, x, lam = scalar_kkt_by_bisection(10.0, 1.0)
    recs = check_ergodic_rate(scalar_trace, scalar_instance(), 1.0, [ViPoint([z], [x], [lam])], (10, 100, 1000))
    for r in recs:
        assert r["gap_lhs"] <= r["bound_rhs"] + 1e-7 * r["scale"]
    # initial quantity (1/beta)(lam0 - lam)^2 + beta (x0 - z)^2 = 1 + 81
    assert recs[0]["initial"] == 82.0
    for r in recs:
        assert r["bound_rhs"] * 2 * (r["t"] + 1) == pytest.approx(82.0, rel=1e-12)


def test_ergodic_from_saddle_point(std_case):
    inst, ref, _ = std_case
    tr = solve(inst, SolverConfig(x0=tuple(ref.x), lambda0=tuple(ref.lam), max_iters=12, min_iters=12))
    # started at the saddle point, z^0 = D x^0 = z*
    recs = check_ergodic_rate(tr, inst, 1.0, [ref.point], (10,))
    assert recs[0]["gap_lhs"] <= 1e-10 and recs[0]["bound_rhs"] <= 1e-18


def test_ergodic_unit_ball_probes(std_case):
    inst, ref, _ = std_case
    tr = solve(inst, fixed(101))
    probes = sphere_probes(ref.point, 50, np.random.default_rng(1), radii=(1.0,))
    for r in check_ergodic_rate(tr, inst, 1.0, probes, (10, 100)):
        assert r["gap_lhs"] <= r["bound_rhs"] + 1e-7 * r["scale"]


# ---- full report

def test_certify_scalar_passes(scalar_trace):
    inst = scalar_instance()
    tr = solve(inst, fixed(200))
    rep = certify_all(tr, inst, t_list=(10, 100))
    assert rep.overall_pass, rep.failed_checks


def test_certify_standard_passes(std_case):
    inst, ref, tr = std_case
    rep = certify_all(tr, inst, ref, t_list=(10, 100))
    assert rep.overall_pass, rep.failed_checks
    assert rep.k0 == 1 and rep.frame_tight
    assert not rep.contraction[0]["in_hypothesis"] and rep.contraction[1]["in_hypothesis"]


def test_certify_consistent_start_covers_first_sweep(std_case):
    inst, ref, _ = std_case
    tr = solve(inst, SolverConfig(max_iters=200, min_iters=200, lambda0="consistent"))
    rep = certify_all(tr, inst, ref, t_list=(10, 100))
    assert rep.overall_pass and rep.k0 == 0


@pytest.mark.parametrize("mutation", MUTATIONS)
def test_mutations_are_caught(std_case, mutation):
    inst, ref, _ = std_case
    tr = solve(inst, fixed(200), mutation=mutation)
    rep = certify_all(tr, inst, ref, t_list=(10, 100))
    assert not rep.overall_pass
    assert "contraction" in rep.failed_checks


def test_multiplier_sign_mutation_breaks_contraction(std_case):
    inst, ref, _ = std_case
    tr = solve(inst, fixed(200), mutation="multiplier_sign")
    c = check_contraction(tr, inst, 1.0, (ref.lam, ref.x))
    assert c["margin"][1:].min() / c["scale"] < -1e-2


def test_unverified_reference_skips_dependent_checks(std_case):
    inst, ref, tr = std_case
    bad = type(ref)(ref.k, ref.z, ref.x, ref.lam + 1.0)
    rep = certify_all(tr, inst, bad, t_list=(10,))
    assert rep.checks["contraction"].skipped and rep.checks["reference_kkt"].skipped
    assert rep.reference["certified"] is False


def test_certify_requires_stride_one(std_case):
    inst, ref, _ = std_case
    tr = solve(inst, SolverConfig(max_iters=20, min_iters=20, record_every=2))
    with pytest.raises(InsufficientTraceError):
        certify_all(tr, inst, ref)


def test_non_tight_frame_is_flagged():
    D = np.vstack([np.eye(2), [[1.0, 0.0]]])
    inst = ProblemInstance(M=[[1.0, 0.5]], y=[2.0], frame=TightFrame.from_matrix(D), alpha=1.0)
    tr = solve(inst, fixed(100))
    rep = certify_all(tr, inst, t_list=(10,))
    assert not rep.frame_tight
    assert any("non-tight" in n for n in rep.notes)


def test_report_artifacts(tmp_path, std_case):
    inst, ref, tr = std_case
    rep = certify_all(tr, inst, ref, t_list=(10,))
    rep.write_json(tmp_path / "r.json")
    rep.write_margins_csv(tmp_path / "m.csv")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["schema"] == "cosparse-admm/report/v1" and data["overall_pass"] is True
    rows = list(csv.reader(open(tmp_path / "m.csv")))
    assert rows[0] == ["k", "margin_thm1", "margin_lemma3", "eq45", "h_dist"] and len(rows) == 201


def test_tolerances_from_dict():
    t = Tolerances.from_dict({"kkt": 1e-6})
    assert t.kkt == 1e-6 and t.tol_abs == 1e-10
    assert float(t.allowed(1e-7, 10.0)) == pytest.approx(1e-10 + 1e-6)
