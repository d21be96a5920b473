"""Acceptance criteria, one test (and one printed PASS/FAIL line) each.

Standard suite: 20 seeded noiseless instances with d=8, m=6, n=16, ell=12,
alpha=100, beta in {0.1, 1, 10}.  Saddle points are KKT-certified to 1e-8.
"""

import json
from functools import lru_cache

import numpy as np
from cosparse_admm.certify import (
    certified_reference,
    certify_all,
    check_contraction,
    check_ergodic_rate,
    check_lemma2_identity,
    check_lemma3,
    sampled_ks,
)
from cosparse_admm.experiment import ExperimentConfig, run
from cosparse_admm.problem import generate_instance
from cosparse_admm.solver import MUTATIONS, SolverConfig, soft_threshold, solve
from cosparse_admm.vi import ViPoint, kkt_residuals, skew_defect, sphere_probes
from conftest import ACCEPTANCE_LINES, scalar_instance
from oracles import grid_prox, scalar_admm, scalar_kkt_by_bisection

SEEDS = range(20)
BETAS = (0.1, 1.0, 10.0)
ITERS = 200


@lru_cache(maxsize=None)
def instance(seed, alpha=100.0):
    return generate_instance(8, 6, 2, 12, alpha, 0.0, seed, basis="signed_permutation")


@lru_cache(maxsize=None)
def reference(seed, alpha=100.0):
    ref, kkt = certified_reference(instance(seed, alpha), kkt_tol=1e-8)
    return ref, kkt


@lru_cache(maxsize=None)
def trace(seed, beta, start="zero", iters=ITERS):
    lam0 = "consistent" if start == "consistent" else None
    return solve(instance(seed), SolverConfig(beta=beta, max_iters=iters, min_iters=iters, lambda0=lam0))


def verdict(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _contraction_worst(start, k0):
    worst = np.inf
    for seed in SEEDS:
        ref, kkt = reference(seed)
        assert kkt.max() <= 1e-8
        for beta in BETAS:
            c = check_contraction(trace(seed, beta, start), instance(seed), beta, (ref.lam, ref.x))
            worst = min(worst, float((c["margin"][k0:] / c["scale"]).min()))
    return worst


def test_criterion_1_contraction():
    worst = _contraction_worst("consistent", 0)
    verdict("1 contraction (stationary start, every k)", worst >= -1e-7,
            f"worst margin/(1+|v0-v*|_H^2) = {worst:.3e} over 20 seeds x 3 betas x {ITERS} sweeps")


def test_criterion_1_contraction_zero_start():
    worst = _contraction_worst("zero", 1)
    first = np.inf
    for seed in SEEDS:
        ref = reference(seed)[0]
        for beta in BETAS:
            c = check_contraction(trace(seed, beta), instance(seed), beta, (ref.lam, ref.x))
            first = min(first, float(c["margin"][0] / c["scale"]))
    verdict("1 contraction (zero start, k >= 1)", worst >= -1e-7,
            f"worst normalized margin = {worst:.3e}; k=0 is outside the hypothesis (worst there {first:.3e})")


def _step_bound_worst(start, k0):
    margin = cross = ident = np.inf
    for seed in SEEDS:
        for beta in BETAS:
            l3 = check_lemma3(trace(seed, beta, start), instance(seed), beta)
            sc = l3["scale"]
            margin = min(margin, float((l3["margin"][k0:] / sc[k0:]).min()))
            cross = min(cross, float((l3["cross"][k0:] / sc[k0:]).min()))
            ident = min(ident, float((-l3["identity_defect"] / sc).min()))
    return margin, cross, ident


def test_criterion_2_step_bound():
    m, c, i = _step_bound_worst("consistent", 0)
    verdict("2 step bound + cross term + identity (stationary start, every k)",
            m >= -1e-8 and c >= -1e-8 and i >= -1e-8,
            f"worst normalized: margin {m:.3e}, cross {c:.3e}, -identity defect {i:.3e}")


def test_criterion_2_step_bound_zero_start():
    m, c, i = _step_bound_worst("zero", 1)
    first = min(float(check_lemma3(trace(s, b), instance(s), b)["margin"][0]) for s in SEEDS for b in BETAS)
    verdict("2 step bound + cross term + identity (zero start, k >= 1)",
            m >= -1e-8 and c >= -1e-8 and i >= -1e-8,
            f"worst normalized: margin {m:.3e}, cross {c:.3e}, -identity defect {i:.3e}; k=0 margin min {first:.3e}")


def test_criterion_3_ergodic_bound():
    t_list = (10, 100, 1000)
    worst, scaling = np.inf, 0.0
    cases = []
    z, x, lam = scalar_kkt_by_bisection(10.0, 1.0)
    cases.append((scalar_instance(), 1.0, ViPoint([z], [x], [lam])))
    for seed in SEEDS:
        for beta in BETAS:
            cases.append((instance(seed), beta, reference(seed)[0].point))
    for inst, beta, probe in cases:
        tr = solve(inst, SolverConfig(beta=beta, max_iters=1001, min_iters=1001))
        recs = check_ergodic_rate(tr, inst, beta, [probe], t_list)
        for r in recs:
            worst = min(worst, (r["margin"]) / r["scale"])
        scaled = [r["bound_rhs"] * (r["t"] + 1) for r in recs]
        if scaled[0] > 0:
            scaling = max(scaling, max(abs(s - scaled[0]) / scaled[0] for s in scaled))
    verdict("3 ergodic gap bound", worst >= -1e-7 and scaling <= 1e-12,
            f"worst (bound - gap)/scale = {worst:.3e}; max relative deviation of bound*(t+1) = {scaling:.1e}")


def test_criterion_4_skew():
    gen = np.random.default_rng(4)
    worst = 0.0
    for seed in SEEDS:
        inst = instance(seed)
        for _ in range(1000):
            w = ViPoint(*(3 * gen.standard_normal(s) for s in (inst.n, inst.d, inst.n)))
            wb = ViPoint(*(3 * gen.standard_normal(s) for s in (inst.n, inst.d, inst.n)))
            worst = max(worst, skew_defect(w, wb, inst) / (1 + (w - wb).dot(w - wb)))
    verdict("4 skew symmetry", worst <= 1e-10, f"max defect/(1+|w-w'|^2) = {worst:.3e} over 20 x 1000 pairs")


def test_criterion_5_telescoping_identity():
    gen = np.random.default_rng(5)
    worst = 0.0
    for seed in SEEDS:
        ref = reference(seed)[0]
        for beta in BETAS:
            tr, inst = trace(seed, beta), instance(seed)
            d, s = check_lemma2_identity(tr, inst, ref.point)
            worst = max(worst, float((d / s).max()))
            ks = sampled_ks(ITERS - 1)
            for k in ks:
                for p in sphere_probes(tr.point(k + 1), 20, gen):
                    d, s = check_lemma2_identity(tr, inst, p)
                    worst = max(worst, float(d[k] / s[k]))
    verdict("5 telescoping identity", worst <= 1e-8, f"max defect/scale = {worst:.3e}")


def test_criterion_6_solver_oracles():
    # (a) scalar recurrence
    tr = solve(scalar_instance(), SolverConfig(max_iters=200, min_iters=200))
    z, x, lam = scalar_admm(10.0, 1.0, 1.0, 200)
    a = max(np.abs(tr.z[:, 0] - z).max(), np.abs(tr.x[:, 0] - x).max(), np.abs(tr.lam[:, 0] - lam).max())
    # (b) prox oracle
    gen = np.random.default_rng(6)
    vs, taus = gen.uniform(-5, 5, 1000), gen.uniform(0.0, 3, 1000)
    b = max(abs(float(soft_threshold(v, t)) - grid_prox(v, t)) if t > 0 else abs(float(soft_threshold(v, t)) - v)
            for v, t in zip(vs, taus))
    # (c) linear-system residuals and (d) KKT after convergence
    c, d, converged = 0.0, 0.0, 0
    for seed in SEEDS:
        for beta in BETAS:
            tr = solve(instance(seed), SolverConfig(beta=beta, primal_tol=1e-10, dual_tol=1e-10))
            c = max(c, float(np.nanmax(tr.linsys_residuals)))
            if tr.converged:
                converged += 1
                d = max(d, kkt_residuals(tr.final.point, instance(seed)).max())
    ok = a <= 1e-12 and b <= 1e-6 and c <= 1e-10 and d <= 1e-6 and converged > 0
    verdict("6 solver oracles", ok,
            f"(a) {a:.1e} (b) {b:.1e} (c) {c:.1e} (d) {d:.1e} on {converged}/60 converged runs")


def test_criterion_7_recovery():
    errors = []
    for seed in SEEDS:
        inst = instance(seed, 1e4)
        x_final = reference(seed, 1e4)[0].x
        errors.append(np.linalg.norm(x_final - inst.ground_truth) / np.linalg.norm(inst.ground_truth))
    errors = np.array(errors)
    hits = int((errors <= 1e-3).sum())
    misses = ", ".join(f"seed {s}: {e:.2e}" for s, e in zip(SEEDS, errors) if e > 1e-3)
    verdict("7 recovery", hits >= 18, f"{hits}/20 within 1e-3 (misses: {misses or 'none'})")


def test_criterion_8_mutation_kill():
    caught = {}
    for mutation in MUTATIONS:
        n = 0
        for seed in SEEDS:
            inst, ref = instance(seed), reference(seed)[0]
            tr = solve(inst, SolverConfig(max_iters=ITERS, min_iters=ITERS), mutation=mutation)
            rep = certify_all(tr, inst, ref, probe_count=5, t_list=(10, 100))
            n += not rep.overall_pass
        caught[mutation] = n
    verdict("8 mutation kill", all(v == len(SEEDS) for v in caught.values()),
            ", ".join(f"{k}: {v}/20 instances fail" for k, v in caught.items()))


def test_criterion_9_determinism(tmp_path):
    same = True
    for seed in (0, 3, 7):
        cfg = ExperimentConfig.from_dict({
            "master_seed": seed,
            "instance": {"d": 8, "m": 6, "k": 2, "ell": 12, "alpha": 100.0, "basis": "signed_permutation"},
            "certify": {"t_list": [10, 100], "probe_count": 10, "iters": 150},
        })
        a, b = run(cfg, tmp_path / f"a{seed}"), run(cfg, tmp_path / f"b{seed}")
        ra = json.loads((tmp_path / f"a{seed}" / "report.json").read_text())
        rb = json.loads((tmp_path / f"b{seed}" / "report.json").read_text())
        same &= a.fingerprint == b.fingerprint and ra == rb
        same &= (tmp_path / f"a{seed}" / "margins.csv").read_bytes() == (tmp_path / f"b{seed}" / "margins.csv").read_bytes()
    verdict("9 determinism", same, "fingerprints, reports and margin CSVs identical across reruns of 3 configs")
