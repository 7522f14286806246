"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

from dalsolve.baselines import FirstOrderOptions, fista_solve
from dalsolve.dal import (DalOptions, DalState, al_grad, al_hess_apply, al_value,
                          next_bias_eta, outer_step, solve)
from dalsolve.data import lambda_from_bar, synth
from dalsolve.design import DenseOperator, as_operator
from dalsolve.diagnostics import (check_bounds, descent_residuals, dual_candidate,
                                  estimate_sigma, rdg, reference_solution)
from dalsolve.errors import NonConvergenceError
from dalsolve.losses import LogisticLoss
from dalsolve.problem import Problem
from dalsolve.prox import L1, TraceNorm, moreau_decomposition_check

from oracles import NumericProx, interior_alpha, random_problem, random_regularizers

TARGET = 1e-6          # ||w^t - w*|| / ||w^0 - w*||
RDG_TOL = 1e-3
ALL_RECORDS = []       # every trace record produced here, for the weak-duality check


@pytest.fixture
def report(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {num}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok
    return emit


def _synthetic(m=256, n=2048, lambda_bar=0.01, seed=0):
    ds = synth(m, n, seed=seed)
    A = as_operator(ds.design)
    lam = lambda_from_bar(A, ds.labels, lambda_bar)
    return Problem(A, LogisticLoss(ds.labels), L1(lam))


@pytest.fixture(scope="module")
def main_run():
    """DAL on the desk-scale synthetic problem, stopped at the target residual."""
    problem = _synthetic()
    ref = reference_solution(problem)
    d0 = float(np.linalg.norm(ref.w_star))
    t0 = time.perf_counter()
    res = solve(problem, DalOptions(rdg_tol=0.0, max_outer=15),
                callback=lambda st, rec: rec.dist_to_ref <= TARGET * d0,
                w_ref=ref.w_star, store_iterates=True)
    seconds = time.perf_counter() - t0
    ref.sigma = estimate_sigma(res.trace, ref)
    ALL_RECORDS.extend(res.trace)
    return problem, ref, res, seconds, d0


def test_criterion_01_superlinear_convergence(main_run, report):
    problem, ref, res, seconds, d0 = main_run
    ratio = res.trace[-1].dist_to_ref / d0
    dal_iters = res.trace[-1].iter
    bounds = check_bounds(res.trace, ref)
    try:
        fista = fista_solve(problem, FirstOrderOptions(rdg_tol=0.0, max_iter=3000),
                            callback=lambda w, rec: rec.dist_to_ref <= TARGET * d0,
                            w_ref=ref.w_star)
        fista_iters = fista.trace[-1].iter
    except NonConvergenceError as exc:
        fista_iters = exc.result.trace[-1].iter   # budget exhausted, target not reached
    ok = (ratio <= TARGET and dal_iters <= 15 and bounds.holds("thm3") and seconds <= 60
          and dal_iters <= 20 and fista_iters >= 200)
    report(1, ok, f"DAL residual ratio {ratio:.2e} after {dal_iters} outer iterations "
                  f"({seconds:.1f}s), super-linear rate bound held at all {len(bounds.checks['thm3'])} "
                  f"steps: {bounds.holds('thm3')} (sigma={ref.sigma:.4g}), "
                  f"FISTA iterations for the same residual: >= {fista_iters}")
    assert ok


def test_criterion_02_objective_bound(main_run, report):
    problem, ref, res, _, _ = main_run
    bounds = check_bounds(res.trace, ref)
    margins = [m for _, m in bounds.checks["thm1"]]
    ok = bounds.holds("thm1") and ref.subgrad_norm <= 1e-10
    report(2, ok, f"objective bound holds at all {len(margins)} steps: "
                  f"{bounds.holds('thm1')} (min margin {min(margins):.3e}); reference "
                  f"subgradient norm {ref.subgrad_norm:.2e}")
    assert ok


def test_criterion_03_zero_threshold(report):
    details, ok = [], True
    for seed, (m, n) in enumerate([(256, 2048), (60, 200), (200, 50)]):
        for lb in (0.5, 0.7, 1.0):
            problem = _synthetic(m, n, lb, seed)
            res = solve(problem)
            ALL_RECORDS.extend(res.trace)
            zero = not res.w.any()
            ok &= zero
            details.append(f"{m}x{n}/{lb}:{'0' if zero else 'nonzero'}")
    report(3, ok, "exact zero solutions " + ", ".join(details))
    assert ok


def test_criterion_04_descent_lemma(report):
    worst, count, steps = -np.inf, 0, 0
    for seed in range(5):
        for i, loss in enumerate(("squared", "logistic", "sech")):
            for j, reg in enumerate(("l1", "weighted_l1", "group_lasso", "elastic_net")):
                rng = np.random.default_rng(100 * seed + 10 * i + j)
                p = random_problem(rng, loss, reg, m=40, n=80, lam_frac=0.05,
                                   sparse=seed % 2 == 1)
                res = solve(p, DalOptions(rdg_tol=1e-6), store_iterates=True)
                ALL_RECORDS.extend(res.trace)
                f = res.trace.column("f")
                r = descent_residuals(f, [w for w, _ in res.iterates],
                                      res.trace.column("eta1"))
                worst = max(worst, float(np.max(r / (1 + np.abs(f[:-1])))))
                count += 1
                steps += r.size
    ok = count >= 50 and worst <= 1e-9
    report(4, ok, f"{count} problems, {steps} accepted steps, worst normalized "
                  f"descent residual {worst:.3e} (limit 1e-9)")
    assert ok


def test_criterion_05_moreau_calculus(report):
    rng = np.random.default_rng(5)
    worst = {"decomposition": 0.0, "envelope": 0.0, "derivative": 0.0}
    n_inputs = 200
    for n in (3, 4):
        for name, reg in random_regularizers(rng, n).items():
            oracle = NumericProx(reg, n) if n == 3 else None
            for _ in range(n_inputs):
                z = rng.standard_normal(n) * rng.uniform(0.2, 3.0)
                s = rng.uniform(0.3, 2.0)
                assert moreau_decomposition_check(
                    lambda v: reg.prox(v, s)[0], lambda v: reg.conj_prox(v, s), z,
                    tol=1e-10), name
                worst["decomposition"] = max(worst["decomposition"], float(np.max(
                    np.abs(reg.prox(z, s)[0] + reg.conj_prox(z, s) - z))))
                if oracle is not None:
                    # envelope of phi (numeric) + envelope of phi* (closed form)
                    _, env = oracle(z, s)
                    err = abs(env + reg.envelope_star(z, s) - 0.5 * z @ z)
                    worst["envelope"] = max(worst["envelope"], err)
                h = 1e-6
                fd = np.array([(reg.envelope_star(z + h * e, s)
                                - reg.envelope_star(z - h * e, s)) / (2 * h)
                               for e in np.eye(n)])
                x = reg.prox(z, s)[0]
                worst["derivative"] = max(worst["derivative"], float(
                    np.max(np.abs(fd - x)) / max(1.0, np.max(np.abs(x)))))
    # envelope identity for the trace norm at n <= 3 (a 1x3 matrix)
    tn = TraceNorm(0.8, (1, 3))
    oracle = NumericProx(tn, 3)
    for _ in range(n_inputs):
        z = rng.standard_normal(3) * 2
        _, env = oracle(z, 1.0)
        worst["envelope"] = max(worst["envelope"],
                                abs(env + tn.envelope_star(z) - 0.5 * z @ z))
    ok = (worst["decomposition"] <= 1e-10 and worst["envelope"] <= 1e-6
          and worst["derivative"] <= 1e-5)
    report(5, ok, f">= {n_inputs} inputs per regularizer; worst decomposition "
                  f"{worst['decomposition']:.1e} (1e-10), envelope identity "
                  f"{worst['envelope']:.1e} (1e-6), envelope derivative "
                  f"{worst['derivative']:.1e} (1e-5)")
    assert ok


def test_criterion_06_prox_oracle(report):
    rng = np.random.default_rng(6)
    worst, kinds = 0.0, []
    for name, reg in random_regularizers(rng, 4).items():
        oracle = NumericProx(reg, 4)
        for _ in range(100):
            y = rng.standard_normal(4) * rng.uniform(0.2, 3.0)
            s = rng.uniform(0.3, 2.0)
            x_num, _ = oracle(y, s)
            worst = max(worst, float(np.max(np.abs(reg.prox(y, s)[0] - x_num))))
        kinds.append(name)
    ok = worst <= 1e-6
    report(6, ok, f"100 instances each for {', '.join(kinds)}; worst deviation "
                  f"from numeric minimizer {worst:.1e} (1e-6)")
    assert ok


def test_criterion_07_al_derivatives(report):
    rng = np.random.default_rng(7)
    worst_g, worst_h, cases = 0.0, 0.0, 0
    for reg in ("l1", "weighted_l1", "group_lasso"):
        for loss in ("logistic", "sech", "squared"):
            for sparse in (False, True):
                for _ in range(4):
                    p = random_problem(rng, loss, reg, m=12, n=30, sparse=sparse)
                    st = DalState(w=rng.standard_normal(30) * (rng.random(30) < 0.5),
                                  alpha=np.zeros(12), eta1=rng.uniform(0.5, 5.0))
                    a = interior_alpha(rng, p.loss) * 0.9
                    g, _, act = al_grad(p, st, a)
                    h = 1e-6
                    fd = np.array([(al_value(p, st, a + h * e) - al_value(p, st, a - h * e))
                                   / (2 * h) for e in np.eye(12)])
                    worst_g = max(worst_g, np.linalg.norm(fd - g) / np.linalg.norm(g))
                    v = rng.standard_normal(12)
                    hv = al_hess_apply(p, st, a, act, v)
                    fdh = (al_grad(p, st, a + h * v)[0] - al_grad(p, st, a - h * v)[0]) / (2 * h)
                    worst_h = max(worst_h, np.linalg.norm(fdh - hv) / np.linalg.norm(hv))
                    cases += 1
    ok = worst_g <= 1e-6 and worst_h <= 1e-4
    report(7, ok, f"{cases} random interior points over l1/weighted-l1/group-lasso; "
                  f"gradient rel. err {worst_g:.1e} (1e-6), Hessian rel. err "
                  f"{worst_h:.1e} (1e-4)")
    assert ok


def test_criterion_08_duality_gap(main_run, report):
    problem, ref, _, _, _ = main_run
    # weak duality over every record produced in this module plus extra runs
    rng = np.random.default_rng(8)
    for kind in ("l1", "weighted_l1", "group_lasso", "elastic_net"):
        for bias in (False, True):
            p = random_problem(rng, "logistic", kind, m=40, n=60, lam_frac=0.03)
            ALL_RECORDS.extend(solve(p, DalOptions(rdg_tol=1e-8, bias=bias)).trace)
    ALL_RECORDS.extend(fista_solve(problem, FirstOrderOptions(rdg_tol=RDG_TOL)).trace)
    viol = max((r.dual - r.f) / (1 + abs(r.f)) for r in ALL_RECORDS)
    # relative gap at high-precision optima
    refs = [(problem, ref, False)]
    for kind, bias in (("group_lasso", False), ("weighted_l1", True)):
        p = random_problem(rng, "logistic", kind, m=40, n=60, lam_frac=0.03)
        refs.append((p, reference_solution(p, bias=bias), bias))
    gaps = []
    for p, r, bias in refs:
        cand = -p.loss.grad(p.A.apply(r.w_star) + r.b_star)
        gaps.append(rdg(p, r.w_star, cand, r.b_star, bias)[0])
    # centered candidate of the bias variant
    cand = dual_candidate(problem, interior_alpha(rng, problem.loss), bias=True)
    center = abs(float(cand.sum()))
    ok = viol <= 1e-9 and max(gaps) <= 1e-6 and center <= 1e-12
    report(8, ok, f"weak duality over {len(ALL_RECORDS)} records: worst excess "
                  f"{viol:.1e} (1e-9); RDG at reference optima max {max(gaps):.1e} "
                  f"(1e-6); centered candidate |1'a| = {center:.1e} (1e-12)")
    assert ok


def test_criterion_09_fista_rate(main_run, report):
    problem, ref, _, _, _ = main_run
    try:
        run = fista_solve(problem, FirstOrderOptions(rdg_tol=0.0, max_iter=500))
    except NonConvergenceError as exc:
        run = exc.result
    k = np.arange(10, 501)
    resid = run.objectives[10:501] - ref.f_star
    slope = float(np.polyfit(np.log(k), np.log(resid), 1)[0])
    f_fista = fista_solve(problem, FirstOrderOptions(rdg_tol=RDG_TOL)).trace[-1].f
    f_dal = solve(problem, DalOptions(rdg_tol=RDG_TOL)).trace[-1].f
    agree = abs(f_fista - f_dal) <= 10 * RDG_TOL * min(f_fista, f_dal)
    ok = slope <= -1.8 and agree
    report(9, ok, f"log-log slope of FISTA objective residual over k in [10, 500]: "
                  f"{slope:.2f} (<= -1.8); final objectives FISTA {f_fista:.6f} vs "
                  f"DAL {f_dal:.6f}")
    assert ok


def test_criterion_10_bias_variant(report):
    ds = synth(128, 1024, seed=10)
    A = np.vstack([ds.design, -ds.design])       # (a, y) paired with (-a, -y)
    y = np.concatenate([ds.labels, -ds.labels])
    op = DenseOperator(A)
    p = Problem(op, LogisticLoss(y), L1(lambda_from_bar(op, y, 0.01)))
    with_b = solve(p, DalOptions(bias=True, rdg_tol=1e-6))
    without = solve(p, DalOptions(rdg_tol=1e-6))
    ALL_RECORDS.extend(with_b.trace)
    same = np.array_equal(np.flatnonzero(with_b.w), np.flatnonzero(without.w))
    # escalation fires exactly when t > 1, the violation did not halve and
    # exceeds the tolerance
    o = DalOptions()
    cases = {(2, 0.6, 1.0): 40.0, (1, 0.6, 1.0): 2.0, (2, 0.4, 1.0): 2.0,
             (2, 5e-4, 1e-4): 2.0, (3, 0.9, 1.0): 40.0}
    rule_ok = all(next_bias_eta(t, v, vp, 1.0, o) == want for (t, v, vp), want in cases.items())
    st = DalState(w=np.zeros(1), alpha=np.zeros(2), eta1=1.0, eta2=1.0)
    factors = []
    for s in (1.0, 0.9, 0.8, 0.1, 0.09):
        nxt = outer_step(st, np.array([s, 0.0]), np.zeros(1), o)
        factors.append(nxt.eta2 / st.eta2)
        st = nxt
    rule_ok &= factors == [2.0, 2.0, 40.0, 2.0, 40.0]
    ok = abs(with_b.b) <= 1e-3 and same and rule_ok
    report(10, ok, f"|b| = {abs(with_b.b):.1e} (1e-3), supports equal: {same} "
                   f"({np.count_nonzero(without.w)} features), escalation rule on "
                   f"constructed traces: {rule_ok}")
    assert ok


@pytest.mark.large
def test_large_smoke_run(report):
    t0 = time.perf_counter()
    problem = _synthetic(1024, 65536, 0.01, seed=11)
    res = solve(problem, DalOptions(rdg_tol=RDG_TOL))
    seconds = time.perf_counter() - t0
    ok = res.trace[-1].rdg < RDG_TOL and seconds <= 600
    report("large", ok, f"m=1024, n=65536: RDG {res.trace[-1].rdg:.1e} after "
                        f"{res.trace[-1].iter} outer iterations in {seconds:.0f}s")
    assert ok
