"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line (visible with ``pytest -s``); a FAIL
line is always accompanied by a test failure.
"""

import time

import numpy as np
import pytest
from scipy.optimize import brentq, minimize

from condrisk import (Aggregator, ClusterConstraint, DensityVector, RiskSpec,
                      ScenarioSpace, SigmaPartition, alpha1_entropic,
                      build_equilibrium, check_axioms, cond_exp, dual_value,
                      extract_dual_optimizer, grid_max_alpha1, grid_min_rho,
                      penalty_alpha1, pi_problem, q_hat_closed, rho_closed,
                      run_consistency, solve_rho, verify_msorte)
from conftest import (make_canonical_spec, random_chain,
                      random_exponential_instance)


def report(num, name, ok, detail=""):
    verdict = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num} ({name}): {verdict} {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def instance_batch():
    """200 randomized exponential full-sharing instances with solver and
    closed-form artifacts; the solve+closed-form time is recorded."""
    rng = np.random.default_rng(2024)
    batch = []
    elapsed = 0.0
    for _ in range(200):
        spec, c = random_exponential_instance(rng, kmax=32, nmax=5)
        t0 = time.perf_counter()
        sol = solve_rho(spec)
        rho_c = rho_closed(spec.x, spec.b, spec.sigma, c)
        elapsed += time.perf_counter() - t0
        batch.append((spec, c, sol, rho_c))
    return batch, elapsed


def test_criterion_1_closed_form_agreement(instance_batch):
    batch, elapsed = instance_batch
    worst = 0.0
    for spec, c, sol, rho_c in batch:
        rel = np.max(np.abs(sol.rho - rho_c) / np.maximum(1.0, np.abs(rho_c)))
        worst = max(worst, float(rel))
    ok = worst <= 1e-6 and elapsed <= 10.0
    report(1, "closed-form agreement", ok,
           f"worst rel err {worst:.3e}, solve time {elapsed:.2f}s")


def test_criterion_2_duality(instance_batch):
    batch, _ = instance_batch
    rng = np.random.default_rng(77)
    worst_gap = 0.0
    worst_weak = -np.inf
    for spec, c, sol, rho_c in batch:
        q = extract_dual_optimizer(sol, spec, check_gap=False)
        gap = np.abs(sol.rho - dual_value(q, spec))
        worst_gap = max(worst_gap, float(gap.max()))
        for _ in range(50):
            row = rng.uniform(0.05, 2.0, size=spec.space.natoms)
            row = row / cond_exp(row, spec.sigma)
            qr = DensityVector(np.tile(row, (spec.nagents, 1)), spec.sigma)
            excess = dual_value(qr, spec) - sol.rho
            worst_weak = max(worst_weak, float(excess.max()))
    ok = worst_gap <= 5e-9 and worst_weak <= 5e-9
    report(2, "duality", ok,
           f"worst gap {worst_gap:.3e}, worst weak-duality excess "
           f"{worst_weak:.3e}")


def test_criterion_3_fairness_at_optimum(instance_batch):
    batch, _ = instance_batch
    worst = 0.0
    for spec, c, sol, rho_c in batch:
        q = extract_dual_optimizer(sol, spec, check_gap=False)
        fair = np.zeros(spec.space.natoms)
        for j in range(spec.nagents):
            fair += cond_exp(q.row(j) * sol.y_hat[j], spec.sigma)
        worst = max(worst,
                    float(np.max(np.abs(fair - sol.rho))),
                    float(np.max(np.abs(sol.y_hat.sum(axis=0) - sol.rho))))
    ok = worst <= 5e-9
    report(3, "fairness at optimum", ok, f"worst residual {worst:.3e}")


def test_criterion_4_entropic_penalty(instance_batch):
    batch, _ = instance_batch
    worst = 0.0
    for spec, c, sol, rho_c in batch[:100]:
        q = q_hat_closed(spec.x, spec.sigma, c)
        direct = penalty_alpha1(q, spec)
        formula = alpha1_entropic(q, spec.b, spec.sigma, c)
        worst = max(worst, float(np.max(np.abs(direct - formula))))
    ok = worst <= 1e-8

    # canonical worked chain, reproduced by solver, formulas and oracles
    spec = make_canonical_spec()
    sol = solve_rho(spec)
    q = extract_dual_optimizer(sol, spec)
    cost = sum(cond_exp(q.row(j) * (-spec.x[j]), spec.sigma)
               for j in range(2))[0]
    alpha = penalty_alpha1(q, spec)[0]
    chain_ok = (abs(sol.rho[0] - 0.2402291) <= 1e-6
                and abs(cost - 0.4621172) <= 1e-6
                and abs(alpha - 0.2218880) <= 1e-6
                and abs(sol.rho[0] - (cost - alpha)) <= 1e-9)
    oracle_rho = grid_min_rho(spec, -1.0, 1.0, 1e-3)[0]
    oracle_alpha = grid_max_alpha1(q, spec, (-4.0, 4.0), 1e-3)[0]
    chain_ok = (chain_ok and abs(oracle_rho - sol.rho[0]) <= 2e-3
                and abs(oracle_alpha - alpha) <= 2e-3)
    report(4, "entropic penalty", ok and chain_ok,
           f"worst formula dev {worst:.3e}, canonical chain "
           f"{sol.rho[0]:.7f} = {cost:.7f} - {alpha:.7f}")


def test_criterion_5_time_consistency():
    rng = np.random.default_rng(88)
    worst_closed = 0.0
    for _ in range(200):
        space, g, h, x, b, c = random_chain(rng, kmax=64, nmax=4)
        rep = run_consistency(x, b, g, h, c)
        worst_closed = max(worst_closed, rep.max_abs_err_y,
                           rep.max_abs_err_q, rep.max_abs_err_a,
                           rep.max_abs_err_rho_recursion)
    worst_solver = 0.0
    rng2 = np.random.default_rng(89)
    for _ in range(200):
        space, g, h, x, b, c = random_chain(rng2, kmax=24, nmax=3)
        rep = run_consistency(x, b, g, h, c, use_solver=True)
        worst_solver = max(worst_solver, rep.max_abs_err_y,
                           rep.max_abs_err_q, rep.max_abs_err_a,
                           rep.max_abs_err_rho_recursion)
    ok = worst_closed <= 1e-9 and worst_solver <= 1e-6
    report(5, "time consistency", ok,
           f"closed form {worst_closed:.3e}, solver {worst_solver:.3e}")


def test_criterion_6_msorte():
    rng = np.random.default_rng(99)
    worst = 0.0
    worst_pi = 0.0
    for _ in range(100):
        spec, c = random_exponential_instance(rng, kmax=16, nmax=4)
        triple = build_equilibrium(spec)
        rep = verify_msorte(triple, spec, tol=1e-6)
        worst = max(worst, rep.cluster_feasibility, rep.budget_match,
                    rep.constraint_activity, rep.value_match, rep.alpha_match)
        pi = pi_problem(triple.q, triple.budget_a, spec)
        worst_pi = max(worst_pi, float(np.max(np.abs(pi - spec.b))))
    ok = worst <= 1e-6 and worst_pi <= 1e-6
    report(6, "equilibrium verification", ok,
           f"worst residual {worst:.3e}, worst pi-threshold dev "
           f"{worst_pi:.3e}")


def test_criterion_7_axiom_suite():
    rng = np.random.default_rng(111)
    worst_add = 0.0
    worst_conv = -np.inf
    worst_mono = -np.inf
    worst_loc = 0.0
    for clusters in ("full", 2, "none"):
        for _ in range(3):
            spec, _ = random_exponential_instance(rng, kmax=10, nmax=4,
                                                  clusters=clusters)
            spec2 = spec.with_x(rng.uniform(-3, 3, size=spec.x.shape))
            lam = spec.sigma.expand(
                rng.uniform(0.0, 1.0, size=spec.sigma.nblocks))
            rep = check_axioms(spec, spec2, lam)
            worst_add = max(worst_add, rep.additivity_err)
            worst_mono = max(worst_mono, rep.monotonicity_gap)
            worst_loc = max(worst_loc, rep.locality_err)
        # conditional convexity across 20 random measurable weights
        spec, _ = random_exponential_instance(rng, kmax=8, nmax=3,
                                              clusters=clusters)
        spec2 = spec.with_x(rng.uniform(-3, 3, size=spec.x.shape))
        rho_x = solve_rho(spec).rho
        rho_z = solve_rho(spec2).rho
        for _ in range(20):
            lam = spec.sigma.expand(
                rng.uniform(0.0, 1.0, size=spec.sigma.nblocks))
            mix = lam[None, :] * spec.x + (1 - lam[None, :]) * spec2.x
            rho_mix = solve_rho(spec.with_x(mix)).rho
            excess = rho_mix - (lam * rho_x + (1 - lam) * rho_z)
            worst_conv = max(worst_conv, float(excess.max()))
    ok = (worst_add <= 5e-9 and worst_conv <= 5e-9
          and worst_mono <= 5e-9 and worst_loc <= 5e-9)
    report(7, "axiom suite", ok,
           f"additivity {worst_add:.3e}, convexity excess {worst_conv:.3e}, "
           f"monotonicity gap {worst_mono:.3e}, locality {worst_loc:.3e}")


def _tiny_corpus():
    """Every tiny instance (at most 3 atoms, 2 agents) the oracles cover."""
    corpus = []
    corpus.append((make_canonical_spec(), (-1.0, 1.0), (-4.0, 4.0)))
    space1 = ScenarioSpace.uniform(2)
    g1 = SigmaPartition.trivial(space1)
    corpus.append((RiskSpec(space=space1, sigma=g1, x=np.zeros((1, 2)),
                            aggregator=Aggregator.exponential([1.0]),
                            b=np.full(2, -np.e),
                            clusters=ClusterConstraint.full_sharing(1)),
                   (-2.0, 2.0), (-4.0, 4.0)))
    space3 = ScenarioSpace(("a", "b", "c"), np.array([0.2, 0.3, 0.5]))
    g3 = SigmaPartition(space3, ((0, 1), (2,)))
    x3 = np.array([[0.5, -0.5, 1.0], [-0.2, 0.1, 0.4]])
    corpus.append((RiskSpec(space=space3, sigma=g3, x=x3,
                            aggregator=Aggregator.exponential([1.0, 2.0]),
                            b=g3.expand(np.array([-1.5, -2.5])),
                            clusters=ClusterConstraint.full_sharing(2)),
                   (-2.0, 2.0), (-5.0, 5.0)))
    corpus.append((RiskSpec(space=space1, sigma=g1,
                            x=np.array([[1.0, -1.0], [0.0, 0.0]]),
                            aggregator=Aggregator.exponential([1.0, 1.0]),
                            b=np.full(2, -2.0),
                            clusters=ClusterConstraint.no_sharing(2)),
                   (-1.0, 2.0), (-4.0, 4.0)))
    space2 = ScenarioSpace(("u", "v"), np.array([0.3, 0.7]))
    g2 = SigmaPartition.discrete(space2)
    corpus.append((RiskSpec(space=space2, sigma=g2,
                            x=np.array([[0.8, -0.3]]),
                            aggregator=Aggregator.exponential([2.0]),
                            b=g2.expand(np.array([-1.0, -0.4])),
                            clusters=ClusterConstraint.full_sharing(1)),
                   (-2.0, 2.0), (-4.0, 4.0)))
    return corpus


def test_criterion_8_oracle_equivalence():
    step = 1e-3
    t0 = time.perf_counter()
    worst_rho = 0.0
    worst_alpha = 0.0
    for spec, rho_bounds, z_bounds in _tiny_corpus():
        sol = solve_rho(spec)
        rho_blocks = np.array([sol.rho[blk[0]] for blk in spec.sigma.blocks])
        oracle_rho = grid_min_rho(spec, rho_bounds[0], rho_bounds[1], step)
        worst_rho = max(worst_rho, float(np.max(np.abs(oracle_rho
                                                       - rho_blocks))))
        q = extract_dual_optimizer(sol, spec)
        alpha = penalty_alpha1(q, spec)
        alpha_blocks = np.array([alpha[blk[0]] for blk in spec.sigma.blocks])
        oracle_alpha = grid_max_alpha1(q, spec, z_bounds, step)
        worst_alpha = max(worst_alpha, float(np.max(np.abs(oracle_alpha
                                                           - alpha_blocks))))
    elapsed = time.perf_counter() - t0
    ok = worst_rho <= 2 * step and worst_alpha <= 2 * step and elapsed <= 60.0
    report(8, "oracle equivalence", ok,
           f"rho dev {worst_rho:.2e}, alpha dev {worst_alpha:.2e}, "
           f"time {elapsed:.1f}s")


def _static_value(spec):
    """Static risk by direct scalar optimization (independent route):
    root of the aggregate-utility profile in the total allocation, with the
    per-atom split maximized by a general-purpose optimizer."""
    agg = spec.aggregator
    n = spec.nagents
    p = spec.space.prob
    bval = float(spec.b[0])

    def best_util(omega, total):
        if n == 1:
            return float(agg.value(spec.x[:, omega] + np.array([total])))

        def neg(free):
            y = np.append(free, total - free.sum())
            return -float(agg.value(spec.x[:, omega] + y))

        def grad(free):
            y = np.append(free, total - free.sum())
            g = agg.grad(spec.x[:, omega] + y)
            return -(g[:-1] - g[-1])

        res = minimize(neg, np.full(n - 1, total / n), jac=grad,
                       method="BFGS", options={"gtol": 1e-12})
        return -float(res.fun)

    def profile(total):
        return sum(p[om] * best_util(om, total)
                   for om in range(spec.space.natoms)) - bval

    lo, hi = -1.0, 1.0
    while profile(lo) > 0 and lo > -1e6:
        lo = 2 * lo - 1
    while profile(hi) < 0 and hi < 1e6:
        hi = 2 * hi + 1
    return brentq(profile, lo, hi, xtol=1e-12)


def test_criterion_9_static_degeneration():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(10):
        k = int(rng.integers(2, 9))
        n = int(rng.integers(1, 5))
        space = ScenarioSpace(tuple(f"w{i}" for i in range(k)),
                              rng.dirichlet(np.ones(k)))
        spec = RiskSpec(space=space, sigma=SigmaPartition.trivial(space),
                        x=rng.uniform(-3, 3, size=(n, k)),
                        aggregator=Aggregator.exponential(
                            rng.uniform(0.3, 3.0, size=n)),
                        b=np.full(k, float(rng.uniform(-5, -0.1))),
                        clusters=ClusterConstraint.full_sharing(n))
        sol = solve_rho(spec)
        static = _static_value(spec)
        worst = max(worst, float(np.max(np.abs(sol.rho - static))))
    ok = worst <= 1e-8
    report(9, "static degeneration", ok, f"worst deviation {worst:.3e}")
