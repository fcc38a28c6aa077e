"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the summary lines.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

import draws
import oracles
from linkage_sim import cli, core, dynamics, ext, het, shocks, timing
from linkage_sim.het import HetParams
from linkage_sim.shocks import FIXED_LABOR, ShockSpec
from linkage_sim.timing import RecoveryProblem


def _report(number: int, title: str, failures: list[str]) -> None:
    status = "PASS" if not failures else "FAIL"
    detail = "" if not failures else ": " + "; ".join(failures[:5])
    print(f"\ncriterion {number} [{title}] {status}{detail}")
    assert not failures, "\n".join(failures)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_criterion_1_regime_map(rng):
    failures = []
    params = [draws.baseline_for_regime_sweep(rng) for _ in range(20)]
    start = time.perf_counter()
    for i, p in enumerate(params):
        k = core.derived_constants(p)
        expected = {0.5 * k.F_a: {"S1"}, 0.5 * (k.F_a + k.F_b): {"S1", "S2", "U"}, 1.5 * k.F_b: {"S2"}}
        for F, labels in expected.items():
            got = {e.label for e in dynamics.find_equilibria(p.with_(F=F))}
            if got != labels:
                failures.append(f"draw {i} F={F:.6g}: {sorted(got)} != {sorted(labels)}")
        rows = cli.sweep_rows(p, "F", np.linspace(0.5 * k.F_a, 2.0 * k.F_b, 21))
        bounds = cli.regime_boundaries(p, "F", rows)
        if len(bounds) != 2:
            failures.append(f"draw {i}: {len(bounds)} regime boundaries")
            continue
        for found, exact in zip((b["value"] for b in bounds), (k.F_a, k.F_b)):
            if abs(found - exact) > 1e-9 * exact:
                failures.append(f"draw {i}: boundary {found!r} vs {exact!r}")
    elapsed = time.perf_counter() - start
    if elapsed >= 1.0:
        failures.append(f"runtime {elapsed:.2f} s")
    _report(1, "regime map", failures)


def test_criterion_2_switching_threshold():
    failures = []
    p = draws.REFERENCE
    threshold = shocks.delta_f_min(p)
    magnitudes = threshold * (1.0 + np.linspace(-1e-3, 1e-3, 20))
    start = time.perf_counter()
    for m in magnitudes:
        new, verdict = shocks.apply_shock(p, ShockSpec(FIXED_LABOR, float(m)))
        # near the threshold the path hugs the labor wall for ~1e5 time units
        terminal = dynamics.integrate(verdict.pre.location, new, horizon=1e6).terminal
        expect_switch = m > threshold
        if (terminal == "S2") != expect_switch or verdict.switches != expect_switch:
            failures.append(f"dF={m!r}: terminal {terminal}, verdict switches={verdict.switches}")
    elapsed = time.perf_counter() - start
    if elapsed >= 10.0:
        failures.append(f"runtime {elapsed:.2f} s")
    _report(2, "switching threshold", failures)


def test_criterion_3_comparative_statics(rng):
    failures = []
    for i in range(50):
        p = draws.baseline(rng)
        assert p.tau > 1.0
        d_mu_m = shocks.d_delta_f_min_d_mu_m(p)
        d_tau = shocks.d_delta_f_min_d_tau(p)
        fd_mu_m = oracles.central_difference(lambda m: shocks.delta_f_min(p.with_(mu_m=m)), p.mu_m)
        fd_tau = oracles.central_difference(lambda t: shocks.delta_f_min(p.with_(tau=t)), p.tau)
        if not d_mu_m >= 0.0 or not d_tau <= 0.0:
            failures.append(f"draw {i}: signs {d_mu_m!r}, {d_tau!r}")
        if abs(d_mu_m - fd_mu_m) > 1e-6 * abs(fd_mu_m):
            failures.append(f"draw {i}: d/dmu_m {d_mu_m!r} vs FD {fd_mu_m!r}")
        if abs(d_tau - fd_tau) > 1e-6 * abs(fd_tau):
            failures.append(f"draw {i}: d/dtau {d_tau!r} vs FD {fd_tau!r}")
    for i in range(10):
        p = draws.baseline(rng, tau=1.0)
        if shocks.d_delta_f_min_d_mu_m(p) != 0.0:
            failures.append(f"tau=1 draw {i}: d/dmu_m = {shocks.d_delta_f_min_d_mu_m(p)!r}")
        if shocks.d_delta_f_min_d_tau(p) != 0.0:
            failures.append(f"tau=1 draw {i}: d/dtau = {shocks.d_delta_f_min_d_tau(p)!r}")
    _report(3, "comparative statics", failures)


def test_criterion_4_local_price_bound(rng):
    failures = []
    for i in range(50):
        p = draws.baseline(rng)
        assert p.F <= core.f_b(p)
        price = core.price_index(core.n_zero(p), p)
        if not price <= p.tau * p.p_u_star:
            failures.append(f"draw {i}: P(N_0)={price!r} > {p.tau * p.p_u_star!r}")
    _report(4, "local-price bound", failures)


def _cross_by_oracle(h: HetParams, N: float) -> float:
    def shift(mu_m: float) -> float:
        b = h.base.with_(mu_m=mu_m)
        # the inner term is affine in F, so a unit difference is its exact slope
        return oracles.het_inner(N, b.with_(F=b.F + 1.0), h.rho, h.rho_tilde, h.a_m_max) - oracles.het_inner(
            N, b, h.rho, h.rho_tilde, h.a_m_max
        )

    return oracles.central_difference(shift, h.base.mu_m)


def test_criterion_5_heterogeneous_extension(rng):
    failures = []
    cases = [draws.HET_REFERENCE] + [draws.het_draw(rng) for _ in range(9)]
    for i, h in enumerate(cases):
        b = h.base
        # the Pareto cdf is defined only while the cutoff stays within its support
        top = core.n_bar(b)
        if oracles.het_cutoff(top, h) > h.a_m_max:
            top = oracles.bisect(lambda n: oracles.het_cutoff(n, h) - h.a_m_max, h.n_tilde_0, top)
        for N in np.linspace(h.n_tilde_0, top, 100):
            a_r = min(max(oracles.het_cutoff(N, h), 1.0), h.a_m_max)
            expected = b.K_f * het.pareto_cdf(a_r, h)
            got = het.cutoff_locus(N, h)
            if abs(got - expected) > 1e-10:
                failures.append(f"case {i} N={N!r}: {got!r} vs {expected!r}")
        assert h.n_tilde_0 > 1.0
        N = core.n_bar(b)
        s = het.shift_sensitivity(h, N)
        if not s.cross < 0.0:
            failures.append(f"case {i}: cross derivative {s.cross!r} not negative")
        fd = _cross_by_oracle(h, N)
        if abs(s.cross - fd) > 1e-6 * abs(fd):
            failures.append(f"case {i}: cross {s.cross!r} vs FD {fd!r}")
    _report(5, "heterogeneous extension", failures)


def test_criterion_6_timing_solvers(rng):
    failures = []
    for i in range(10):
        prob = draws.recovery_draw(rng)
        sol = timing.reentry_timing(prob)
        best, spacing = oracles.grid_argmax(lambda t: timing.lifetime_return(prob, t), 0.0, prob.T)
        if abs(best - sol.t_star) > spacing:
            failures.append(f"reentry draw {i}: grid {best!r} vs {sol.t_star!r}")
        corner = RecoveryProblem(prob.base, prob.delta, timing.reentry_threshold(prob), prob.theta)
        if timing.reentry_timing(corner).t_star != 0.0:
            failures.append(f"reentry draw {i}: T = T_hat did not give t = 0")
    for i in range(10):
        prob = draws.risk_draw(rng)
        sol = timing.exit_timing_under_risk(prob)
        best, spacing = oracles.grid_argmax(lambda t: timing.expected_return(prob, t, 1e-4), 0.0, 10.0 / prob.lam)
        if abs(best - sol.t_star) > spacing:
            failures.append(f"risk draw {i}: grid {best!r} vs {sol.t_star!r}")
    base = draws.RISK_DOCUMENTED.base
    for ratio in (2.0, 2.5, 8.0):
        t = timing.exit_timing_under_risk(draws.risk_with_ratio(base, ratio)).t_star
        if t != 0.0:
            failures.append(f"r_f/(r_m-r_m')={ratio}: t={t!r}, expected 0")
    reentry = timing.reentry_timing(draws.RECOVERY_DOCUMENTED).t_star
    if abs(reentry - 20.0 / 0.55) > 1e-9:
        failures.append(f"documented reentry t={reentry!r}, expected {20.0 / 0.55!r}")
    corner_doc = RecoveryProblem(draws.RECOVERY_DOCUMENTED.base, 0.1, 200.0, 0.05)
    if timing.reentry_timing(corner_doc).t_star != 0.0:
        failures.append("documented reentry with T = T_hat is not t = 0")
    exit_t = timing.exit_timing_under_risk(draws.RISK_DOCUMENTED).t_star
    if abs(exit_t - math.log(2.0)) > 1e-9:
        failures.append(f"documented exit t={exit_t!r}, expected ln 2")
    _report(6, "timing solvers", failures)


def test_criterion_7_host_market(rng):
    failures = []
    for i in range(20):
        hp = draws.host_market_draw(rng)
        for e in ext.host_market_equilibria(hp).equilibria:
            if e.stable and not e.location.N_m > 0.0:
                failures.append(f"draw {i}: stable {e.label} at N_m={e.location.N_m!r}")
    _report(7, "host-market extension", failures)


def test_criterion_8_sourcing(rng):
    failures = []
    for i in range(20):
        sp = draws.sourcing_draw(rng)
        th = ext.sourcing_thresholds(sp)
        if not th.N_1 > th.N_2 > th.N_0:
            failures.append(f"draw {i}: ordering {th}")
        F_prime = th.F_c + (th.F_b - th.F_c) * rng.uniform(0.05, 0.95)
        verdict = ext.sourcing_shock(sp, F_prime)
        if verdict.verdict != ext.SWITCH_TO_L:
            failures.append(f"draw {i}: verdict {verdict.verdict!r} at F'={F_prime!r}")
        r_h, r_l, _ = ext.sourcing_returns(verdict.N_bar_post, sp)
        if not r_l > r_h:
            failures.append(f"draw {i}: r_m^L={r_l!r} not above r_m^H={r_h!r}")
    _report(8, "sourcing extension", failures)


def _majority(fine: np.ndarray, factor: int) -> np.ndarray:
    n = fine.shape[0] // factor
    blocks = fine.reshape(n, factor, n, factor).transpose(0, 2, 1, 3).reshape(n, n, factor * factor)
    s1 = np.sum(blocks == "S1", axis=2)
    s2 = np.sum(blocks == "S2", axis=2)
    out = np.full((n, n), "unresolved", dtype=object)
    out[s1 >= s2] = "S1"
    out[s2 > s1] = "S2"
    out[(s1 == 0) & (s2 == 0)] = "unresolved"
    return out


def test_criterion_9_basin_robustness():
    failures = []
    p = draws.REFERENCE
    start = time.perf_counter()
    bm = dynamics.basin_map(p, 200, threads=1)
    elapsed = time.perf_counter() - start
    if elapsed >= 60.0:
        failures.append(f"runtime {elapsed:.2f} s")
    labels = np.asarray(bm.labels, dtype=object)
    fine = oracles.basin_oracle(p, 800, dynamics.default_dt(p) / 2.0)
    agreement = float(np.mean(_majority(fine, 4) == labels))
    if agreement < 0.98:
        failures.append(f"agreement {agreement:.4f} < 0.98")
    bottom = labels[0]
    changes = np.flatnonzero(bottom[1:] != bottom[:-1])
    n0 = core.n_zero(p)
    cell = core.n_bar(p) / 200
    if changes.size == 0:
        failures.append(f"N_m≈0 row has a single label {bottom[0]!r}; no separatrix column")
    else:
        column = 0.5 * (bm.N_centers[changes[0]] + bm.N_centers[changes[0] + 1])
        if abs(column - n0) > cell:
            failures.append(f"separatrix column at N={column!r}, N_0={n0!r}")
    _report(9, "basin robustness", failures)
