from __future__ import annotations

import numpy as np
import pytest

import draws
from linkage_sim import core, dynamics, shocks
from linkage_sim.core import DomainError, State
from linkage_sim.dynamics import Equilibrium, FlowSystem, IntegrationError


def _in_box(tr, p):
    nb = core.n_bar(p)
    return bool(np.all(tr.N > 0.0) and np.all(tr.N <= nb) and np.all(tr.N_m >= 0.0) and np.all(tr.N_m <= p.K_f))


def test_step_keeps_s1_fixed(ref):
    s1 = State(core.n_bar(ref), ref.K_f)
    out = dynamics.step(s1, ref, 0.01)
    assert (out.N, out.N_m) == (s1.N, s1.N_m)
    assert out.t == pytest.approx(0.01)


def test_step_on_locus_right_of_n_zero(ref):
    N = 1.9
    s = State(N, core.pi_zero_locus(N, ref))
    out = dynamics.step(s, ref, 1e-4)
    assert abs(out.N - N) <= 1e-12
    assert out.N_m > s.N_m


def test_step_projects_onto_box(ref):
    out = dynamics.step(State(1.0, 1e-9), ref, 1.0)
    assert out.N_m == 0.0
    with pytest.raises(DomainError):
        dynamics.step(State(1.0, 1.0), ref, 0.0)


def test_integrate_examples(ref):
    nb = core.n_bar(ref)
    assert dynamics.integrate(State(nb - 1e-3, ref.K_f), ref).terminal == "S1"
    tr = dynamics.integrate(State(ref.alpha * nb + 1e-3, 0.0), ref)
    assert tr.terminal == "S2"
    assert _in_box(tr, ref)
    assert np.all(np.diff(tr.t) > 0.0)


def test_integrate_after_switching_shock(ref):
    new, verdict = shocks.apply_shock(ref, shocks.ShockSpec(shocks.FIXED_LABOR, 4.0))
    tr = dynamics.integrate(verdict.pre.location, new)
    assert tr.terminal == "S2"
    assert tr.final.N == pytest.approx(new.alpha * core.n_bar(new), rel=1e-4)
    assert tr.final.N_m == 0.0
    assert _in_box(tr, new)


def test_integrate_rejects_bad_arguments(ref):
    with pytest.raises(DomainError):
        dynamics.integrate(State(1.0, 1.0), ref, dt=-1.0)
    with pytest.raises(DomainError):
        dynamics.integrate(State(1.0, 1.0), ref, dt=1.0, horizon=0.5)


class _Broken:
    base = draws.REFERENCE

    def flow_system(self, speed_ratio=1.0, n_min=None):
        return FlowSystem(
            n_bar=2.0, k_f=10.0, n_min=1e-6,
            rates=lambda N, Nm: (np.asarray(N) * np.nan, np.asarray(Nm) * 0.0),
            equilibria=[],
        )


def test_integrate_reports_non_finite_state():
    with pytest.raises(IntegrationError) as err:
        dynamics.integrate(State(1.0, 1.0), _Broken(), dt=0.01)
    assert err.value.last_state == State(1.0, 1.0, 0.0)


def test_horizon_reached_label(ref):
    tr = dynamics.integrate(State(1.0, 5.0), ref, horizon=0.05)
    assert tr.terminal == dynamics.HORIZON_REACHED


def test_find_equilibria_regimes(ref):
    k = core.derived_constants(ref)
    low = dynamics.find_equilibria(ref.with_(F=0.9 * k.F_a))
    assert [(e.label, e.stable) for e in low] == [("S1", True)]
    high_p = ref.with_(F=1.1 * k.F_b, K_f=100.0)
    high = dynamics.find_equilibria(high_p)
    assert [(e.label, e.stable) for e in high] == [("S2", True)]
    mid = {e.label: e for e in dynamics.find_equilibria(ref)}
    assert set(mid) == {"S1", "S2", "U"}
    assert not mid["U"].stable and mid["S1"].stable and mid["S2"].stable
    assert mid["U"].location.N == pytest.approx(k.N_0, rel=1e-12)
    assert mid["U"].location.N_m == pytest.approx(core.pi_zero_locus(k.N_0, ref), rel=1e-12)
    assert mid["S1"].location == State(k.N_bar, ref.K_f)
    assert mid["S2"].location == State(ref.alpha * k.N_bar, 0.0)


def test_equilibria_are_rest_points(ref):
    for e in dynamics.find_equilibria(ref):
        if e.label == "U":
            assert abs(core.excess_profit(e.location, ref)) < 1e-9
            assert abs(core.delta_r(e.location.N, ref)) < 1e-9
        else:
            assert dynamics.step(e.location, ref, 0.01).N == pytest.approx(e.location.N, rel=1e-12)


def test_equilibrium_round_trip(ref):
    for e in dynamics.find_equilibria(ref):
        assert Equilibrium.from_dict(e.to_dict()) == e


def test_stability_by_perturbation(ref):
    for e in dynamics.find_equilibria(ref):
        if not e.stable:
            continue
        nb = core.n_bar(ref)
        N = min(e.location.N * 0.99, nb)
        Nm = min(e.location.N_m * 0.99 if e.location.N_m else 0.01 * ref.K_f, ref.K_f)
        assert dynamics.integrate(State(N, Nm), ref).terminal == e.label
        N_up = min(e.location.N * 1.01, nb)
        Nm_up = min(e.location.N_m * 1.01 if e.location.N_m else 0.01 * ref.K_f, ref.K_f)
        assert dynamics.integrate(State(N_up, Nm_up), ref).terminal == e.label


def test_monotone_nm_on_each_side_of_n_zero(ref):
    n0 = core.n_zero(ref)
    for start in (State(1.95, 6.0), State(1.2, 3.0), State(0.5, 9.0), State(1.9, 0.5)):
        tr = dynamics.integrate(start, ref)
        dM = np.diff(tr.N_m)
        side = np.sign(tr.N[:-1] - n0)
        for s in (-1.0, 1.0):
            moved = dM[(side == s) & (dM != 0.0)]
            assert np.all(np.sign(moved) == s)


def test_trajectories_stay_in_box_random(rng):
    for _ in range(5):
        p = draws.baseline(rng, f_share=(0.75, 0.95))
        nb = core.n_bar(p)
        for N, Nm in rng.uniform(0.01, 1.0, size=(4, 2)):
            tr = dynamics.integrate(State(N * nb, Nm * p.K_f), p)
            assert _in_box(tr, p)
            assert tr.terminal in {"S1", "S2"}


def test_basin_single_label_below_f_a(ref):
    p = ref.with_(F=0.9 * core.f_a(ref))
    bm = dynamics.basin_map(p, 20)
    assert set(np.ravel(bm.labels)) == {"S1"}


def test_basin_structure(ref):
    bm = dynamics.basin_map(ref, 40)
    labels = np.asarray(bm.labels)
    n0 = core.n_zero(ref)
    assert labels[-1, -1] == "S1"
    left = bm.N_centers < n0
    assert np.all(labels[0, left] == "S2")
    assert set(labels.ravel()) <= {"S1", "S2", dynamics.UNRESOLVED}
    rows = bm.rows()
    assert len(rows) == 40 * 40
    assert rows[1][1] == rows[0][1] and rows[1][0] > rows[0][0]


def test_basin_deterministic_across_threads(ref):
    one = dynamics.basin_map(ref, 30, threads=1)
    four = dynamics.basin_map(ref, 30, threads=4)
    assert np.array_equal(np.asarray(one.labels), np.asarray(four.labels))


def test_halving_dt_changes_few_labels(ref):
    dt = dynamics.default_dt(ref)
    full = np.asarray(dynamics.basin_map(ref, 50, dt=dt).labels)
    half = np.asarray(dynamics.basin_map(ref, 50, dt=dt / 2).labels)
    assert np.mean(full != half) <= 0.02


def test_speed_ratio_keeps_labels_far_from_separatrix(ref):
    nb = core.n_bar(ref)
    for ratio in (0.5, 2.0):
        assert dynamics.integrate(State(nb, 9.5), ref, speed_ratio=ratio).terminal == "S1"
        assert dynamics.integrate(State(0.5, 0.5), ref, speed_ratio=ratio).terminal == "S2"


def test_regime_labels(ref):
    k = core.derived_constants(ref)
    assert dynamics.regime(ref.with_(F=0.5 * k.F_a)) == "S1-only"
    assert dynamics.regime(ref) == "multiple"
    assert dynamics.regime(ref.with_(F=2.0 * k.F_b, K_f=1e3)) == "S2-only"
