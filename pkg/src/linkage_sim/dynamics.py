"""Entry/exit dynamics in the (N, N_m) plane.

Host firms enter while profits are positive (dN/dt = Pi) and foreign capital
relocates while the return differential is positive (dN_m/dt = k * delta_r,
with ``k`` the speed ratio). Integration is explicit Euler followed by
projection onto the box [N_min, N_bar] x [0, K_f].

Two accelerations keep long runs cheap without changing where a trajectory
ends up:

* a per-step limiter caps the change in N at ``max_rel_step`` of its current
  value, which only binds near the N floor where Pi blows up like 1/N;
* when N is pinned at N_bar and the multinational rate does not depend on
  N_m (the baseline model), the arithmetic run of identical Euler updates is
  taken in one jump up to the step before the free-entry locus is crossed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import core
from .core import ModelParams, State

CONVERGENCE_TOL = 1e-9
CONVERGENCE_STEPS = 10
LABEL_TOL = 1e-4
DEFAULT_FLOOR_FRACTION = 1e-6
DEFAULT_MAX_REL_STEP = 0.05

HORIZON_REACHED = "horizon reached"
UNRESOLVED = "unresolved"


class IntegrationError(RuntimeError):
    """A non-finite state appeared; ``last_state`` is the last finite one."""

    def __init__(self, message: str, last_state: State):
        super().__init__(message)
        self.last_state = last_state


@dataclass(frozen=True)
class Equilibrium:
    location: State
    label: str
    stable: bool

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "stable": self.stable,
            "N": self.location.N,
            "N_m": self.location.N_m,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Equilibrium:
        return cls(State(float(data["N"]), float(data["N_m"])), str(data["label"]), bool(data["stable"]))


@dataclass
class Trajectory:
    t: np.ndarray
    N: np.ndarray
    N_m: np.ndarray
    terminal: str

    @property
    def points(self) -> list[State]:
        return [State(float(n), float(m), float(s)) for s, n, m in zip(self.t, self.N, self.N_m)]

    @property
    def final(self) -> State:
        return State(float(self.N[-1]), float(self.N_m[-1]), float(self.t[-1]))


@dataclass
class BasinMap:
    """Terminal labels on a cell-centred lattice; ``labels[j, i]`` is row j (N_m), column i (N)."""

    N_centers: np.ndarray
    N_m_centers: np.ndarray
    labels: np.ndarray
    resolution: int

    def rows(self) -> list[tuple[float, float, str]]:
        """Row-major (N_m outer, N inner) records."""
        out = []
        for j, m in enumerate(self.N_m_centers):
            for i, n in enumerate(self.N_centers):
                out.append((float(n), float(m), str(self.labels[j, i])))
        return out


@dataclass
class FlowSystem:
    """Vectorised description of a planar entry/exit system.

    ``rates`` maps arrays (N, N_m) to arrays (dN/dt, dN_m/dt). ``absorbing``
    optionally returns, per point, the label of a forward-invariant region
    known to converge to that equilibrium ('' when not inside one).
    ``wall_locus``/``wall_rate`` enable the pinned-wall jump and are only set
    when the multinational rate is independent of N_m.
    """

    n_bar: float
    k_f: float
    n_min: float
    rates: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    equilibria: list[Equilibrium]
    absorbing: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    wall_locus: float | None = None
    wall_rate: float | None = None


def _baseline_system(params: ModelParams, speed_ratio: float, n_min: float | None) -> FlowSystem:
    p = params
    c = core.cost_factor(p)
    e = p.mu_m / (1.0 - p.mu)
    base_pow = core.mne_cost_base(p) ** (1.0 - p.sigma)
    k_sales = p.mu_m * (p.sigma - 1.0) / p.sigma * base_pow * p.D_star
    r_f = core.foreign_return(p)
    k_m = base_pow * p.D_star / (p.sigma * p.F_m)
    aL = p.alpha * p.L
    nb = core.n_bar(p)
    n0 = core.n_zero(p)

    def rates(N: np.ndarray, Nm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Ne = np.power(N, e)
        dN = (aL / N + k_sales * Nm * Ne / N) / c - p.F
        dM = speed_ratio * (k_m * Ne - r_f)
        return dN, dM

    th = core.theta(p)
    anb = p.alpha * nb

    def locus(N: np.ndarray) -> np.ndarray:
        return th * np.power(N, -e) * (N - anb)

    eqs = find_equilibria(p)
    labels = {q.label for q in eqs if q.stable}

    def absorbing(N: np.ndarray, Nm: np.ndarray) -> np.ndarray:
        out = np.full(N.shape, "", dtype=object)
        lo = locus(N)
        if "S1" in labels:
            out[(N > n0) & (Nm > lo)] = "S1"
        if "S2" in labels:
            out[(N < n0) & (Nm < lo)] = "S2"
        return out

    return FlowSystem(
        n_bar=nb,
        k_f=p.K_f,
        n_min=DEFAULT_FLOOR_FRACTION * nb if n_min is None else n_min,
        rates=rates,
        equilibria=eqs,
        absorbing=absorbing,
        wall_locus=float(core.pi_zero_locus(nb, p)),
        wall_rate=float(speed_ratio * core.delta_r(nb, p)),
    )


def flow_system(model, speed_ratio: float = 1.0, n_min: float | None = None) -> FlowSystem:
    """Build the vectorised system for baseline params or any model exposing ``flow_system``."""
    if isinstance(model, ModelParams):
        return _baseline_system(model, speed_ratio, n_min)
    return model.flow_system(speed_ratio=speed_ratio, n_min=n_min)


def default_dt(params: ModelParams) -> float:
    """0.1 times the relaxation time of N around the local-only state, capped at 0.1."""
    relaxation = core.n_bar(params) * params.alpha / params.F
    return 0.1 * min(1.0, relaxation)


def _base_params(model) -> ModelParams:
    return model if isinstance(model, ModelParams) else model.base


def step(state: State, params, dt: float, speed_ratio: float = 1.0, n_min: float | None = None) -> State:
    """One explicit Euler step followed by projection onto the box."""
    if not dt > 0.0:
        raise core.DomainError(f"dt must be positive (got {dt!r})")
    system = flow_system(params, speed_ratio, n_min)
    N = np.array([state.N], dtype=float)
    Nm = np.array([state.N_m], dtype=float)
    dN, dM = system.rates(N, Nm)
    N_new = min(max(state.N + dt * float(dN[0]), system.n_min), system.n_bar)
    Nm_new = min(max(state.N_m + dt * float(dM[0]), 0.0), system.k_f)
    return State(N_new, Nm_new, state.t + dt)


def _nearest_label(system: FlowSystem, N: np.ndarray, Nm: np.ndarray, tol: float) -> np.ndarray:
    out = np.full(N.shape, "", dtype=object)
    best = np.full(N.shape, np.inf)
    for eq in system.equilibria:
        d = np.maximum(
            np.abs(N - eq.location.N) / system.n_bar,
            np.abs(Nm - eq.location.N_m) / system.k_f,
        )
        hit = (d <= tol) & (d < best)
        out[hit] = eq.label
        best = np.where(hit, d, best)
    return out


@dataclass
class _RunResult:
    N: np.ndarray
    Nm: np.ndarray
    t: np.ndarray
    labels: np.ndarray


def _run(
    system: FlowSystem,
    N0: np.ndarray,
    Nm0: np.ndarray,
    dt: float,
    horizon: float,
    *,
    use_absorbing: bool = False,
    max_rel_step: float = DEFAULT_MAX_REL_STEP,
) -> _RunResult:
    N = np.clip(np.asarray(N0, dtype=float).copy(), system.n_min, system.n_bar)
    Nm = np.clip(np.asarray(Nm0, dtype=float).copy(), 0.0, system.k_f)
    n = N.size
    t = np.zeros(n)
    calm = np.zeros(n, dtype=int)
    labels = np.full(n, "", dtype=object)
    active = np.arange(n)
    jump_ok = system.wall_rate is not None and system.wall_rate < 0.0

    if use_absorbing and system.absorbing is not None:
        lab = system.absorbing(N, Nm)
        hit = lab != ""
        labels[hit] = lab[hit]
        active = active[~hit]

    while active.size:
        Na, Ma, ta = N[active], Nm[active], t[active]
        dN, dM = system.rates(Na, Ma)
        h = np.minimum(dt, horizon - ta)
        with np.errstate(divide="ignore", invalid="ignore"):
            limit = np.where(dN != 0.0, max_rel_step * Na / np.abs(dN), np.inf)
        h = np.minimum(h, limit)
        N_new = np.clip(Na + h * dN, system.n_min, system.n_bar)
        M_new = np.clip(Ma + h * dM, 0.0, system.k_f)
        bad = ~(np.isfinite(N_new) & np.isfinite(M_new))
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            last = State(float(Na[k]), float(Ma[k]), float(ta[k]))
            raise IntegrationError("non-finite state during integration", last)
        rate = np.maximum(np.abs(N_new - Na), np.abs(M_new - Ma)) / h
        t_new = ta + h

        if jump_ok:
            pinned = (N_new == system.n_bar) & (dN > 0.0) & (M_new > system.wall_locus)
            if pinned.any():
                per_step = dt * -system.wall_rate
                gap = M_new - system.wall_locus
                k_jump = np.floor(gap / per_step) - 1.0
                k_jump = np.minimum(k_jump, np.floor((horizon - t_new) / dt) - 1.0)
                k_jump = np.where(pinned & (k_jump >= 2.0) & (h == dt), k_jump, 0.0)
                M_new = M_new - k_jump * per_step
                t_new = t_new + k_jump * dt

        N[active], Nm[active], t[active] = N_new, M_new, t_new

        calm_a = np.where(rate < CONVERGENCE_TOL, calm[active] + 1, 0)
        calm[active] = calm_a
        done = np.zeros(active.size, dtype=bool)
        ready = calm_a >= CONVERGENCE_STEPS
        if ready.any():
            lab = _nearest_label(system, N_new, M_new, LABEL_TOL)
            hit = ready & (lab != "")
            labels[active[hit]] = lab[hit]
            done |= hit
        if use_absorbing and system.absorbing is not None:
            lab = system.absorbing(N_new, M_new)
            hit = (lab != "") & ~done
            labels[active[hit]] = lab[hit]
            done |= hit
        out_of_time = (t_new >= horizon) & ~done
        labels[active[out_of_time]] = HORIZON_REACHED
        done |= out_of_time
        active = active[~done]

    return _RunResult(N, Nm, t, labels)


def _run_single(
    system: FlowSystem,
    N0: float,
    Nm0: float,
    dt: float,
    horizon: float,
    max_rel_step: float = DEFAULT_MAX_REL_STEP,
) -> tuple[list[tuple[float, float, float]], str]:
    """Scalar twin of ``_run`` for one recorded trajectory (same update rules)."""
    N = min(max(float(N0), system.n_min), system.n_bar)
    Nm = min(max(float(Nm0), 0.0), system.k_f)
    t = 0.0
    calm = 0
    history = [(t, N, Nm)]
    jump_ok = system.wall_rate is not None and system.wall_rate < 0.0
    while True:
        dN, dM = system.rates(N, Nm)
        dN, dM = float(dN), float(dM)
        h = min(dt, horizon - t)
        if dN != 0.0:
            h = min(h, max_rel_step * N / abs(dN))
        N_new = min(max(N + h * dN, system.n_min), system.n_bar)
        M_new = min(max(Nm + h * dM, 0.0), system.k_f)
        if not (math.isfinite(N_new) and math.isfinite(M_new)):
            raise IntegrationError("non-finite state during integration", State(N, Nm, t))
        rate = max(abs(N_new - N), abs(M_new - Nm)) / h
        t_new = t + h
        if jump_ok and N_new == system.n_bar and dN > 0.0 and M_new > system.wall_locus and h == dt:
            per_step = dt * -system.wall_rate
            k_jump = min(
                math.floor((M_new - system.wall_locus) / per_step) - 1.0,
                math.floor((horizon - t_new) / dt) - 1.0,
            )
            if k_jump >= 2.0:
                M_new -= k_jump * per_step
                t_new += k_jump * dt
        N, Nm, t = N_new, M_new, t_new
        history.append((t, N, Nm))
        calm = calm + 1 if rate < CONVERGENCE_TOL else 0
        if calm >= CONVERGENCE_STEPS:
            lab = _nearest_label(system, np.array([N]), np.array([Nm]), LABEL_TOL)[0]
            if lab != "":
                return history, str(lab)
        if t >= horizon:
            return history, HORIZON_REACHED


def integrate(
    initial: State,
    params,
    dt: float | None = None,
    horizon: float = 1e4,
    *,
    speed_ratio: float = 1.0,
    n_min: float | None = None,
    max_rel_step: float = DEFAULT_MAX_REL_STEP,
) -> Trajectory:
    """Integrate from ``initial`` until convergence to an equilibrium or ``horizon``."""
    if dt is None:
        dt = default_dt(_base_params(params))
    if not dt > 0.0:
        raise core.DomainError(f"dt must be positive (got {dt!r})")
    if not horizon > dt:
        raise core.DomainError(f"horizon must exceed dt (got {horizon!r})")
    system = flow_system(params, speed_ratio, n_min)
    history, label = _run_single(system, initial.N, initial.N_m, dt, horizon, max_rel_step)
    hist = np.array(history)
    return Trajectory(hist[:, 0] + initial.t, hist[:, 1], hist[:, 2], label)


def terminal_labels(
    model,
    N0: Sequence[float] | np.ndarray,
    Nm0: Sequence[float] | np.ndarray,
    dt: float | None = None,
    horizon: float = 1e4,
    *,
    speed_ratio: float = 1.0,
    use_absorbing: bool = True,
) -> np.ndarray:
    """Terminal labels for many initial points integrated in lock-step."""
    if dt is None:
        dt = default_dt(_base_params(model))
    system = flow_system(model, speed_ratio)
    res = _run(system, np.asarray(N0, float), np.asarray(Nm0, float), dt, horizon, use_absorbing=use_absorbing)
    return res.labels


def regime(params: ModelParams) -> str:
    """'S1-only', 'multiple' or 'S2-only' from which equilibria exist."""
    labels = {q.label for q in find_equilibria(params)}
    if labels == {"S1"}:
        return "S1-only"
    if labels == {"S2"}:
        return "S2-only"
    return "multiple"


def find_equilibria(params: ModelParams) -> list[Equilibrium]:
    """Equilibria of the baseline model.

    Existence is decided geometrically: full entry at (N_bar, K_f) needs the
    return differential to be non-negative at N_bar, the local-only state
    (alpha*N_bar, 0) needs it non-positive at alpha*N_bar, and the saddle sits
    at N_0 on the free-entry locus when N_0 lies between the two.
    """
    core.require_valid(params)
    nb = core.n_bar(params)
    n0 = core.n_zero(params)
    anb = params.alpha * nb
    out = []
    has_s1 = nb >= n0
    has_s2 = anb <= n0
    if has_s1:
        out.append(Equilibrium(State(nb, params.K_f), "S1", True))
    if has_s2:
        out.append(Equilibrium(State(anb, 0.0), "S2", True))
    if has_s1 and has_s2:
        out.append(Equilibrium(State(n0, core.pi_zero_locus(n0, params)), "U", False))
    return out


def _basin_rows(model, N_c, M_c, dt, horizon, speed_ratio, rows):
    NN, MM = np.meshgrid(N_c, M_c[rows])
    labs = terminal_labels(model, NN.ravel(), MM.ravel(), dt, horizon, speed_ratio=speed_ratio)
    labs = np.where(np.isin(labs, ["S1", "S2"]), labs, UNRESOLVED)
    return labs.reshape(NN.shape)


def basin_map(
    params,
    resolution: int = 200,
    dt: float | None = None,
    horizon: float = 1e4,
    *,
    speed_ratio: float = 1.0,
    threads: int = 1,
) -> BasinMap:
    """Label each cell centre of a resolution x resolution grid over (0, N_bar] x [0, K_f].

    Cells are integrated in lock-step and leave the batch once they converge
    or enter a forward-invariant region whose limit is known. With
    ``threads > 1`` row blocks run concurrently; results do not depend on it.
    """
    if resolution < 1:
        raise core.DomainError("resolution must be at least 1")
    base = _base_params(params)
    if dt is None:
        dt = default_dt(base)
    system = flow_system(params, speed_ratio)
    N_c = (np.arange(resolution) + 0.5) * system.n_bar / resolution
    M_c = (np.arange(resolution) + 0.5) * system.k_f / resolution
    if threads <= 1:
        labels = _basin_rows(params, N_c, M_c, dt, horizon, speed_ratio, slice(None))
    else:
        blocks = np.array_split(np.arange(resolution), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: _basin_rows(params, N_c, M_c, dt, horizon, speed_ratio, r), blocks))
        labels = np.vstack(parts)
    return BasinMap(N_c, M_c, labels, resolution)
