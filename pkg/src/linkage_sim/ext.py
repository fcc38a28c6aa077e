"""Two extensions of the baseline model.

Host market. Multinationals also sell final goods in the host, whose
expenditure alpha*L goes to them; host firms produce intermediates only. The
free-entry locus then crosses zero at alpha mu_m (sigma-1) N_bar / sigma, and
the return differential gains the term alpha L / (sigma N_m), so below N_0 the
arbitrage locus is an increasing curve with a positive intercept and a
vertical asymptote at N_0.

Endogenous sourcing. Capital entering the host picks a high (H) or low (L)
local cost share, paying fixed capital F_H > F_L > 1. Returns cross at
N_0 (L equals foreign), N_2 (H equals foreign) and N_1 (H equals L).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import core
from .core import DomainError, InvalidParameters, ModelParams, State, Violation
from .dynamics import Equilibrium

HOST_SCAN_INTERVALS = 64
HOST_REFINE = 16
# relative size below which a local extremum of the locus gap counts as a tangency
TANGENCY_RTOL = 1e-10

TWO_STABLE = "two-stable"
UNIQUE_S1 = "unique-S1"
UNIQUE_S2 = "unique-S2"
DEGENERATE = "degenerate"

REMAIN_H = "remain H"
SWITCH_TO_L = "switch to L"
EXIT = "exit"


# Host market


@dataclass(frozen=True)
class HostMarketParams:
    base: ModelParams

    def to_dict(self) -> dict:
        return {}


@dataclass(frozen=True)
class HostMarketOutcome:
    equilibria: list[Equilibrium]
    configuration: str

    def to_dict(self) -> dict:
        return {"configuration": self.configuration, "equilibria": [e.to_dict() for e in self.equilibria]}


def _host_root(b: ModelParams) -> float:
    return b.alpha * b.mu_m * (b.sigma - 1.0) / b.sigma * core.n_bar(b)


def host_pi_zero_locus(N: float, params: HostMarketParams) -> float:
    """N_m at which host intermediate suppliers break even."""
    core._positive(N)
    b = params.base
    return core.theta(b) * N ** (-b.mu_m / (1.0 - b.mu)) * (N - _host_root(b))


def validate_host_market(params: HostMarketParams) -> list[Violation]:
    b = params.base
    out = core._bounds(b)
    if out:
        return out
    if not b.mu + b.mu_m < 1.0:
        out.append(Violation("assumption(b) upward slope", f"mu+mu_m={b.mu + b.mu_m} must be below 1"))
        return out
    ceiling = host_pi_zero_locus(core.n_bar(b), params)
    if not b.K_f > ceiling:
        out.append(Violation("assumption(a) capital abundance", f"K_f={b.K_f} must exceed {ceiling}"))
    return out


def require_valid_host_market(params: HostMarketParams) -> None:
    violations = validate_host_market(params)
    if violations:
        raise InvalidParameters(violations)


def _relative_return(N: float, b: ModelParams) -> float:
    # multinational over foreign return, net of the host-market term
    return (N / core.n_zero(b)) ** (b.mu_m / (1.0 - b.mu))


def host_arbitrage_intercept(params: HostMarketParams) -> float:
    b = params.base
    return b.alpha * b.L * (b.a_m * b.p_u_star) ** (b.sigma - 1.0) / b.D_star


def host_arbitrage_locus(N: float, params: HostMarketParams) -> float:
    """N_m below which multinationals enter, for 0 < N < N_0.

    Raises DomainError at or beyond N_0, where the locus has its vertical
    asymptote and every N_m attracts entry.
    """
    core._positive(N)
    b = params.base
    gap = 1.0 - _relative_return(N, b)
    if not gap > 0.0:
        raise DomainError(f"N={N!r} is at or beyond the asymptote N_0={core.n_zero(b)}")
    return host_arbitrage_intercept(params) / gap


def host_return_differential(state: State, params: HostMarketParams) -> float:
    """r_m - r_f including host-market sales."""
    core._positive(state.N)
    core._positive(state.N_m, "N_m")
    b = params.base
    foreign = b.D_star * (b.a_m * b.p_u_star) ** (1.0 - b.sigma) / b.sigma
    return foreign * (_relative_return(state.N, b) - 1.0) + b.alpha * b.L / (b.sigma * state.N_m)


def host_n_increasing(state: State, params: HostMarketParams) -> bool:
    return state.N_m > host_pi_zero_locus(state.N, params)


def host_nm_increasing(state: State, params: HostMarketParams) -> bool:
    if state.N >= core.n_zero(params.base):
        return True
    return state.N_m < host_arbitrage_locus(state.N, params)


def _gap_roots(h, lo: float, hi: float, scale: float) -> tuple[list[float], bool]:
    """Roots of h on [lo, hi] from a bracketing scan plus a search for hidden double roots."""
    grid = np.linspace(lo, hi, HOST_SCAN_INTERVALS * HOST_REFINE + 1)
    vals = np.array([h(x) for x in grid])
    roots: list[float] = []
    degenerate = False
    xtol = 1e-14 * hi
    for i in range(grid.size - 1):
        if vals[i] == 0.0:
            roots.append(float(grid[i]))
        elif vals[i] * vals[i + 1] < 0.0:
            roots.append(brentq(h, grid[i], grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    for i in range(1, grid.size - 1):
        v = vals[i]
        if v == 0.0 or vals[i - 1] * v <= 0.0 or vals[i + 1] * v <= 0.0:
            continue
        if abs(v) > min(abs(vals[i - 1]), abs(vals[i + 1])):
            continue
        sign = 1.0 if v > 0.0 else -1.0
        res = minimize_scalar(
            lambda x: sign * h(x), bounds=(grid[i - 1], grid[i + 1]), method="bounded", options={"xatol": xtol}
        )
        m = sign * float(res.fun)
        if abs(m) <= TANGENCY_RTOL * scale:
            degenerate = True
            roots.append(float(res.x))
        elif m * v < 0.0:
            x = float(res.x)
            roots.append(brentq(h, grid[i - 1], x, xtol=xtol, rtol=4 * np.finfo(float).eps))
            roots.append(brentq(h, x, grid[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    return sorted(roots), degenerate


def host_market_equilibria(params: HostMarketParams) -> HostMarketOutcome:
    """Intersections of the two host-market loci plus the equilibrium on the N_bar wall.

    Both loci slope upward, N rises above the free-entry locus and N_m rises
    below the arbitrage locus, so a crossing where the arbitrage locus passes
    from above to below is stable (S1, few multinationals) and the opposite
    crossing is the saddle U.
    The wall equilibrium at N_bar carries N_m = K_f beyond N_0 and the
    arbitrage locus otherwise (S2).
    """
    require_valid_host_market(params)
    b = params.base
    nb = core.n_bar(b)
    n0 = core.n_zero(b)
    top = min(n0, nb)
    scale = b.K_f

    def h(N: float) -> float:
        return host_arbitrage_locus(N, params) - host_pi_zero_locus(N, params)

    lo = top * 1e-9
    hi = top * (1.0 - 1e-12) if n0 <= nb else top
    roots, degenerate = _gap_roots(h, lo, hi, scale)
    out: list[Equilibrium] = []
    for r in roots:
        eps = 1e-7 * top
        slope = h(min(r + eps, hi)) - h(max(r - eps, lo))
        stable = bool(slope < 0.0)
        out.append(Equilibrium(State(r, host_arbitrage_locus(r, params)), "S1" if stable else "U", stable))
    if nb >= n0:
        wall = b.K_f
    else:
        wall = min(host_arbitrage_locus(nb, params), b.K_f)
    if wall > host_pi_zero_locus(nb, params):
        out.append(Equilibrium(State(nb, wall), "S2", True))
    if degenerate:
        config = DEGENERATE
    elif sum(e.stable for e in out) >= 2:
        config = TWO_STABLE
    elif any(e.label == "S2" for e in out):
        config = UNIQUE_S2
    else:
        config = UNIQUE_S1
    return HostMarketOutcome(out, config)


# Endogenous sourcing


@dataclass(frozen=True)
class SourcingParams:
    """Baseline parameters with the sourcing menu; ``base.mu_m`` and ``base.F_m`` are ignored."""

    base: ModelParams
    mu_m_H: float
    mu_m_L: float
    F_H: float
    F_L: float

    def branch(self, kind: str) -> ModelParams:
        if kind == "H":
            return self.base.with_(mu_m=self.mu_m_H, F_m=self.F_H)
        if kind == "L":
            return self.base.with_(mu_m=self.mu_m_L, F_m=self.F_L)
        raise DomainError(f"unknown multinational type {kind!r}")

    def to_dict(self) -> dict:
        return {"mu_m_H": self.mu_m_H, "mu_m_L": self.mu_m_L, "F_H": self.F_H, "F_L": self.F_L}


@dataclass(frozen=True)
class SourcingThresholds:
    N_0: float
    N_1: float
    N_2: float
    F_b: float
    F_c: float

    def to_dict(self) -> dict:
        return {"N_0": self.N_0, "N_1": self.N_1, "N_2": self.N_2, "F_b": self.F_b, "F_c": self.F_c}


@dataclass(frozen=True)
class SourcingVerdict:
    F_prime: float
    verdict: str
    thresholds: SourcingThresholds
    N_bar_post: float
    r_m_H: float
    r_m_L: float
    r_f: float

    def to_dict(self) -> dict:
        return {
            "F_prime": self.F_prime,
            "verdict": self.verdict,
            "thresholds": self.thresholds.to_dict(),
            "N_bar_post": self.N_bar_post,
            "r_m_H": self.r_m_H,
            "r_m_L": self.r_m_L,
            "r_f": self.r_f,
        }


def _n_one(sp: SourcingParams) -> float:
    b = sp.base
    log_n = (
        (b.sigma - 1.0) * math.log(b.a)
        - (b.sigma - 1.0) * (1.0 - b.mu) * math.log(b.tau * b.p_u_star)
        + (1.0 - b.mu) / (sp.mu_m_H - sp.mu_m_L) * math.log(sp.F_H / sp.F_L)
    )
    return math.exp(log_n)


def validate_sourcing(sp: SourcingParams) -> list[Violation]:
    b = sp.base.with_(mu_m=0.5, F_m=1.0)
    out = core._bounds(b)
    if not 0.0 < sp.mu_m_L < sp.mu_m_H < 1.0:
        out.append(Violation("mu_m ordering", f"need 0 < mu_m_L < mu_m_H < 1 (got {sp.mu_m_L}, {sp.mu_m_H})"))
    if not 1.0 < sp.F_L < sp.F_H:
        out.append(Violation("F ordering", f"need 1 < F_L < F_H (got {sp.F_L}, {sp.F_H})"))
    if out:
        return out
    floor = 1.0 - (1.0 - b.mu) / sp.mu_m_H
    if not b.alpha > floor:
        out.append(Violation("assumption(a) slope condition", f"alpha={b.alpha} must exceed {floor}"))
    low = sp.branch("L")
    nb = core.n_bar(low)
    need = core.theta(low) * nb ** ((1.0 - b.mu - sp.mu_m_L) / (1.0 - b.mu)) * (1.0 - b.alpha)
    if not b.K_f > need:
        out.append(Violation("assumption(b) capital abundance", f"K_f={b.K_f} must exceed {need}"))
    if not _n_one(sp) < nb:
        out.append(Violation("assumption(c) N_1 below N_bar", f"N_1={_n_one(sp)} must be below N_bar={nb}"))
    lhs = sp.mu_m_L * math.log(sp.F_H) - sp.mu_m_H * math.log(sp.F_L)
    rhs = (b.sigma - 1.0) * (sp.mu_m_H - sp.mu_m_L) * math.log(b.tau)
    if not lhs > rhs:
        out.append(
            Violation(
                "threshold ordering",
                f"mu_m_L ln F_H - mu_m_H ln F_L = {lhs} must exceed (sigma-1)(mu_m_H-mu_m_L) ln tau = {rhs}",
            )
        )
    return out


def require_valid_sourcing(sp: SourcingParams) -> None:
    violations = validate_sourcing(sp)
    if violations:
        raise InvalidParameters(violations)


def sourcing_thresholds(sp: SourcingParams) -> SourcingThresholds:
    """Return-crossing points N_0 < N_2 < N_1 and the matching F thresholds F_c < F_b."""
    require_valid_sourcing(sp)
    n0 = core.n_zero(sp.branch("L"))
    n2 = core.n_zero(sp.branch("H"))
    n1 = _n_one(sp)
    if not n1 > n2 > n0:
        raise InvalidParameters([Violation("threshold ordering", f"N_1={n1}, N_2={n2}, N_0={n0}")])
    c = core.cost_factor(sp.base)
    L = sp.base.L
    return SourcingThresholds(n0, n1, n2, L / (n0 * c), L / (n1 * c))


def sourcing_returns(N: float, sp: SourcingParams) -> tuple[float, float, float]:
    """(r_m^H, r_m^L, r_f) at N local firms."""
    return (
        core.multinational_return(N, sp.branch("H")),
        core.multinational_return(N, sp.branch("L")),
        core.foreign_return(sp.base),
    )


def locus_coefficient(N: float, sp: SourcingParams, kind: str) -> float:
    """Theta^j N^(-mu_m^j/(1-mu)) for type ``kind``."""
    core._positive(N)
    b = sp.branch(kind)
    return core.theta(b) * N ** (-b.mu_m / (1.0 - b.mu))


def sourcing_pi_zero_locus(N: float, sp: SourcingParams) -> float:
    """Free-entry locus with L-multinationals up to N_1 and H-multinationals beyond."""
    n1 = _n_one(sp)
    kind = "L" if N <= n1 else "H"
    return locus_coefficient(N, sp, kind) * (N - sp.base.alpha * core.n_bar(sp.base))


def sourcing_locus_jump(sp: SourcingParams) -> tuple[float, float]:
    """Left and right limits of the free-entry locus at N_1."""
    n1 = _n_one(sp)
    gap = n1 - sp.base.alpha * core.n_bar(sp.base)
    return locus_coefficient(n1, sp, "L") * gap, locus_coefficient(n1, sp, "H") * gap


def sourcing_shock(sp: SourcingParams, F_prime: float) -> SourcingVerdict:
    """Outcome for an economy at S1 with H-multinationals when F rises to F_prime."""
    th = sourcing_thresholds(sp)
    F = sp.base.F
    if not F < th.F_c:
        raise DomainError(f"pre-shock F={F} must lie below F_c={th.F_c} so that type H is chosen")
    if not F_prime >= F:
        raise DomainError(f"F_prime={F_prime} below the pre-shock F={F} is not a disaster")
    if F_prime <= th.F_c:
        verdict = REMAIN_H
    elif F_prime < th.F_b:
        verdict = SWITCH_TO_L
    else:
        verdict = EXIT
    nb_post = core.n_bar(sp.base.with_(F=F_prime))
    r_h, r_l, r_f = sourcing_returns(nb_post, sp)
    return SourcingVerdict(F_prime, verdict, th, nb_post, r_h, r_l, r_f)
