"""Multinationals with heterogeneous input requirements.

Foreign capital draws an input requirement ``a_m`` from a Pareto law truncated
to [1, a_m_max]; imported inputs cost ``a_m**gamma`` in trade costs. Capital
with a draw below the cutoff a_m^R(N) locates in the host, so the mass of
multinationals is K_f * G(a_m^R) and entry proceeds from the most productive
draw upward.

Scalars computed here:

* ``rho_tilde`` = rho - (sigma-1)(1 + gamma(1-mu_m)), the exponent of the
  integrated sales of located multinationals;
* ``n_tilde_0``, the N at which even the best draw is indifferent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import core
from .core import DomainError, InvalidParameters, ModelParams, State, Violation
from .dynamics import DEFAULT_FLOOR_FRACTION, Equilibrium, FlowSystem

SCAN_INTERVALS = 256


@dataclass(frozen=True)
class HetParams:
    base: ModelParams
    rho: float
    a_m_max: float
    gamma: float

    @property
    def rho_tilde(self) -> float:
        b = self.base
        return self.rho - (b.sigma - 1.0) * (1.0 + self.gamma * (1.0 - b.mu_m))

    @property
    def n_tilde_0(self) -> float:
        b = self.base
        return math.exp((b.sigma - 1.0) * (math.log(b.a) - (1.0 - b.mu) * math.log(b.p_u_star)))

    def to_dict(self) -> dict:
        return {"rho": self.rho, "a_m_max": self.a_m_max, "gamma": self.gamma}

    def flow_system(self, speed_ratio: float = 1.0, n_min: float | None = None) -> FlowSystem:
        return _het_system(self, speed_ratio, n_min)


@dataclass(frozen=True)
class HetLoci:
    N_tilde_0: float
    F_tilde_a: float
    F_tilde_b: float
    K_tilde_f: float
    multiple: bool

    def to_dict(self) -> dict:
        return {
            "N_tilde_0": self.N_tilde_0,
            "F_tilde_a": self.F_tilde_a,
            "F_tilde_b": self.F_tilde_b,
            "K_tilde_f": self.K_tilde_f,
            "multiple": self.multiple,
        }


@dataclass(frozen=True)
class ShiftSensitivity:
    """Response of the free-entry locus to F at a given N.

    ``shift`` is the F-derivative of the inner term of the locus, ``dNm_dF``
    the F-derivative of the locus itself. ``cross`` is the mu_m-derivative of
    ``shift`` holding rho_tilde fixed; ``cross_total`` also lets rho_tilde
    move with mu_m.
    """

    N: float
    shift: float
    dNm_dF: float
    cross: float
    cross_total: float


def validate_het(het: HetParams) -> list[Violation]:
    out = core._bounds(het.base)
    if out:
        return out
    b = het.base
    floor = 1.0 - (1.0 - b.mu) / b.mu_m
    if not b.alpha > floor:
        out.append(Violation("assumption(a) slope condition", f"alpha={b.alpha} must exceed {floor}"))
    if b.F_m != 1.0:
        out.append(Violation("F_m", "the heterogeneous model uses unit multinational fixed capital"))
    if not het.rho >= 1.0:
        out.append(Violation("rho", f"Pareto shape must be at least 1 (got {het.rho})"))
    if not het.a_m_max > 1.0:
        out.append(Violation("a_m_max", f"upper truncation must exceed 1 (got {het.a_m_max})"))
    if not het.gamma > 0.0:
        out.append(Violation("gamma", f"trade-cost exponent must be positive (got {het.gamma})"))
    if out:
        return out
    if het.rho_tilde == 0.0:
        out.append(Violation("rho_tilde", "rho_tilde = 0 makes the locus exponent undefined"))
    if not het.n_tilde_0 > 1.0:
        out.append(Violation("n_tilde_0", f"N_tilde_0 must exceed 1 (got {het.n_tilde_0})"))
    return out


def require_valid_het(het: HetParams) -> None:
    violations = validate_het(het)
    if violations:
        raise InvalidParameters(violations)


def pareto_cdf(a_m: float, het: HetParams) -> float:
    if not 1.0 <= a_m <= het.a_m_max:
        raise DomainError(f"draw {a_m!r} outside the support [1, {het.a_m_max}]")
    return (a_m**het.rho - 1.0) / (het.a_m_max**het.rho - 1.0)


def pareto_quantile(prob: float, het: HetParams) -> float:
    """Draw whose cdf equals ``prob``; inverts the mass of located capital."""
    if not 0.0 <= prob <= 1.0:
        raise DomainError(f"probability {prob!r} outside [0, 1]")
    return (prob * (het.a_m_max**het.rho - 1.0) + 1.0) ** (1.0 / het.rho)


def _local_base_log(b: ModelParams) -> float:
    # log of a^(1/(1-mu)) / p_u*
    return math.log(b.a) / (1.0 - b.mu) - math.log(b.p_u_star)


def _cutoff_n_exponent(het: HetParams) -> float:
    b = het.base
    return b.mu_m / (het.gamma * (b.sigma - 1.0) * (1.0 - b.mu) * (1.0 - b.mu_m))


def cutoff_productivity(N: float, het: HetParams) -> float:
    """Draw a_m^R(N) at which locating in the host exactly pays off."""
    core._positive(N)
    b = het.base
    k = -b.mu_m / (het.gamma * (1.0 - b.mu_m))
    return math.exp(k * _local_base_log(b) + _cutoff_n_exponent(het) * math.log(N))


def cutoff_locus(N: float, het: HetParams) -> float:
    """Mass of multinationals whose draws beat the cutoff at N (uncapped)."""
    core._positive(N)
    b = het.base
    rho = het.rho
    k = -rho * b.mu_m / (het.gamma * (1.0 - b.mu_m))
    power = math.exp(k * _local_base_log(b) + rho * _cutoff_n_exponent(het) * math.log(N))
    return b.K_f / (het.a_m_max**rho - 1.0) * (power - 1.0)


def theta_tilde(het: HetParams) -> float:
    """Coefficient of the inner term of the heterogeneous free-entry locus."""
    b = het.base
    log_cost = b.mu_m / (1.0 - b.mu) * math.log(b.a) + (1.0 - b.mu_m) * math.log(b.p_u_star)
    num = het.rho_tilde * (het.a_m_max**het.rho - 1.0) * b.sigma * b.F * core.cost_factor(b)
    den = het.rho * b.mu_m * b.D_star * b.K_f * (b.sigma - 1.0)
    return num / den * math.exp((b.sigma - 1.0) * log_cost)


def _inner(N: float, het: HetParams) -> float:
    b = het.base
    return theta_tilde(het) * N ** (-b.mu_m / (1.0 - b.mu)) * (N - b.alpha * core.n_bar(b))


def pi_zero_locus_het(N: float, het: HetParams) -> float:
    """N_m at which host firms break even when multinationals are heterogeneous."""
    core._positive(N)
    if het.rho_tilde == 0.0:
        raise DomainError("rho_tilde = 0")
    base = _inner(N, het) + 1.0
    if not base > 0.0:
        raise DomainError(f"locus base {base!r} is not positive at N={N!r}")
    b = het.base
    return b.K_f / (het.a_m_max**het.rho - 1.0) * (base ** (het.rho / het.rho_tilde) - 1.0)


def _f1(N: float, het: HetParams) -> float:
    """Smallest F at which the free-entry locus lies above the cutoff locus at N."""
    b = het.base
    theta_1 = theta_tilde(het) / b.F
    e = b.mu_m / (1.0 - b.mu)
    cut_pow = cutoff_productivity(N, het) ** het.rho_tilde
    return b.alpha * b.L / (core.cost_factor(b) * N) + N ** (e - 1.0) * (cut_pow - 1.0) / theta_1


def het_thresholds(het: HetParams) -> HetLoci:
    """Sufficient conditions for two crossings of the loci plus the full-entry wall."""
    require_valid_het(het)
    b = het.base
    c = core.cost_factor(b)
    n0t = het.n_tilde_0
    f_b = b.alpha * b.L / (n0t * c)

    nb = core.n_bar(b)
    lo, hi = b.alpha * nb, nb
    grid = np.linspace(lo, hi, 401)
    values = np.array([_f1(x, het) for x in grid])
    k = int(np.argmin(values))
    f1_min = float(values[k])
    if 0 < k < grid.size - 1:
        res = minimize_scalar(
            lambda x: _f1(x, het),
            bounds=(grid[k - 1], grid[k + 1]),
            method="bounded",
            options={"xatol": 1e-12 * nb},
        )
        f1_min = min(f1_min, float(res.fun))
    f_a = max(f1_min, 0.0)

    cut_pow = cutoff_productivity(nb, het) ** het.rho_tilde
    theta_0 = theta_tilde(het) * b.K_f
    need = theta_0 * nb ** ((1.0 - b.mu - b.mu_m) / (1.0 - b.mu)) * (1.0 - b.alpha)
    gap = cut_pow - 1.0
    k_f = need / gap if gap * het.rho_tilde > 0.0 else math.inf
    multiple = (f_a < b.F <= f_b) and (b.K_f > k_f)
    return HetLoci(n0t, f_a, f_b, k_f, multiple)


def shift_sensitivity(het: HetParams, N: float | None = None) -> ShiftSensitivity:
    """Upward shift of the free-entry locus per unit F and its mu_m-derivative at N (default N_bar)."""
    require_valid_het(het)
    b = het.base
    if N is None:
        N = core.n_bar(b)
    core._positive(N)
    e = b.mu_m / (1.0 - b.mu)
    shift = theta_tilde(het) / b.F * N ** (1.0 - e)
    x = _inner(N, het)
    if not x + 1.0 > 0.0:
        raise DomainError(f"free-entry locus undefined at N={N!r}")
    ratio = het.rho / het.rho_tilde
    dnm_df = b.K_f / (het.a_m_max**het.rho - 1.0) * ratio * (x + 1.0) ** (ratio - 1.0) * shift
    log_slope = -1.0 / b.mu_m + math.log(het.n_tilde_0 / N) / (1.0 - b.mu)
    cross = shift * log_slope
    cross_total = shift * (log_slope + (b.sigma - 1.0) * het.gamma / het.rho_tilde)
    return ShiftSensitivity(N, shift, dnm_df, cross, cross_total)


def _dr_capped(N: float, het: HetParams) -> float:
    if N <= het.n_tilde_0:
        return 0.0
    return min(cutoff_locus(N, het), het.base.K_f)


def _pi0_or_inf(N: float, het: HetParams) -> float:
    try:
        return pi_zero_locus_het(N, het)
    except DomainError:
        return math.inf


def het_equilibria(het: HetParams) -> list[Equilibrium]:
    """Equilibria where the cutoff locus meets the free-entry locus or the N_bar wall.

    Crossings are bracketed on a uniform scan of [alpha*N_bar, N_bar] and
    refined with Brent's method. A crossing where the cutoff locus passes from
    above to below the free-entry locus is stable (S2); the reverse crossing
    is the saddle U; the N_bar wall hosts S1 when the cutoff locus is above.
    """
    require_valid_het(het)
    b = het.base
    nb = core.n_bar(b)
    anb = b.alpha * nb

    def g(N: float) -> float:
        return _dr_capped(N, het) - _pi0_or_inf(N, het)

    out: list[Equilibrium] = []
    if anb <= het.n_tilde_0:
        out.append(Equilibrium(State(anb, 0.0), "S2", True))
    grid = np.linspace(anb, nb, SCAN_INTERVALS + 1)
    vals = [g(x) for x in grid]
    for i in range(SCAN_INTERVALS):
        left, right = vals[i], vals[i + 1]
        if left == 0.0 or not (math.isfinite(left) and math.isfinite(right)):
            continue
        if (left > 0.0) == (right > 0.0):
            continue
        root = brentq(g, grid[i], grid[i + 1], xtol=1e-14 * nb, rtol=4 * np.finfo(float).eps)
        stable = bool(left > 0.0)
        out.append(Equilibrium(State(root, _dr_capped(root, het)), "S2" if stable else "U", stable))
    if vals[-1] > 0.0:
        out.append(Equilibrium(State(nb, _dr_capped(nb, het)), "S1", True))
    return out


def _het_system(het: HetParams, speed_ratio: float, n_min: float | None) -> FlowSystem:
    require_valid_het(het)
    b = het.base
    c = core.cost_factor(b)
    e = b.mu_m / (1.0 - b.mu)
    s1 = 1.0 - b.sigma
    top = het.a_m_max**het.rho - 1.0
    rt = het.rho_tilde
    log_cost = b.mu_m / (1.0 - b.mu) * math.log(b.a) + (1.0 - b.mu_m) * math.log(b.p_u_star)
    k_sales = (
        b.mu_m * (b.sigma - 1.0) / b.sigma * b.K_f * het.rho * b.D_star / top * math.exp(s1 * log_cost)
    )
    log_q = b.mu_m / (1.0 - b.mu) * math.log(b.a) - b.mu_m * math.log(b.p_u_star)
    aL = b.alpha * b.L

    def rates(N: np.ndarray, Nm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        marginal = np.power(Nm * top / b.K_f + 1.0, 1.0 / het.rho)
        Ne = np.power(N, e)
        integral = (np.power(marginal, rt) - 1.0) / rt
        dN = (aL / N + k_sales * Ne * integral / N) / c - b.F
        rel = np.exp(het.gamma * (1.0 - b.mu_m) * s1 * np.log(marginal) + s1 * log_q) * Ne
        dM = speed_ratio * b.D_star * np.power(marginal * b.p_u_star, s1) * (rel - 1.0) / b.sigma
        return dN, dM

    nb = core.n_bar(b)
    return FlowSystem(
        n_bar=nb,
        k_f=b.K_f,
        n_min=DEFAULT_FLOOR_FRACTION * nb if n_min is None else n_min,
        rates=rates,
        equilibria=het_equilibria(het),
    )
