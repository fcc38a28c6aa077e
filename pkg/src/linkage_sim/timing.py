"""Optimal location timing: reentry while a disaster recovers, and exit under disaster risk.

Reentry. After a disaster at s=0 the host fixed labor input is F e^(delta (T-s))
until it returns to F at T. Foreign capital earns r_f abroad and chooses the
time t <= T at which to move to the host, where it earns the recovering
multinational return. The objective is

    v(t) = int_0^t e^(-theta s) r_f ds
         + int_t^T e^(-theta k (T-s)) r_m ds
         + int_T^inf e^(-theta s) r_m ds,        k = delta mu_m / (1-mu),

whose first-order condition gives the interior time
t = [delta mu_m T - ((1-mu)/theta) ln(r_m/r_f)] / (1 - mu + delta mu_m),
which vanishes exactly at the corner horizon T_hat.

Exit under risk. A shock raising F to F' arrives at an exponential time with
rate lambda; capital stays in the host until t and earns r_f afterwards. The
expected return is evaluated in closed form and its theta -> 0 maximiser is
found exactly from a quadratic in x = e^(-lambda t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import core
from .core import DomainError, ModelParams

CORNER_ZERO = "corner-zero"
INTERIOR = "interior"
NEVER = "never"
BRANCHES = (CORNER_ZERO, INTERIOR, NEVER)

DEFAULT_RISK_THETA = 1e-4
# T within this relative distance of T_hat counts as the corner
CORNER_RTOL = 1e-12


@dataclass(frozen=True)
class RecoveryProblem:
    base: ModelParams
    delta: float
    T: float
    theta: float

    def to_dict(self) -> dict:
        return {"delta": self.delta, "T": self.T, "theta": self.theta}


@dataclass(frozen=True)
class RiskProblem:
    base: ModelParams
    F_prime: float
    lam: float
    theta: float = 0.0

    def to_dict(self) -> dict:
        return {"F_prime": self.F_prime, "lambda": self.lam, "theta": self.theta}


@dataclass(frozen=True)
class TimingSolution:
    """Optimal time, or ``None`` on the ``never`` branch."""

    t_star: float | None
    branch: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise ValueError(f"unknown branch {self.branch!r}")
        if (self.branch == NEVER) != (self.t_star is None):
            raise ValueError("t_star must be None exactly on the never branch")

    def to_dict(self) -> dict:
        return {
            "branch": self.branch,
            "t_star": self.t_star,
            "diagnostics": {k: _finite_or_none(v) for k, v in self.diagnostics.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> TimingSolution:
        t = data.get("t_star")
        return cls(
            t_star=None if t is None else float(t),
            branch=str(data["branch"]),
            diagnostics=dict(data.get("diagnostics", {})),
        )


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


# Reentry after a recovering disaster


def recovery_returns(problem: RecoveryProblem) -> tuple[float, float]:
    """(r_m, r_f): full-recovery multinational return at N_bar and the foreign return."""
    b = problem.base
    return core.multinational_return(core.n_bar(b), b), core.foreign_return(b)


def _check_recovery(problem: RecoveryProblem) -> None:
    core.require_valid(problem.base)
    for name in ("delta", "T", "theta"):
        value = getattr(problem, name)
        if not (value > 0.0 and math.isfinite(value)):
            raise DomainError(f"{name} must be positive and finite (got {value!r})")
    b = problem.base
    f_b = core.f_b(b)
    if b.F > f_b:
        raise DomainError(f"pre-shock F={b.F} exceeds F_b={f_b}")
    if not math.log(b.F) + problem.delta * problem.T > math.log(f_b):
        raise DomainError("the initial shock F e^(delta T) does not exceed F_b")


def _recovery_rate(problem: RecoveryProblem) -> float:
    b = problem.base
    return problem.delta * b.mu_m / (1.0 - b.mu)


def _v_closed(problem: RecoveryProblem, t: float, r_m: float, r_f: float) -> float:
    th, T = problem.theta, problem.T
    k = _recovery_rate(problem)
    abroad = r_f * -math.expm1(-th * t) / th
    recovering = r_m * -math.expm1(-th * k * (T - t)) / (th * k)
    recovered = r_m * math.exp(-th * T) / th
    return abroad + recovering + recovered


def lifetime_return(problem: RecoveryProblem, t: float) -> float:
    """Present value of moving to the host at time t, by numerical quadrature."""
    if not 0.0 <= t <= problem.T:
        raise DomainError(f"entry time {t!r} outside [0, T={problem.T}]")
    r_m, r_f = recovery_returns(problem)
    th, T = problem.theta, problem.T
    k = _recovery_rate(problem)
    opts = {"epsabs": 0.0, "epsrel": 1e-12, "limit": 200}
    abroad = quad(lambda s: math.exp(-th * s) * r_f, 0.0, t, **opts)[0]
    recovering = quad(lambda s: math.exp(-th * k * (T - s)) * r_m, t, T, **opts)[0]
    recovered = quad(lambda s: math.exp(-th * s) * r_m, T, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return abroad + recovering + recovered


def reentry_threshold(problem: RecoveryProblem) -> float:
    """Recovery horizon T_hat at or below which immediate reentry is optimal."""
    r_m, r_f = recovery_returns(problem)
    return math.log(r_m / r_f) / (problem.theta * _recovery_rate(problem))


def concavity_horizon(problem: RecoveryProblem) -> float:
    """T_bar = (1/theta) ln((1-mu) r_f / (delta mu_m r_m)); NaN when the log argument is not positive."""
    r_m, r_f = recovery_returns(problem)
    arg = r_f / (_recovery_rate(problem) * r_m)
    return math.log(arg) / problem.theta if arg > 0.0 else math.nan


def reentry_timing(problem: RecoveryProblem) -> TimingSolution:
    """Optimal time to move capital back into the recovering host."""
    _check_recovery(problem)
    b = problem.base
    r_m, r_f = recovery_returns(problem)
    th, T, dl = problem.theta, problem.T, problem.delta
    k = _recovery_rate(problem)
    log_ratio = math.log(r_m / r_f)
    t_hat_T = reentry_threshold(problem)
    t_bar = concavity_horizon(problem)
    diag = {"T_hat": t_hat_T, "T_bar": t_bar, "r_m": r_m, "r_f": r_f}
    if T <= t_hat_T * (1.0 + CORNER_RTOL):
        diag["marginal_at_zero"] = (r_f - math.exp(-th * k * T) * r_m) / r_m
        return TimingSolution(0.0, CORNER_ZERO, diag)

    t = (dl * b.mu_m * T - (1.0 - b.mu) / th * log_ratio) / (1.0 - b.mu + dl * b.mu_m)
    diag["foc_residual"] = (math.exp(-th * t) * r_f - math.exp(-th * k * (T - t)) * r_m) / r_m
    soc = -th * math.exp(-th * t) * r_f - th * k * math.exp(-th * k * (T - t)) * r_m
    diag["soc"] = soc
    if not (math.isfinite(t_bar) and T < t_bar):
        # sufficient condition inconclusive: inspect curvature directly
        h = 1e-3 * min(t, T - t)
        second = (
            _v_closed(problem, t + h, r_m, r_f)
            - 2.0 * _v_closed(problem, t, r_m, r_f)
            + _v_closed(problem, t - h, r_m, r_f)
        ) / (h * h)
        diag["second_difference"] = second
        if second > 0.0:
            return TimingSolution(None, NEVER, diag)
    return TimingSolution(t, INTERIOR, diag)


# Exit under disaster risk


def risk_returns(problem: RiskProblem) -> tuple[float, float, float]:
    """(r_m, r_m', r_f) before and after the shock, and abroad."""
    b = problem.base
    shocked = b.with_(F=problem.F_prime)
    return (
        core.multinational_return(core.n_bar(b), b),
        core.multinational_return(core.n_bar(shocked), shocked),
        core.foreign_return(b),
    )


def _check_risk(problem: RiskProblem) -> None:
    core.require_valid(problem.base)
    if not (problem.lam > 0.0 and math.isfinite(problem.lam)):
        raise DomainError(f"lambda must be positive and finite (got {problem.lam!r})")
    if not (problem.theta >= 0.0 and math.isfinite(problem.theta)):
        raise DomainError(f"theta must be non-negative and finite (got {problem.theta!r})")
    if not problem.F_prime < core.f_b(problem.base):
        raise DomainError(f"F_prime={problem.F_prime} must lie below F_b={core.f_b(problem.base)}")
    r_m, r_mp, r_f = risk_returns(problem)
    if not r_m > r_mp > r_f:
        raise DomainError(f"returns must satisfy r_m > r_m' > r_f (got {r_m}, {r_mp}, {r_f})")


def expected_return(problem: RiskProblem, t: float, theta: float | None = None) -> float:
    """Expected present value of leaving the host at t; theta defaults to the problem's, or 1e-4 if zero."""
    if not t >= 0.0:
        raise DomainError(f"exit time {t!r} must be non-negative")
    th = theta if theta is not None else (problem.theta or DEFAULT_RISK_THETA)
    if not th > 0.0:
        raise DomainError("expected_return needs a positive discount rate")
    r_m, r_mp, r_f = risk_returns(problem)
    lam = problem.lam
    first = lam * (r_m - r_mp) / ((th + lam) * (th + 2.0 * lam)) * -math.expm1(-(th + 2.0 * lam) * t)
    second = -math.expm1(-lam * t) / (th + lam) * (r_m - math.exp(-(th + lam) * t) * r_mp)
    return first + second + r_f / th * math.exp(-th * t)


def _undiscounted_objective(t: float, lam: float, r_m: float, r_mp: float, r_f: float) -> float:
    # theta -> 0 limit of expected_return after dropping the constant r_f/theta
    x = math.exp(-lam * t)
    return (r_m - r_mp) / (2.0 * lam) * (1.0 - x * x) + (1.0 - x) * (r_m - x * r_mp) / lam - r_f * t


def _marginal_roots(r_m: float, r_mp: float, r_f: float) -> list[float]:
    """Roots in (0, 1) of x^2 (r_m - 3 r_m') + x (r_m + r_m') - r_f."""
    coeffs = [r_m - 3.0 * r_mp, r_m + r_mp, -r_f]
    if coeffs[0] == 0.0:
        roots = [r_f / coeffs[1]]
    else:
        roots = [complex(z) for z in np.roots(coeffs)]
        roots = [z.real for z in roots if abs(z.imag) <= 1e-14 * max(1.0, abs(z.real))]
    return sorted(x for x in roots if 0.0 < x < 1.0)


def exit_timing_under_risk(problem: RiskProblem) -> TimingSolution:
    """Exit time maximising expected return in the theta -> 0 limit.

    The marginal value in x = e^(-lambda t) is a quadratic; its roots in (0, 1)
    together with t = 0 are the only candidates, and the best is returned.
    """
    _check_risk(problem)
    r_m, r_mp, r_f = risk_returns(problem)
    lam = problem.lam
    candidates = [0.0] + [-math.log(x) / lam for x in _marginal_roots(r_m, r_mp, r_f)]
    values = [_undiscounted_objective(t, lam, r_m, r_mp, r_f) for t in candidates]
    best = max(range(len(candidates)), key=lambda i: (values[i], -i))
    t = candidates[best]
    x = math.exp(-lam * t)
    marginal = x * x * (r_m - 3.0 * r_mp) + x * (r_m + r_mp) - r_f
    diag = {
        "r_m": r_m,
        "r_m_prime": r_mp,
        "r_f": r_f,
        "foreign_to_loss_ratio": r_f / (r_m - r_mp),
    }
    diag["marginal_at_zero" if best == 0 else "foc_residual"] = marginal / r_m
    if best == 0:
        return TimingSolution(0.0, CORNER_ZERO, diag)
    return TimingSolution(t, INTERIOR, diag)


def known_timing_return(problem: RiskProblem, shock_time: float, t: float, theta: float | None = None) -> float:
    """Present value of leaving at t >= shock_time when the shock date is known."""
    if not 0.0 <= shock_time <= t:
        raise DomainError("need 0 <= shock_time <= t")
    th = theta if theta is not None else (problem.theta or DEFAULT_RISK_THETA)
    r_m, r_mp, r_f = risk_returns(problem)
    before = r_m * -math.expm1(-th * shock_time) / th
    after = r_mp * (math.exp(-th * shock_time) - math.exp(-th * t)) / th
    abroad = r_f * math.exp(-th * t) / th
    return before + after + abroad
