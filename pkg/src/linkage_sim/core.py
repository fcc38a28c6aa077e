"""Baseline model: parameters, prices, equilibrium loci and the flow field.

Host domestic firms (count ``N``) buy local intermediates from each other, and
multinationals (count ``N_m``) source a share ``mu_m`` of their inputs locally.
Everything here is a pure function of a frozen :class:`ModelParams`.

Closed forms mixing positive and negative exponents are evaluated in log space
so that large ``sigma`` does not overflow intermediate powers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace


class DomainError(ValueError):
    """An argument lies outside the domain of a model function."""


class InvalidParameters(ValueError):
    """Parameters fail validation; ``violations`` lists what failed."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Violation:
    """One failed bound or modelling assumption."""

    name: str
    detail: str

    def __str__(self) -> str:
        return f"{self.name}: {self.detail}"


@dataclass(frozen=True)
class ModelParams:
    """Structural parameters of the baseline economy.

    ``F_m`` is the fixed capital input of a multinational (1 in the baseline);
    raising it is one of the disaster-shock variants.
    """

    sigma: float
    mu: float
    mu_m: float
    alpha: float
    a: float
    a_m: float
    p_u_star: float
    tau: float
    L: float
    F: float
    K_f: float
    D_star: float
    F_m: float = 1.0

    def with_(self, **changes: float) -> ModelParams:
        return replace(self, **changes)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ModelParams:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model parameter(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class State:
    """A point of the (N, N_m) phase plane at model time ``t``."""

    N: float
    N_m: float
    t: float = 0.0


@dataclass(frozen=True)
class DerivedConstants:
    """Snapshot of the closed-form constants for hot loops."""

    N_bar: float
    N_0: float
    Theta: float
    F_a: float
    F_b: float


def cost_factor(params: ModelParams) -> float:
    """sigma*(1-mu) + mu, the labor-to-sales factor of a host firm."""
    return params.sigma * (1.0 - params.mu) + params.mu


def _bounds(params: ModelParams) -> list[Violation]:
    p = params
    out = []
    checks = [
        ("sigma", p.sigma > 1.0, "sigma must exceed 1"),
        ("mu", 0.0 < p.mu < 1.0, "mu must lie in (0, 1)"),
        ("mu_m", 0.0 < p.mu_m < 1.0, "mu_m must lie in (0, 1)"),
        ("alpha", 0.0 < p.alpha <= 1.0, "alpha must lie in (0, 1]"),
        ("tau", p.tau >= 1.0, "tau must be at least 1"),
        ("p_u_star", p.p_u_star >= 1.0, "p_u_star must be at least 1"),
        ("F_m", p.F_m >= 1.0, "F_m must be at least 1"),
    ]
    for name in ("a", "a_m", "L", "F", "K_f", "D_star"):
        checks.append((name, getattr(p, name) > 0.0, f"{name} must be positive"))
    for name, ok, detail in checks:
        value = getattr(p, name)
        if not ok or not math.isfinite(value):
            out.append(Violation(name, f"{detail} (got {value!r})"))
    return out


def validate(params: ModelParams) -> list[Violation]:
    """Return every violated bound or assumption; empty when valid."""
    out = _bounds(params)
    if out:
        return out
    p = params
    slope_floor = 1.0 - (1.0 - p.mu) / p.mu_m
    if not p.alpha > slope_floor:
        out.append(
            Violation(
                "assumption(a) slope condition",
                f"alpha={p.alpha} must exceed 1-(1-mu)/mu_m={slope_floor}",
            )
        )
    need = capital_abundance_floor(p)
    if not p.K_f > need:
        out.append(
            Violation(
                "assumption(b) capital abundance",
                f"K_f={p.K_f} must exceed Theta*N_bar^((1-mu-mu_m)/(1-mu))*(1-alpha)={need}",
            )
        )
    return out


def require_valid(params: ModelParams) -> None:
    violations = validate(params)
    if violations:
        raise InvalidParameters(violations)


def capital_abundance_floor(params: ModelParams) -> float:
    """Value of the free-entry locus at N_bar; K_f must exceed it."""
    p = params
    nb = n_bar(p)
    return theta(p) * nb ** ((1.0 - p.mu - p.mu_m) / (1.0 - p.mu)) * (1.0 - p.alpha)


def _positive(N: float, what: str = "N") -> None:
    if not N > 0.0:
        raise DomainError(f"{what} must be positive (got {N!r})")


def price_index(N: float, params: ModelParams) -> float:
    """CES price index of local varieties when N host firms operate."""
    _positive(N)
    p = params
    log_p = math.log(p.a) / (1.0 - p.mu) + math.log(N) / ((1.0 - p.sigma) * (1.0 - p.mu))
    return math.exp(log_p)


def n_bar(params: ModelParams) -> float:
    """Labor-feasible maximum of N."""
    return params.L / (params.F * cost_factor(params))


def n_zero(params: ModelParams) -> float:
    """N at which multinational and foreign-domestic returns coincide."""
    p = params
    s1 = p.sigma - 1.0
    log_n = (
        s1 * math.log(p.a)
        + s1 * (1.0 - p.mu) * ((1.0 - p.mu_m) / p.mu_m * math.log(p.tau) - math.log(p.p_u_star))
        + (1.0 - p.mu) / p.mu_m * math.log(p.F_m)
    )
    return math.exp(log_n)


def mne_cost_base(params: ModelParams) -> float:
    """a_m * a^(mu_m/(1-mu)) * (tau p_u*)^(1-mu_m); p_m^(1-sigma) = base^(1-sigma) N^(mu_m/(1-mu))."""
    p = params
    return math.exp(
        math.log(p.a_m)
        + p.mu_m / (1.0 - p.mu) * math.log(p.a)
        + (1.0 - p.mu_m) * math.log(p.tau * p.p_u_star)
    )


def theta(params: ModelParams) -> float:
    """Coefficient of the free-entry locus."""
    p = params
    log_t = (
        math.log(p.sigma * p.F * cost_factor(p))
        + (p.sigma - 1.0) * math.log(mne_cost_base(p))
        - math.log(p.mu_m * p.D_star * (p.sigma - 1.0))
    )
    return math.exp(log_t)


def f_b(params: ModelParams) -> float:
    """Largest F at which the full-entry configuration is an equilibrium."""
    return params.L / (n_zero(params) * cost_factor(params))


def f_a(params: ModelParams) -> float:
    """Smallest F at which the local-only configuration is an equilibrium."""
    return params.alpha * params.L / (n_zero(params) * cost_factor(params))


def derived_constants(params: ModelParams) -> DerivedConstants:
    return DerivedConstants(
        N_bar=n_bar(params),
        N_0=n_zero(params),
        Theta=theta(params),
        F_a=f_a(params),
        F_b=f_b(params),
    )


def pi_zero_locus(N: float, params: ModelParams) -> float:
    """N_m at which host firms break even; negative below alpha*N_bar."""
    _positive(N)
    p = params
    return theta(p) * N ** (-p.mu_m / (1.0 - p.mu)) * (N - p.alpha * n_bar(p))


def mne_price_term(N: float, params: ModelParams) -> float:
    """p_m^(1-sigma): multinational price raised to 1-sigma at N local firms."""
    _positive(N)
    p = params
    return math.exp(
        (1.0 - p.sigma) * math.log(mne_cost_base(p)) + p.mu_m / (1.0 - p.mu) * math.log(N)
    )


def host_sales(state: State, params: ModelParams) -> float:
    """Sales p*q of a host firm, with host expenditure fixed at alpha*L."""
    N, N_m = state.N, state.N_m
    _positive(N)
    p = params
    intermediate = p.mu_m * (p.sigma - 1.0) / p.sigma * (N_m / N) * mne_price_term(N, p) * p.D_star
    return p.sigma / cost_factor(p) * (p.alpha * p.L / N + intermediate)


def excess_profit(state: State, params: ModelParams) -> float:
    """Profit of a host firm; its sign drives entry and exit of host firms."""
    return host_sales(state, params) / params.sigma - params.F


def multinational_return(N: float, params: ModelParams) -> float:
    """Capital return of a multinational at N local firms."""
    p = params
    return mne_price_term(N, p) * p.D_star / (p.sigma * p.F_m)


def foreign_return(params: ModelParams) -> float:
    """Capital return of a foreign domestic firm."""
    p = params
    return (p.a_m * p.p_u_star) ** (1.0 - p.sigma) * p.D_star / p.sigma


def delta_r(N: float, params: ModelParams) -> float:
    """Return differential multinational minus foreign-domestic; zero at N_0."""
    _positive(N)
    p = params
    s1 = 1.0 - p.sigma
    rel = math.exp(
        s1 * (p.mu_m / (1.0 - p.mu) * math.log(p.a) + (1.0 - p.mu_m) * math.log(p.tau) - p.mu_m * math.log(p.p_u_star))
        + p.mu_m / (1.0 - p.mu) * math.log(N)
        - math.log(p.F_m)
    )
    return p.D_star * (p.a_m * p.p_u_star) ** s1 * (rel - 1.0) / p.sigma
