"""Disaster shocks: switching thresholds, shock variants and comparative statics."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import core
from .core import DomainError, ModelParams, State
from .dynamics import Equilibrium, find_equilibria

FIXED_LABOR = "FixedLabor"
ICEBERG = "IntraNationalIceberg"
MNE_CAPITAL = "MNEFixedCapital"
KINDS = (FIXED_LABOR, ICEBERG, MNE_CAPITAL)


@dataclass(frozen=True)
class ShockSpec:
    """A single disaster shock.

    FixedLabor raises F by ``magnitude``; IntraNationalIceberg multiplies the
    host input parameter ``a`` by ``magnitude``; MNEFixedCapital sets the
    multinational fixed capital input to ``magnitude``.
    """

    kind: str
    magnitude: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown shock kind {self.kind!r}; expected one of {KINDS}")
        m = self.magnitude
        if not math.isfinite(m):
            raise DomainError(f"shock magnitude must be finite (got {m!r})")
        if self.kind == FIXED_LABOR and not m > 0.0:
            raise DomainError(f"FixedLabor magnitude must be positive (got {m!r})")
        if self.kind in (ICEBERG, MNE_CAPITAL) and not m >= 1.0:
            raise DomainError(f"{self.kind} magnitude must be at least 1 (got {m!r})")


@dataclass(frozen=True)
class ShockVerdict:
    kind: str
    magnitude: float
    threshold: float
    switches: bool
    pre: Equilibrium
    post: Equilibrium

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "magnitude": self.magnitude,
            "threshold": self.threshold,
            "switches": self.switches,
            "pre": self.pre.to_dict(),
            "post": self.post.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> ShockVerdict:
        return cls(
            kind=str(data["kind"]),
            magnitude=float(data["magnitude"]),
            threshold=float(data["threshold"]),
            switches=bool(data["switches"]),
            pre=Equilibrium.from_dict(data["pre"]),
            post=Equilibrium.from_dict(data["post"]),
        )


def delta_f_min(params: ModelParams) -> float:
    """Smallest rise in F that pushes the economy out of the full-entry regime."""
    return max(core.f_b(params) - params.F, 0.0)


def shock_threshold(params: ModelParams, kind: str) -> float:
    """Smallest magnitude of ``kind`` that moves N_0 beyond N_bar."""
    p = params
    if kind == FIXED_LABOR:
        return delta_f_min(p)
    ratio = core.n_bar(p) / core.n_zero(p)
    if kind == ICEBERG:
        return max(ratio ** (1.0 / (p.sigma - 1.0)), 1.0)
    if kind == MNE_CAPITAL:
        # F_m enters N_0 as F_m^((1-mu)/mu_m) relative to the current F_m
        return max(p.F_m * ratio ** (p.mu_m / (1.0 - p.mu)), 1.0)
    raise DomainError(f"unknown shock kind {kind!r}")


def shocked_params(params: ModelParams, shock: ShockSpec) -> ModelParams:
    if shock.kind == FIXED_LABOR:
        return params.with_(F=params.F + shock.magnitude)
    if shock.kind == ICEBERG:
        return params.with_(a=params.a * shock.magnitude)
    return params.with_(F_m=shock.magnitude)


def _pick(eqs: list[Equilibrium], label: str) -> Equilibrium:
    for q in eqs:
        if q.label == label:
            return q
    raise DomainError(f"equilibrium {label} does not exist for these parameters")


def apply_shock(params: ModelParams, shock: ShockSpec) -> tuple[ModelParams, ShockVerdict]:
    """Apply ``shock`` to an economy sitting at full entry and report the outcome."""
    core.require_valid(params)
    if params.F > core.f_b(params):
        raise DomainError("pre-shock economy is not at the full-entry equilibrium (F > F_b)")
    if shock.kind == MNE_CAPITAL and shock.magnitude < params.F_m:
        raise DomainError("MNEFixedCapital magnitude below the current F_m is not a disaster")
    new = shocked_params(params, shock)
    threshold = shock_threshold(params, shock.kind)
    switches = shock.magnitude > threshold
    pre = _pick(find_equilibria(params), "S1")
    # Post-shock parameters may violate capital abundance, so locate directly.
    nb_new = core.n_bar(new)
    if switches:
        post = Equilibrium(State(new.alpha * nb_new, 0.0), "S2", True)
    else:
        post = Equilibrium(State(nb_new, new.K_f), "S1", True)
    return new, ShockVerdict(shock.kind, shock.magnitude, threshold, switches, pre, post)


def d_delta_f_min_d_mu_m(params: ModelParams) -> float:
    """Derivative of the switching threshold in the multinational local cost share."""
    p = params
    log_terms = (p.sigma - 1.0) * math.log(p.tau) + math.log(p.F_m)
    return p.L * (1.0 - p.mu) * log_terms / (p.mu_m**2 * core.n_zero(p) * core.cost_factor(p))


def d_delta_f_min_d_tau(params: ModelParams) -> float:
    """Derivative of the switching threshold in the international trade cost."""
    p = params
    return -(
        p.L * (p.sigma - 1.0) * (1.0 - p.mu) * (1.0 - p.mu_m)
        / (p.mu_m * p.tau * core.n_zero(p) * core.cost_factor(p))
    )


def d_delta_f_min_d_mu(params: ModelParams) -> float:
    """Derivative of the switching threshold in the host local cost share (sign not fixed)."""
    p = params
    c = core.cost_factor(p)
    log_ratio = (1.0 - p.mu_m) / p.mu_m * math.log(p.tau) - math.log(p.p_u_star)
    fm_term = math.log(p.F_m) / (p.mu_m * (p.sigma - 1.0))
    return p.L * (p.sigma - 1.0) / (core.n_zero(p) * c) * (1.0 / c + log_ratio + fm_term)


def mu_monotonicity_condition(params: ModelParams) -> bool:
    """Whether a <= e^(1/sigma) (alpha N_bar)^(1/(sigma-1))."""
    p = params
    bound = math.exp(1.0 / p.sigma + math.log(p.alpha * core.n_bar(p)) / (p.sigma - 1.0))
    return p.a <= bound
