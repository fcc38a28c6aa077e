"""Scenario runner: read a YAML scenario, run one analysis, write CSV/JSON artifacts.

Every output is computed in memory before anything touches the output
directory, so a failing run leaves no files behind. CSV files start with a
provenance comment naming the command and a hash of the scenario, followed by
a header row; floats carry 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import core, dynamics, ext, het, shocks, timing
from .core import DomainError, InvalidParameters, ModelParams, State

COMMANDS = ("loci", "equilibria", "phase", "basin", "shock", "statics", "het", "timing", "ext", "sweep")
THREADS_ENV = "LINKAGE_SIM_THREADS"
TEXT_KEYS = {"command", "kind", "parameter", "output"}
OPTION_KEYS = {"dt", "horizon", "resolution", "speed_ratio", "grid_points", "threads"}
BLOCKS = {
    "het": {"rho", "a_m_max", "gamma"},
    "shock": {"kind", "magnitude"},
    "recovery": {"delta", "T", "theta"},
    "risk": {"F_prime", "lambda", "theta"},
    "host_market": set(),
    "sourcing": {"mu_m_H", "mu_m_L", "F_H", "F_L", "F_prime"},
    "sweep": {"parameter", "start", "stop", "points"},
    "phase": {"initial"},
}
REQUIRED_BLOCKS = {"shock": ("shock",), "het": ("het",), "sweep": ("sweep",)}
BISECTION_ITERATIONS = 200


class ConfigError(ValueError):
    """The scenario file is malformed or incomplete."""


@dataclass
class Scenario:
    command: str
    model: ModelParams
    blocks: dict
    options: dict
    raw: dict = field(repr=False)

    @property
    def param_hash(self) -> str:
        # thread count never changes results, so it stays out of the hash
        options = {k: v for k, v in self.options.items() if k != "threads"}
        canon = json.dumps({"raw": self.raw, "options": options, "command": self.command}, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


# Config parsing


def _check_numbers(node, path: str = "") -> None:
    if isinstance(node, dict):
        for key, value in node.items():
            if not isinstance(key, str):
                raise ConfigError(f"non-string key {key!r} at {path or 'top level'}")
            sub = f"{path}.{key}" if path else key
            if key in TEXT_KEYS:
                if not isinstance(value, str):
                    raise ConfigError(f"{sub} must be text")
                continue
            _check_numbers(value, sub)
    elif isinstance(node, list):
        for i, value in enumerate(node):
            _check_numbers(value, f"{path}[{i}]")
    elif isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(f"{path} must be an integer or decimal number (got {node!r})")
    elif not math.isfinite(node):
        raise ConfigError(f"{path} must be finite")


def load_config(path: str | os.PathLike) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    _check_numbers(raw)
    return raw


def parse_scenario(raw: dict, command: str | None = None, overrides: dict | None = None) -> Scenario:
    known = {"command", "output", "model", "options"} | set(BLOCKS)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    cmd = command or raw.get("command")
    if cmd is None:
        raise ConfigError("no command given on the command line or in the config")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {COMMANDS}")
    if "model" not in raw or not isinstance(raw["model"], dict):
        raise ConfigError("config needs a 'model' mapping")
    try:
        model = ModelParams.from_dict(raw["model"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model block: {exc}") from exc
    blocks = {}
    for name, keys in BLOCKS.items():
        if name not in raw:
            continue
        block = raw[name] if raw[name] is not None else {}
        if not isinstance(block, dict):
            raise ConfigError(f"{name} block must be a mapping")
        extra = set(block) - keys
        if extra:
            raise ConfigError(f"{name} block has unknown key(s): {sorted(extra)}")
        blocks[name] = block
    for need in REQUIRED_BLOCKS.get(cmd, ()):
        if need not in blocks:
            raise ConfigError(f"command {cmd!r} needs a '{need}' block")
    if cmd == "timing" and not ({"recovery", "risk"} & set(blocks)):
        raise ConfigError("command 'timing' needs a 'recovery' or 'risk' block")
    if cmd == "ext" and not ({"host_market", "sourcing"} & set(blocks)):
        raise ConfigError("command 'ext' needs a 'host_market' or 'sourcing' block")
    options = dict(raw.get("options") or {})
    extra = set(options) - OPTION_KEYS
    if extra:
        raise ConfigError(f"options block has unknown key(s): {sorted(extra)}")
    for key, value in (overrides or {}).items():
        if value is not None:
            options[key] = value
    return Scenario(cmd, model, blocks, options, raw)


def _block_keys(block: dict, name: str, keys: tuple[str, ...]) -> list[float]:
    missing = [k for k in keys if k not in block]
    if missing:
        raise ConfigError(f"{name} block is missing {missing}")
    return [block[k] for k in keys]


# Emission


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def render_csv(header: list[str], rows, scenario: Scenario) -> str:
    buf = io.StringIO()
    buf.write(f"# command={scenario.command} param_hash={scenario.param_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def render_json(payload: dict, scenario: Scenario) -> str:
    body = {"provenance": {"command": scenario.command, "param_hash": scenario.param_hash}}
    body.update(_jsonable(payload))
    return json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n"


# Sweep


def sweep_rows(params: ModelParams, parameter: str, values) -> list[tuple]:
    """(value, regime, F_a, F_b, delta_F_min) per value; invalid parameter sets get regime 'invalid'."""
    rows = []
    for value in values:
        try:
            p = params.with_(**{parameter: float(value)})
            core.require_valid(p)
            rows.append((float(value), dynamics.regime(p), core.f_a(p), core.f_b(p), shocks.delta_f_min(p)))
        except (InvalidParameters, DomainError, ValueError, OverflowError):
            rows.append((float(value), "invalid", math.nan, math.nan, math.nan))
    return rows


def _regime_or_none(params: ModelParams, parameter: str, value: float) -> str | None:
    try:
        p = params.with_(**{parameter: value})
        core.require_valid(p)
        return dynamics.regime(p)
    except (InvalidParameters, DomainError, ValueError, OverflowError):
        return None


def regime_boundaries(params: ModelParams, parameter: str, rows: list[tuple]) -> list[dict]:
    """Bisect every change of regime between adjacent valid sweep rows."""
    out = []
    for (v0, r0, *_), (v1, r1, *_) in zip(rows, rows[1:]):
        if r0 == r1 or "invalid" in (r0, r1):
            continue
        lo, hi = v0, v1
        for _ in range(BISECTION_ITERATIONS):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            r = _regime_or_none(params, parameter, mid)
            if r == r0:
                lo = mid
            elif r == r1:
                hi = mid
            else:
                break
        out.append({"from": r0, "to": r1, "lower": lo, "upper": hi, "value": 0.5 * (lo + hi)})
    return out


# Commands


def _threads(scenario: Scenario) -> int:
    value = scenario.options.get("threads")
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer (got {env!r})") from exc
    if int(value) != value or value < 1:
        raise ConfigError(f"threads must be a positive integer (got {value!r})")
    return int(value)


def _grid_points(scenario: Scenario, default: int = 201) -> int:
    n = scenario.options.get("grid_points", default)
    if int(n) != n or n < 2:
        raise ConfigError(f"grid_points must be an integer of at least 2 (got {n!r})")
    return int(n)


def _dt(scenario: Scenario, base: ModelParams) -> float:
    return float(scenario.options.get("dt", dynamics.default_dt(base)))


def _horizon(scenario: Scenario) -> float:
    return float(scenario.options.get("horizon", 1e4))


def _speed(scenario: Scenario) -> float:
    return float(scenario.options.get("speed_ratio", 1.0))


def _het_params(scenario: Scenario) -> het.HetParams:
    rho, a_max, gamma = _block_keys(scenario.blocks["het"], "het", ("rho", "a_m_max", "gamma"))
    return het.HetParams(scenario.model, float(rho), float(a_max), float(gamma))


def _cmd_loci(s: Scenario) -> dict[str, str]:
    p = s.model
    core.require_valid(p)
    nb = core.n_bar(p)
    n = _grid_points(s)
    rows = []
    for N in np.linspace(nb / n, nb, n):
        rows.append((N, core.pi_zero_locus(N, p), core.delta_r(N, p)))
    return {"loci.csv": render_csv(["N", "pi_zero_N_m", "delta_r"], rows, s)}


def _cmd_equilibria(s: Scenario) -> dict[str, str]:
    p = s.model
    eqs = dynamics.find_equilibria(p)
    payload = {
        "regime": dynamics.regime(p),
        "constants": asdict(core.derived_constants(p)),
        "equilibria": [e.to_dict() for e in eqs],
    }
    return {"equilibria.json": render_json(payload, s)}


def _cmd_phase(s: Scenario) -> dict[str, str]:
    p = s.model
    core.require_valid(p)
    nb, kf = core.n_bar(p), p.K_f
    initial = s.blocks.get("phase", {}).get("initial")
    if initial is None:
        ticks = (np.arange(5) + 0.5) / 5
        initial = [[x * nb, y * kf] for y in ticks for x in ticks]
    if not isinstance(initial, list) or not all(isinstance(q, list) and len(q) == 2 for q in initial):
        raise ConfigError("phase.initial must be a list of [N, N_m] pairs")
    rows, terminals = [], []
    for k, (N0, M0) in enumerate(initial):
        tr = dynamics.integrate(State(float(N0), float(M0)), p, _dt(s, p), _horizon(s), speed_ratio=_speed(s))
        terminals.append({"trajectory": k, "initial": [N0, M0], "terminal": tr.terminal})
        rows.extend((k, t, N, M) for t, N, M in zip(tr.t, tr.N, tr.N_m))
    return {
        "trajectories.csv": render_csv(["trajectory", "t", "N", "N_m"], rows, s),
        "phase.json": render_json({"trajectories": terminals}, s),
    }


def _cmd_basin(s: Scenario) -> dict[str, str]:
    p = s.model
    core.require_valid(p)
    res = int(s.options.get("resolution", 200))
    bm = dynamics.basin_map(p, res, _dt(s, p), _horizon(s), speed_ratio=_speed(s), threads=_threads(s))
    return {"basin.csv": render_csv(["N", "N_m", "label"], bm.rows(), s)}


def _cmd_shock(s: Scenario) -> dict[str, str]:
    kind, magnitude = _block_keys(s.blocks["shock"], "shock", ("kind", "magnitude"))
    spec = shocks.ShockSpec(kind, float(magnitude))
    new, verdict = shocks.apply_shock(s.model, spec)
    tr = dynamics.integrate(verdict.pre.location, new, _dt(s, new), _horizon(s), speed_ratio=_speed(s))
    payload = verdict.to_dict()
    payload["integrated_terminal"] = tr.terminal
    payload["integrated_final"] = {"N": tr.final.N, "N_m": tr.final.N_m, "t": tr.final.t}
    return {
        "shock.json": render_json(payload, s),
        "shock_trajectory.csv": render_csv(["t", "N", "N_m"], zip(tr.t, tr.N, tr.N_m), s),
    }


def _cmd_statics(s: Scenario) -> dict[str, str]:
    p = s.model
    core.require_valid(p)
    n0 = core.n_zero(p)
    payload = {
        "delta_f_min": shocks.delta_f_min(p),
        "d_delta_f_min_d_mu_m": shocks.d_delta_f_min_d_mu_m(p),
        "d_delta_f_min_d_tau": shocks.d_delta_f_min_d_tau(p),
        "d_delta_f_min_d_mu": shocks.d_delta_f_min_d_mu(p),
        "mu_monotonicity_condition": shocks.mu_monotonicity_condition(p),
        "price_index_at_N_0": core.price_index(n0, p),
        "price_bound": p.tau * p.p_u_star,
        "thresholds": {kind: shocks.shock_threshold(p, kind) for kind in shocks.KINDS},
    }
    return {"statics.json": render_json(payload, s)}


def _cmd_het(s: Scenario) -> dict[str, str]:
    h = _het_params(s)
    loci = het.het_thresholds(h)
    nb = core.n_bar(h.base)
    rows = []
    n = _grid_points(s)
    for N in np.linspace(nb / n, nb, n):
        try:
            pi0 = het.pi_zero_locus_het(N, h)
        except DomainError:
            pi0 = math.nan
        rows.append((N, het.cutoff_productivity(N, h), het.cutoff_locus(N, h), pi0))
    payload = {
        "loci": loci.to_dict(),
        "equilibria": [e.to_dict() for e in het.het_equilibria(h)],
        "shift_sensitivity": asdict(het.shift_sensitivity(h)),
        "rho_tilde": h.rho_tilde,
    }
    return {
        "het_loci.csv": render_csv(["N", "a_m_R", "cutoff_N_m", "pi_zero_N_m"], rows, s),
        "het.json": render_json(payload, s),
    }


def _cmd_timing(s: Scenario) -> dict[str, str]:
    payload = {}
    if "recovery" in s.blocks:
        delta, T, theta = _block_keys(s.blocks["recovery"], "recovery", ("delta", "T", "theta"))
        prob = timing.RecoveryProblem(s.model, float(delta), float(T), float(theta))
        payload["reentry"] = timing.reentry_timing(prob).to_dict()
    if "risk" in s.blocks:
        blk = s.blocks["risk"]
        f_prime, lam = _block_keys(blk, "risk", ("F_prime", "lambda"))
        prob = timing.RiskProblem(s.model, float(f_prime), float(lam), float(blk.get("theta", 0.0)))
        payload["exit"] = timing.exit_timing_under_risk(prob).to_dict()
    return {"timing.json": render_json(payload, s)}


def _cmd_ext(s: Scenario) -> dict[str, str]:
    files = {}
    payload = {}
    if "host_market" in s.blocks:
        hp = ext.HostMarketParams(s.model)
        outcome = ext.host_market_equilibria(hp)
        payload["host_market"] = outcome.to_dict()
        nb = core.n_bar(s.model)
        n0 = core.n_zero(s.model)
        rows = []
        n = _grid_points(s)
        for N in np.linspace(nb / n, nb, n):
            arb = ext.host_arbitrage_locus(N, hp) if N < n0 else math.nan
            rows.append((N, ext.host_pi_zero_locus(N, hp), arb))
        files["host_market_loci.csv"] = render_csv(["N", "pi_zero_N_m", "arbitrage_N_m"], rows, s)
    if "sourcing" in s.blocks:
        blk = s.blocks["sourcing"]
        mh, ml, fh, fl = _block_keys(blk, "sourcing", ("mu_m_H", "mu_m_L", "F_H", "F_L"))
        sp = ext.SourcingParams(s.model, float(mh), float(ml), float(fh), float(fl))
        payload["sourcing"] = {"thresholds": ext.sourcing_thresholds(sp).to_dict()}
        left, right = ext.sourcing_locus_jump(sp)
        payload["sourcing"]["locus_jump_at_N_1"] = {"left": left, "right": right}
        if "F_prime" in blk:
            payload["sourcing"]["shock"] = ext.sourcing_shock(sp, float(blk["F_prime"])).to_dict()
    files["ext.json"] = render_json(payload, s)
    return files


def _cmd_sweep(s: Scenario) -> dict[str, str]:
    blk = s.blocks["sweep"]
    parameter, start, stop, points = _block_keys(blk, "sweep", ("parameter", "start", "stop", "points"))
    if parameter not in {f for f in s.model.to_dict()}:
        raise ConfigError(f"cannot sweep unknown parameter {parameter!r}")
    if int(points) != points or points < 2 or not start < stop:
        raise ConfigError("sweep range is empty: need start < stop and at least 2 points")
    values = np.linspace(float(start), float(stop), int(points))
    rows = sweep_rows(s.model, parameter, values)
    bounds = regime_boundaries(s.model, parameter, rows)
    return {
        "sweep.csv": render_csv([parameter, "regime", "F_a", "F_b", "delta_F_min"], rows, s),
        "sweep_boundaries.json": render_json({"parameter": parameter, "boundaries": bounds}, s),
    }


HANDLERS = {
    "loci": _cmd_loci,
    "equilibria": _cmd_equilibria,
    "phase": _cmd_phase,
    "basin": _cmd_basin,
    "shock": _cmd_shock,
    "statics": _cmd_statics,
    "het": _cmd_het,
    "timing": _cmd_timing,
    "ext": _cmd_ext,
    "sweep": _cmd_sweep,
}


def run(scenario: Scenario) -> dict[str, str]:
    """Compute every output of ``scenario`` as {filename: text}."""
    return HANDLERS[scenario.command](scenario)


def _error_report(exc: Exception) -> str:
    report = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, InvalidParameters):
        report["violations"] = [{"name": v.name, "detail": v.detail} for v in exc.violations]
    return json.dumps(report, sort_keys=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linkage-sim", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS + ("run",), help="analysis to run; 'run' takes it from the config")
    parser.add_argument("--config", required=True, help="YAML scenario file")
    parser.add_argument("--out", help="output directory (default: config 'output' or ./out)")
    parser.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV})")
    parser.add_argument("--dt", type=float, help="Euler step size")
    parser.add_argument("--horizon", type=float, help="integration horizon in model time")
    parser.add_argument("--resolution", type=int, help="basin grid resolution per axis")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        overrides = {"threads": args.threads, "dt": args.dt, "horizon": args.horizon, "resolution": args.resolution}
        command = None if args.command == "run" else args.command
        scenario = parse_scenario(raw, command, overrides)
        outputs = run(scenario)
    except (ConfigError, InvalidParameters, DomainError, ValueError, dynamics.IntegrationError) as exc:
        print(_error_report(exc), file=sys.stderr)
        return 2
    out_dir = Path(args.out or raw.get("output") or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (out_dir / name).write_text(text)
    print(json.dumps({"command": scenario.command, "outputs": sorted(outputs)}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
