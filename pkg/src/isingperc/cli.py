"""Command-line frontend: config handling, seeds, CSV/JSON outputs.

Configuration is a flat key=value text file; any trailing command-line
arguments of the form key=value override file values.  Every run echoes an
"effective config" JSON with all resolved values, and every output file
carries the seed.  The JSON header isolates the timestamp in its own field
so that repeated runs are byte-identical apart from that field.

Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime
import json
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import activation as act
from . import amp as amp_mod
from . import enumeration as enum_mod
from . import moments as mom
from . import rs as rs_mod
from . import sevol
from .errors import NumericalError
from .quadrature import DEFAULT_ORDER, gauss_hermite

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


@dataclass(frozen=True)
class RunConfig:
    """All run parameters with documented defaults."""

    kind: str = "halfspace"          # activation kind
    params: str = "0.0"              # comma-separated activation parameters
    eta: float = 0.0                 # smoothing width
    table_path: str = ""             # value table for kind=tabulated
    alpha: float = 0.01              # constraint load M/N
    order: int = DEFAULT_ORDER       # quadrature order
    q_max: float = rs_mod.Q_MAX_DEFAULT  # fixed-point scan upper bound
    N: int = 4000                    # system size
    t: int = 6                       # AMP / state-evolution steps
    t_max: int = 200                 # state-evolution step cap
    seed: int = 0                    # master seed
    n_samples: int = 100000          # Monte Carlo sample count
    eps_bar: float = -1.0            # Psi reweighting; -1 -> e^5 c1 sqrt(alpha)
    l_cap: float = -1.0              # zeta cap; -1 -> 5 c1^2
    mode: str = "empirical"          # constants mode: empirical | proof
    threads: int = 1                 # worker cap for parallel sections
    n_cap: int = enum_mod.N_CAP_DEFAULT  # enumeration size cap
    alpha_list: str = ""             # sweep grid, comma-separated
    eta_list: str = ""               # smoothing sweep grid
    N_list: str = "12,16,20"         # experiment sizes
    samples_per_N: int = 200         # experiment disorder samples
    experiment: int = 0              # enumerate: 1 -> free-energy experiment
    output_dir: str = "."            # where CSV/JSON files are written


_FIELD_TYPES = {f: t for f, t in RunConfig.__annotations__.items()}


def parse_config_text(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {ln}: expected key=value, "
                             f"got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def build_config(config_path: Optional[str],
                 overrides: List[str]) -> RunConfig:
    values: Dict[str, str] = {}
    if config_path:
        values.update(parse_config_text(Path(config_path).read_text()))
    for ov in overrides:
        if "=" not in ov:
            raise ValueError(f"override must be key=value, got {ov!r}")
        key, val = ov.split("=", 1)
        values[key.strip()] = val.strip()
    kwargs = {}
    for key, val in values.items():
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        ftype = _FIELD_TYPES[key]
        if ftype == "int":
            kwargs[key] = int(val)
        elif ftype == "float":
            kwargs[key] = float(val)
        else:
            kwargs[key] = val
    return RunConfig(**kwargs)


def _parse_floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _parse_ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def make_spec(cfg: RunConfig) -> act.ActivationSpec:
    params = _parse_floats(cfg.params)
    kind = cfg.kind
    if kind == "halfspace":
        spec = act.halfspace(*params)
    elif kind == "band":
        spec = act.band(*params)
    elif kind == "gauss_bump":
        spec = act.gauss_bump(*params)
    elif kind == "clipped_exp":
        spec = act.clipped_exp(*params)
    elif kind == "tabulated":
        if not cfg.table_path:
            raise ValueError("kind=tabulated requires table_path")
        spec = act.tabulated_from_file(cfg.table_path)
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    if cfg.eta > 0.0:
        spec = act.smooth(spec, cfg.eta)
    return spec


def _header(cfg: RunConfig, command: str, extra: Optional[dict] = None
            ) -> dict:
    head = {
        "command": command,
        "effective_config": asdict(cfg),
        "seed": cfg.seed,
        "sampler": amp_mod.SAMPLER_ID,
        "timestamp": datetime.datetime.now(
            datetime.timezone.utc).isoformat(),
    }
    if extra:
        head.update(extra)
    return head


def _write(cfg: RunConfig, name: str, text: str) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _echo_header(cfg: RunConfig, command: str,
                 extra: Optional[dict] = None) -> None:
    head = _header(cfg, command, extra)
    _write(cfg, f"{command}_header.json", json.dumps(head, indent=2) + "\n")
    print(json.dumps(head["effective_config"]))


def _resolved_eps_bar(cfg: RunConfig, spec, rule) -> float:
    if cfg.eps_bar >= 0.0:
        return cfg.eps_bar
    return mom.default_eps_bar(spec, cfg.alpha, rule=rule)


def _resolved_l_cap(cfg: RunConfig, spec, rule) -> float:
    if cfg.l_cap >= 0.0:
        return cfg.l_cap
    c1 = act.estimate_constants(spec, rule=rule).c1_empirical
    return 5.0 * c1 * c1


def cmd_rs(cfg: RunConfig) -> int:
    spec = make_spec(cfg)
    rule = gauss_hermite(cfg.order)
    sol = rs_mod.solve_fixed_point(spec, cfg.alpha, q_max=cfg.q_max,
                                   rule=rule)
    lines = [rs_mod.RS_CSV_COLUMNS, rs_mod.solution_csv_row(sol)]
    _write(cfg, "rs.csv", "\n".join(lines) + "\n")
    _echo_header(cfg, "rs", {"branch": sol.branch})
    print("\n".join(lines))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    spec = make_spec(cfg)
    rule = gauss_hermite(cfg.order)
    if cfg.eta_list:
        rows = rs_mod.rs_eta_sweep(spec, cfg.alpha,
                                   _parse_floats(cfg.eta_list),
                                   q_max=cfg.q_max, rule=rule)
        f = "{:.17g}".format
        lines = ["eta,q,psi,rs,error"]
        for r in rows:
            lines.append(",".join([f(r.eta), f(r.q), f(r.psi),
                                   f(r.rs_value), r.error]))
    else:
        alphas = _parse_floats(cfg.alpha_list) or [cfg.alpha]
        lines = [rs_mod.RS_CSV_COLUMNS]
        for a in alphas:
            sol = rs_mod.solve_fixed_point(spec, a, q_max=cfg.q_max,
                                           rule=rule)
            lines.append(rs_mod.solution_csv_row(sol))
    _write(cfg, "sweep.csv", "\n".join(lines) + "\n")
    _echo_header(cfg, "sweep")
    print("\n".join(lines))
    return EXIT_OK


def cmd_se(cfg: RunConfig) -> int:
    spec = make_spec(cfg)
    rule = gauss_hermite(cfg.order)
    sol = rs_mod.solve_fixed_point(spec, cfg.alpha, q_max=cfg.q_max,
                                   rule=rule)
    trace = sevol.se_run(spec, sol, t_max=cfg.t_max, rule=rule)
    lines = [sevol.SE_CSV_COLUMNS] + sevol.trace_csv_rows(trace)
    _write(cfg, "se.csv", "\n".join(lines) + "\n")
    _echo_header(cfg, "se", {"steps": trace.t})
    print("\n".join(lines[:11]))
    return EXIT_OK


def _run_amp(cfg: RunConfig):
    spec = make_spec(cfg)
    rule = gauss_hermite(cfg.order)
    sol = rs_mod.solve_fixed_point(spec, cfg.alpha, q_max=cfg.q_max,
                                   rule=rule)
    trace = amp_mod.amp_run(spec, sol, cfg.N, t_max=cfg.t, seed=cfg.seed,
                            rule=rule)
    return spec, rule, sol, trace


def cmd_amp(cfg: RunConfig) -> int:
    _, _, sol, trace = _run_amp(cfg)
    report = amp_mod.se_check(trace)
    lines = ["quantity,predicted,empirical,abs_dev"] \
        + amp_mod.check_csv_rows(report)
    _write(cfg, "amp_se_check.csv", "\n".join(lines) + "\n")
    _echo_header(cfg, "amp", {"N": trace.N, "M": trace.M, "t": trace.t})
    worst = max(r.abs_dev for r in report)
    print(f"se_check rows={len(report)} worst_abs_dev={worst:.17g}")
    return EXIT_OK


def cmd_psi(cfg: RunConfig) -> int:
    spec, rule, sol, trace = _run_amp(cfg)
    eps_bar = _resolved_eps_bar(cfg, spec, rule)
    pi_star, varpi_star = mom.star_point(trace)
    value = mom.psi_functional(pi_star, varpi_star, trace, sol, eps_bar,
                               rule=rule)
    gp, gv = mom.psi_gradient(pi_star, varpi_star, trace, sol, eps_bar,
                              rule=rule)
    hess = mom.psi_hessian(pi_star, varpi_star, trace, sol, eps_bar,
                           rule=rule)
    f = "{:.17g}".format
    lines = ["quantity,value",
             f"psi_at_star,{f(value)}",
             f"grad_pi_inf_norm,{f(float(np.abs(gp).max()))}",
             f"grad_varpi_inf_norm,{f(float(np.abs(gv).max()))}",
             f"hessian_spectral_norm,"
             f"{f(float(np.linalg.norm(hess, 2)))}",
             f"eps_bar_used,{f(eps_bar)}"]
    _write(cfg, "psi.csv", "\n".join(lines) + "\n")
    _echo_header(cfg, "psi", {"eps_bar_used": eps_bar})
    print("\n".join(lines))
    return EXIT_OK


def cmd_pair(cfg: RunConfig) -> int:
    spec, rule, sol, trace = _run_amp(cfg)
    l_cap = _resolved_l_cap(cfg, spec, rule)
    zeta = mom.admissible_zeta(trace, l_cap, seed=cfg.seed)
    d0 = mom.a2_derivative0(zeta, trace, sol, l_cap)
    f = "{:.17g}".format
    lines = ["lambda,a2"]
    for lam in np.linspace(-0.8, 0.8, 17):
        val = mom.a2_functional(float(lam), zeta, trace, sol, l_cap,
                                rule=rule)
        lines.append(f"{f(float(lam))},{f(val)}")
    _write(cfg, "pair.csv", "\n".join(lines) + "\n")
    _echo_header(cfg, "pair", {"a2_derivative0": d0, "l_cap_used": l_cap})
    print(f"a2_derivative0={f(d0)}")
    return EXIT_OK


def cmd_enumerate(cfg: RunConfig) -> int:
    spec = make_spec(cfg)
    if cfg.experiment:
        rows = enum_mod.free_energy_experiment(
            spec, cfg.alpha, _parse_ints(cfg.N_list), cfg.samples_per_N,
            seed=cfg.seed, n_cap=cfg.n_cap, threads=cfg.threads,
            q_max=cfg.q_max)
        lines = [enum_mod.EXPERIMENT_CSV_COLUMNS] \
            + enum_mod.experiment_csv_rows(rows)
        _write(cfg, "experiment.csv", "\n".join(lines) + "\n")
        _echo_header(cfg, "enumerate")
        print("\n".join(lines))
        return EXIT_OK
    M = max(1, int(round(cfg.alpha * cfg.N)))
    rng = np.random.default_rng(cfg.seed)
    G = rng.standard_normal((M, cfg.N))
    res = enum_mod.enumerate_logZ(spec, G, n_cap=cfg.n_cap,
                                  threads=cfg.threads, seed=cfg.seed)
    record = {
        "N": res.N, "M": res.M, "seed": cfg.seed,
        "activation": spec.describe(),
        "logZ": None if res.zero_Z else res.logZ,
        "logZ_truncated": res.logZ_truncated,
        "count_feasible": res.count_feasible,
        "per_config_max_weight":
            None if not math.isfinite(res.per_config_max_weight)
            else res.per_config_max_weight,
    }
    _write(cfg, "enumerate.json", json.dumps(record, indent=2) + "\n")
    _echo_header(cfg, "enumerate")
    print(json.dumps(record))
    return EXIT_OK


def cmd_constants(cfg: RunConfig) -> int:
    spec = make_spec(cfg)
    rule = gauss_hermite(cfg.order)
    rep = act.estimate_constants(spec, mode=cfg.mode, rule=rule)
    record = asdict(rep)
    _write(cfg, "constants.json", json.dumps(record, indent=2) + "\n")
    _echo_header(cfg, "constants")
    print(json.dumps(record))
    return EXIT_OK


_COMMANDS = {
    "rs": cmd_rs, "se": cmd_se, "amp": cmd_amp, "psi": cmd_psi,
    "pair": cmd_pair, "enumerate": cmd_enumerate,
    "constants": cmd_constants, "sweep": cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="isingperc",
        description="Replica-symmetric analysis of the generalized Ising "
                    "perceptron: fixed points, state evolution, AMP, "
                    "variational functionals, exact enumeration.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None,
                        help="flat key=value config file")
    parser.add_argument("--output-dir", default=None,
                        help="directory for CSV/JSON outputs")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("overrides", nargs="*",
                        help="key=value overrides applied after the config")
    try:
        args = parser.parse_intermixed_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = build_config(args.config, list(args.overrides))
        if args.output_dir is not None:
            cfg = replace(cfg, output_dir=args.output_dir)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.threads is not None:
            cfg = replace(cfg, threads=args.threads)
    except (ValueError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](cfg)
    except (ValueError, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ArithmeticError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
