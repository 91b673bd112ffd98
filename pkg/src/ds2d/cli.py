"""Command-line front end.

Subcommands: dj, groundstate, curve, evolve, multisoliton, verify. Each
reads an optional key=value config file, applies flag overrides, runs one
pipeline, and writes its artifacts (field files, self-describing CSVs, a
plot script, and a MANIFEST) under the output directory. Exit status 0
on success, 1 on validation errors, 2 on numerical failures; failures
also emit one machine-readable JSON record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io as dio
from .errors import DS2DError, NumericalFailure, ValidationFailure
from .evolution import EvolutionState, evolve
from .fields import ComplexField
from .grid import Grid2D
from .groundstate import (
    SolverSettings,
    gaussian_seed,
    minimize_J,
    solve_fixed_omega,
    solve_mass_constrained,
    verify_ground_state,
)
from .multisoliton import MultiSolitonConfig, SolitonParams, backward_construct
from .spectral import functionals, h1_distance
from .stability import build_curve

_GRID_KEYS = {"nx": int, "ny": int, "lx": float, "ly": float, "p": float, "seed": int}
_GRID_DEFAULTS = {"nx": 256, "ny": 256, "lx": 40.0, "ly": 40.0, "p": 2.0, "seed": 0}


def _settings(cfg) -> SolverSettings:
    return SolverSettings(grid=Grid2D(cfg.nx, cfg.ny, cfg.lx, cfg.ly))


def _parse_solitons(raw: str):
    """omega:x:y:vx:vy[:gamma] groups separated by semicolons."""
    out = []
    for part in raw.split(";"):
        bits = [float(b) for b in part.split(":")]
        if len(bits) == 5:
            bits.append(0.0)
        if len(bits) != 6:
            raise ValueError(f"soliton spec needs 5 or 6 fields, got {part!r}")
        om, x, y, vx, vy, gamma = bits
        out.append(SolitonParams(om, (x, y), (vx, vy), gamma))
    return tuple(out)


def _run_dj(cfg, run: dio.RunDirectory) -> int:
    settings = _settings(cfg)
    ustar, dj = minimize_J(settings)
    rep = functionals(ustar, cfg.p)
    run.write_field("ratio_minimizer.ds2dfld", ustar)
    run.write_csv(
        "dj.csv",
        ["nx", "lx", "dj", "mass", "gradient_term", "quartic"],
        [(cfg.nx, cfg.lx, dj, rep.mass, rep.gradient_term, rep.quartic)],
        cfg.resolved(),
        cfg.seed,
    )
    run.write_text("plots.py", dio.plot_script_for(["dj.csv"]))
    print(f"dj = {dj:.12g}")
    return 0


def _run_groundstate(cfg, run: dio.RunDirectory) -> int:
    settings = _settings(cfg)
    _, dj = minimize_J(settings)
    if cfg.omega > 0.0:
        gs = solve_fixed_omega(cfg.omega, cfg.p, settings, dj)
    elif cfg.mass > 0.0:
        gs = solve_mass_constrained(cfg.mass, cfg.p, settings, dj)
    else:
        raise ValidationFailure("one of omega or mass must be positive")
    ver = verify_ground_state(gs)
    run.write_field("groundstate.ds2dfld", gs.Q)
    run.write_csv(
        "verification.csv",
        [
            "omega", "mass", "energy", "residual_l2", "pohozaev_residual",
            "nehari_residual", "decay_rate", "ej_decay_slope_1",
            "ej_decay_slope_2", "boundary_ok", "positivity_ok",
        ],
        [(
            gs.omega, gs.mass, gs.report.energy, gs.residual_l2,
            ver.pohozaev_residual, ver.nehari_residual, gs.decay_rate,
            ver.ej_decay_slopes[0], ver.ej_decay_slopes[1],
            int(ver.boundary_ok), int(ver.positivity_ok),
        )],
        cfg.resolved(),
        cfg.seed,
    )
    run.write_text("plots.py", dio.plot_script_for(["verification.csv"]))
    print(f"omega = {gs.omega:.8g}, mass = {gs.mass:.8g}, residual = {gs.residual_l2:.3g}")
    return 0


def _run_curve(cfg, run: dio.RunDirectory) -> int:
    settings = _settings(cfg)
    omegas = np.linspace(cfg.omega_min, cfg.omega_max, cfg.steps)
    curve = build_curve(cfg.p, omegas, settings)
    rows = [
        (s.omega, s.mass, s.energy, s.dE_domega, s.Dsecond, s.lambda_minus,
         s.residual_l2, int(s.valid))
        for s in curve.samples
    ]
    run.write_csv(
        "curve.csv",
        ["omega", "mass", "energy", "dE_domega", "Dsecond", "lambda_minus",
         "residual_l2", "valid"],
        rows,
        cfg.resolved(),
        cfg.seed,
    )
    run.write_csv(
        "omega_window.csv",
        ["omegaJ_estimate", "bracket_lo", "bracket_hi", "is_lower_bound", "dJ"],
        [(
            curve.omegaJ_estimate,
            curve.omegaJ_bracket[0] if curve.omegaJ_bracket else "",
            curve.omegaJ_bracket[1] if curve.omegaJ_bracket else "",
            int(curve.omegaJ_is_lower_bound),
            curve.dJ,
        )],
        cfg.resolved(),
        cfg.seed,
    )
    run.write_text("plots.py", dio.plot_script_for(["curve.csv"]))
    print(
        f"omegaJ estimate {curve.omegaJ_estimate:.6g} "
        f"({'lower bound' if curve.omegaJ_is_lower_bound else 'bracketed'})"
    )
    return 0


def _run_evolve(cfg, run: dio.RunDirectory) -> int:
    settings = _settings(cfg)
    grid = settings.grid
    if cfg.initial:
        field = dio.read_field(cfg.initial)
        grid = field.grid
    elif cfg.omega > 0.0:
        _, dj = minimize_J(settings)
        field = solve_fixed_omega(cfg.omega, cfg.p, settings, dj).Q
    else:
        field = ComplexField(grid, cfg.amplitude * gaussian_seed(grid, cfg.width).astype(complex))
    state = EvolutionState(0.0, field, cfg.p)
    snap_every = cfg.snapshot_every if cfg.snapshot_every > 0 else None
    final, log, snaps = evolve(
        state, cfg.duration, cfg.dt, monitor_every=cfg.monitor_every,
        snapshot_every=snap_every,
    )
    run.write_csv(
        "conservation.csv",
        ["t", "mass", "energy", "px", "py", "h1_norm"],
        list(log.rows()),
        cfg.resolved(),
        cfg.seed,
    )
    for i, (t, fld) in enumerate(snaps):
        run.write_field(f"snapshot_{i:04d}.ds2dfld", fld)
    run.write_field("final.ds2dfld", final.field)
    run.write_text("plots.py", dio.plot_script_for(["conservation.csv"]))
    print(
        f"evolved to t = {final.t:.6g}: mass drift {log.mass_drift:.3g}, "
        f"energy drift {log.energy_drift:.3g}"
    )
    return 0


def _run_multisoliton(cfg, run: dio.RunDirectory) -> int:
    settings = _settings(cfg)
    mscfg = MultiSolitonConfig(
        solitons=_parse_solitons(cfg.solitons),
        tn=cfg.tn,
        dt=cfg.dt,
        p=cfg.p,
        l_cutoff=cfg.l_cutoff if cfg.l_cutoff > 0 else None,
    )
    report, prepared, snaps = backward_construct(
        mscfg, settings, monitor_points=cfg.monitor_points,
        snapshot_times=[0.0, mscfg.tn],
    )
    rows = []
    for r in report.rows:
        row = [r.t, r.h1_error, r.mass, r.energy]
        row += [float(v) for v in r.local_mass]
        row += [float(v) for v in r.local_momentum[:, 0]]
        row += [r.orthogonality_max]
        if r.fitted is not None:
            row += [float(v) for v in r.fitted[:, 0]]
        else:
            row += [float("nan")] * prepared.k
        rows.append(tuple(row))
    k = prepared.k
    header = (
        ["t", "h1_error", "mass", "energy"]
        + [f"local_mass_{i+1}" for i in range(k)]
        + [f"local_momentum1_{i+1}" for i in range(k)]
        + ["orthogonality_max"]
        + [f"omega_fit_{i+1}" for i in range(k)]
    )
    run.write_csv("tube.csv", header, rows, cfg.resolved(), cfg.seed)
    run.write_csv(
        "conservation.csv",
        ["t", "mass", "energy", "px", "py", "h1_norm"],
        list(report.conservation.rows()),
        cfg.resolved(),
        cfg.seed,
    )
    for t, fld in snaps:
        run.write_field(f"state_t{t:08.3f}.ds2dfld".replace(" ", "0"), fld)
    run.write_text("plots.py", dio.plot_script_for(["tube.csv", "conservation.csv"]))
    print(
        f"theta_fit = {report.theta_fit:.6g} (rate scale {report.theta0:.6g}), "
        f"h1 error at t=0: {report.rows[0].h1_error:.4g}"
    )
    return 0


def _run_verify(cfg, run: dio.RunDirectory) -> int:
    from .verifysuite import run_suite

    results = run_suite(nx=cfg.nx, lx=cfg.lx, p=cfg.p, seed=cfg.seed)
    rows = [(name, int(ok), value) for name, ok, value in results]
    run.write_csv("verify.csv", ["check", "passed", "value"], rows, cfg.resolved(), cfg.seed)
    all_ok = True
    for name, ok, value in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({value:.3g})")
        all_ok &= ok
    return 0 if all_ok else 2


_SUBCOMMANDS = {
    "dj": (_run_dj, {}),
    "groundstate": (_run_groundstate, {"omega": float, "mass": float}),
    "curve": (_run_curve, {"omega_min": float, "omega_max": float, "steps": int}),
    "evolve": (_run_evolve, {"omega": float, "duration": float, "dt": float,
                             "monitor_every": int, "snapshot_every": int,
                             "initial": str, "amplitude": float, "width": float}),
    "multisoliton": (_run_multisoliton, {"solitons": str, "tn": float, "dt": float,
                                         "monitor_points": int, "l_cutoff": float}),
    "verify": (_run_verify, {}),
}

_DEFAULTS = {
    "dj": {},
    "groundstate": {"omega": 0.0, "mass": 0.0},
    "curve": {"omega_min": 0.05, "omega_max": 0.8, "steps": 8},
    "evolve": {"omega": 0.0, "duration": 1.0, "dt": 1e-3, "monitor_every": 100,
               "snapshot_every": 0, "initial": "", "amplitude": 0.5, "width": 2.0},
    "multisoliton": {"tn": 30.0, "dt": 2e-3, "monitor_points": 30, "l_cutoff": 0.0},
    "verify": {},
}


def cli_dispatch(argv) -> int:
    parser = argparse.ArgumentParser(prog="ds2d", description=__doc__, exit_on_error=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, extra) in _SUBCOMMANDS.items():
        sp = sub.add_parser(name, exit_on_error=False)
        sp.add_argument("--config", default=None, help="key = value file")
        sp.add_argument("--out", default=None, help="output directory")
        schema = {**_GRID_KEYS, **extra}
        for key, conv in schema.items():
            sp.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    try:
        args = parser.parse_args(argv)
    except (argparse.ArgumentError, SystemExit) as exc:
        code = exc.code if isinstance(exc, SystemExit) else None
        if code in (0,):
            return 0
        _emit_error("UsageError", str(exc))
        return 1

    handler, extra = _SUBCOMMANDS[args.command]
    schema = {**_GRID_KEYS, **extra}
    defaults = {**_GRID_DEFAULTS, **_DEFAULTS[args.command]}
    overrides = {
        key: getattr(args, key)
        for key in schema
        if getattr(args, key, None) is not None
    }
    try:
        cfg = dio.parse_config(schema, args.config, overrides, defaults)
        run = dio.RunDirectory(args.out)
        return handler(cfg, run)
    except ValidationFailure as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1
    except NumericalFailure as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 2
    except DS2DError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return 1


def _emit_error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
