"""Command-line entry point.

Subcommands: simulate, reduce, audit, find-central, find-balanced, kepler,
homographic, relequil, hiphop, shape-sphere.  Inputs are JSON scenarios
(FORMATS.md); outputs are CSV/JSON files in --out.  Exit codes: 0 success,
2 validation error, 3 numerical failure; failures emit one JSON object on
stderr.  Runs are deterministic: stochastic searches require --seed and all
floats are written with fixed formatting.
"""

import argparse
import json
import logging
import os
import sys as _sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import serialize
from .errors import NumericalError, ValidationError
from .geometry import MassSystem, RelativeState, State
from .dynamics import Trajectory, audit_invariants, integrate_absolute, integrate_reduced
from .configurations import classify, find_balanced, find_central, shape_sphere
from .motions import HomographicMotion, KeplerOrbit, kepler_state, relative_equilibrium
from .action import (
    MinimizeOptions,
    action_value_and_gradient,
    minimize_action,
    square_relative_equilibrium_loop,
    symmetry_by_label,
    verify_loop,
)

log = logging.getLogger("nbodyred")


def _outpath(args, name, suffix=""):
    os.makedirs(args.out, exist_ok=True)
    stem, ext = name.rsplit(".", 1)
    return os.path.join(args.out, f"{stem}{suffix}.{ext}")


def _need_state(path):
    sys, z = serialize.load_scenario(path)
    if not isinstance(z, State):
        raise ValidationError(f"{path} must contain positions and velocities")
    return sys, z


def _need_configuration(path):
    sys, z = serialize.load_scenario(path)
    if z is None:
        raise ValidationError(f"{path} must contain positions")
    return sys, (z.x if isinstance(z, State) else z)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args, config, suffix=""):
    sys, z0 = _need_state(config)
    traj = integrate_absolute(z0, sys, args.horizon, tol=args.tol,
                              method=args.integrator, samples=args.samples)
    serialize.trajectory_to_csv(_outpath(args, "trajectory.csv", suffix), traj)
    report = audit_invariants(traj, sys)
    serialize.write_json(_outpath(args, "audit.json", suffix),
                         serialize.report_to_dict(report))
    log.info("energy drift %.3e, momentum drift %.3e",
             report.energy_drift, report.momentum_drift)
    return 0


def _cmd_reduce(args, config, suffix=""):
    sys, z0 = _need_state(config)
    rel0 = RelativeState.from_state(z0)
    traj = integrate_reduced(rel0, sys, args.horizon, tol=args.tol,
                             samples=args.samples)
    serialize.reduced_trajectory_to_csv(_outpath(args, "reduced.csv", suffix), traj)
    return 0


def _cmd_audit(args, config, suffix=""):
    sys, z0 = _need_state(config)
    traj = integrate_absolute(z0, sys, args.horizon, tol=args.tol,
                              method=args.integrator, samples=args.samples)
    report = audit_invariants(traj, sys)
    serialize.write_json(_outpath(args, "audit.json", suffix),
                         serialize.report_to_dict(report))
    return 0


def _masses(text):
    m = [float(v) for v in text.split(",") if v.strip()]
    if not m:
        raise ValidationError("empty mass list")
    return m


def _cmd_find_central(args, config=None, suffix=""):
    sys = MassSystem(_masses(args.masses), G=args.G, kappa=args.kappa)
    x = find_central(sys, args.dim, seed=args.seed)
    cls = classify(x, sys, tol=1e-8)
    serialize.write_json(_outpath(args, "central.json", suffix), {
        "masses": list(sys.m), "G": sys.G, "kappa": sys.kappa,
        "positions": x.r.tolist(),
        "kind": cls.kind,
        "multiplier": cls.multiplier,
        "central_residual": cls.central_residual,
        "balanced_residual": cls.balanced_residual,
    })
    return 0


def _cmd_find_balanced(args, config=None, suffix=""):
    sys = MassSystem(_masses(args.masses), G=args.G, kappa=args.kappa)
    spectrum = [float(v) for v in args.spectrum.split(",") if v.strip()]
    x = find_balanced(sys, spectrum, seed=args.seed)
    cls = classify(x, sys, tol=1e-8)
    serialize.write_json(_outpath(args, "balanced.json", suffix), {
        "masses": list(sys.m), "G": sys.G, "kappa": sys.kappa,
        "spectrum": spectrum,
        "positions": x.r.tolist(),
        "kind": cls.kind,
        "central_residual": cls.central_residual,
        "balanced_residual": cls.balanced_residual,
    })
    return 0


def _cmd_kepler(args, config=None, suffix=""):
    orbit = KeplerOrbit.from_elements(args.k, args.a, args.e)
    ts = np.linspace(0.0, orbit.period, args.samples)
    zeta, zdot = kepler_state(orbit, ts)
    rows = ([t, zeta[0, q], zeta[1, q], zdot[0, q], zdot[1, q]]
            for q, t in enumerate(ts))
    path = _outpath(args, "kepler.csv", suffix)
    with open(path, "w") as fh:
        fh.write("t[time],xi[length],eta[length],xidot[length/time],etadot[length/time]\n")
        for row in rows:
            fh.write(",".join(serialize.fmt(v) for v in row) + "\n")
    return 0


def _cmd_homographic(args, config, suffix=""):
    sys, x0 = _need_configuration(config)
    motion = HomographicMotion(x0, sys, e=args.e, scale=args.scale)
    ts = np.linspace(0.0, motion.period, args.samples)
    traj = Trajectory(ts, motion.sample(ts), {"integrator": "analytic", "tol": 0.0})
    serialize.trajectory_to_csv(_outpath(args, "homographic.csv", suffix), traj)
    return 0


def _cmd_relequil(args, config, suffix=""):
    sys, x0 = _need_configuration(config)
    re = relative_equilibrium(x0, sys)
    serialize.write_json(_outpath(args, "relequil.json", suffix), {
        "masses": list(sys.m), "G": sys.G, "kappa": sys.kappa,
        "x0": re.x0.r.tolist(),
        "Omega": re.Omega.c.tolist(),
        "frequencies": re.frequencies,
    })
    if args.samples > 0:
        ts = np.linspace(0.0, 2.0 * re.slow_period, args.samples)
        traj = Trajectory(ts, [re.state(t) for t in ts],
                          {"integrator": "analytic", "tol": 0.0})
        serialize.trajectory_to_csv(_outpath(args, "relequil.csv", suffix), traj)
    return 0


def _cmd_hiphop(args, config=None, suffix=""):
    if args.bodies != 4:
        raise ValidationError("the square/tetrahedron class is built for 4 bodies")
    sys = MassSystem([args.mass] * args.bodies, G=args.G)
    sym = symmetry_by_label(args.symmetry, n=args.bodies, d=3)
    seed_loop = square_relative_equilibrium_loop(args.period, sys, args.modes,
                                                 vertical_kick=args.kick)
    opts = MinimizeOptions(gtol=args.gtol, seed=args.seed)
    loop = minimize_action(seed_loop, sym, opts)
    serialize.write_json(_outpath(args, "loop.json", suffix),
                         serialize.loop_to_dict(loop))
    report = verify_loop(loop, sym=sym)
    action, _ = action_value_and_gradient(loop)
    serialize.write_json(_outpath(args, "hiphop_report.json", suffix), {
        "action": action,
        "eom_residual": report.eom_residual,
        "min_distance": report.min_distance,
        "symmetry_defect": report.symmetry_defect,
        "square_events": report.square_events,
        "tetra_events": report.tetra_events,
        "planarity": report.planarity,
    })
    ts = np.linspace(0.0, loop.T, args.samples)
    traj = Trajectory(ts, [loop.state(t) for t in ts],
                      {"integrator": "spectral", "tol": 0.0})
    serialize.trajectory_to_csv(_outpath(args, "hiphop.csv", suffix), traj)
    return 0


def _cmd_shape_sphere(args, config, suffix=""):
    sys, z = serialize.load_scenario(config)
    if z is None:
        raise ValidationError("scenario needs positions")
    points = []
    if isinstance(z, State) and args.horizon > 0:
        traj = integrate_absolute(z, sys, args.horizon, tol=args.tol,
                                  samples=args.samples)
        configs = [s.x for s in traj.states]
    else:
        configs = [z.x if isinstance(z, State) else z]
    for x in configs:
        w, I = shape_sphere(x, sys)
        lon = float(np.arctan2(w[1], w[0]))
        lat = float(np.arcsin(np.clip(w[2], -1.0, 1.0)))
        points.append([lon, lat, I])
    serialize.shape_points_to_csv(_outpath(args, "shape.csv", suffix), points)
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch


_CONFIG_COMMANDS = {
    "simulate": _cmd_simulate,
    "reduce": _cmd_reduce,
    "audit": _cmd_audit,
    "homographic": _cmd_homographic,
    "relequil": _cmd_relequil,
    "shape-sphere": _cmd_shape_sphere,
}
_PLAIN_COMMANDS = {
    "find-central": _cmd_find_central,
    "find-balanced": _cmd_find_balanced,
    "kepler": _cmd_kepler,
    "hiphop": _cmd_hiphop,
}


def build_parser():
    top = argparse.ArgumentParser(prog="nbodyred", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, config=False):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel jobs over repeated --config")
        if config:
            p.add_argument("--config", action="append", required=True,
                           help="scenario JSON (repeatable)")

    for name in ("simulate", "audit"):
        p = sub.add_parser(name)
        common(p, config=True)
        p.add_argument("--horizon", type=float, default=10.0)
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--samples", type=int, default=513)
        p.add_argument("--integrator", choices=("rk8", "leapfrog"), default="rk8")

    p = sub.add_parser("reduce")
    common(p, config=True)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--samples", type=int, default=513)

    p = sub.add_parser("find-central")
    common(p)
    p.add_argument("--masses", required=True, help="comma-separated masses")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--G", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=-0.5)

    p = sub.add_parser("find-balanced")
    common(p)
    p.add_argument("--masses", required=True)
    p.add_argument("--spectrum", required=True, help="comma-separated inertia spectrum")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--G", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=-0.5)

    p = sub.add_parser("kepler")
    common(p)
    p.add_argument("--e", type=float, required=True)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=257)

    p = sub.add_parser("homographic")
    common(p, config=True)
    p.add_argument("--e", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=257)

    p = sub.add_parser("relequil")
    common(p, config=True)
    p.add_argument("--samples", type=int, default=0,
                   help="also write a sampled trajectory when > 0")

    p = sub.add_parser("hiphop")
    common(p)
    p.add_argument("--bodies", type=int, default=4)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--G", type=float, default=1.0)
    p.add_argument("--period", type=float, default=2.0 * np.pi)
    p.add_argument("--modes", type=int, default=16)
    p.add_argument("--symmetry", default="z2z4",
                   choices=("z2z4", "hiphop_Z2xZ4", "italian", "z3", "hiphop_Z3"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--kick", type=float, default=0.3)
    p.add_argument("--gtol", type=float, default=1e-6)
    p.add_argument("--samples", type=int, default=257)

    p = sub.add_parser("shape-sphere")
    common(p, config=True)
    p.add_argument("--horizon", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--samples", type=int, default=257)

    return top


def _run_job(payload):
    args, config, suffix = payload
    handler = _CONFIG_COMMANDS[args.command]
    return handler(args, config, suffix)


def _dispatch(args):
    if args.command in _PLAIN_COMMANDS:
        return _PLAIN_COMMANDS[args.command](args)
    configs = args.config
    if len(configs) == 1:
        return _CONFIG_COMMANDS[args.command](args, configs[0])
    suffixes = [f"_job{k}" for k in range(len(configs))]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_job,
                                  [(args, c, s) for c, s in zip(configs, suffixes)]))
    else:
        codes = [_run_job((args, c, s)) for c, s in zip(configs, suffixes)]
    return max(codes)


def main(argv=None):
    level = os.environ.get("NBODY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ValidationError, ValueError) as exc:
        _sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except NumericalError as exc:
        _sys.stderr.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
