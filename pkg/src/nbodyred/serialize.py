"""Deterministic file formats (see FORMATS.md).

Floats are written with 17 significant digits so every value round-trips
exactly; identical inputs therefore produce byte-identical files.  CSV uses
a comma separator, '.' decimal and a header row carrying units.
"""

import json

import numpy as np

from .errors import ValidationError
from .geometry import Configuration, MassSystem, State


def fmt(x):
    return format(float(x), ".17g")


def _encode(obj):
    if isinstance(obj, dict):
        items = ", ".join(f"{json.dumps(k)}: {_encode(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        return "[" + ", ".join(_encode(v) for v in seq) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps(obj):
    """JSON text with fixed 17-significant-digit float formatting."""
    return _encode(obj) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


# ---------------------------------------------------------------------------
# scenarios (mass system + state)


def scenario_to_dict(sys, state=None, x=None):
    out = {"masses": list(sys.m), "G": sys.G, "kappa": sys.kappa}
    if state is not None:
        out["positions"] = state.x.r.tolist()
        out["velocities"] = state.y.r.tolist()
    elif x is not None:
        out["positions"] = x.r.tolist()
    return out


def scenario_from_dict(data):
    """(MassSystem, State or Configuration or None) from a scenario mapping."""
    if not isinstance(data, dict):
        raise ValidationError("scenario must be a JSON object")
    for key in ("masses",):
        if key not in data:
            raise ValidationError(f"scenario is missing {key!r}")
    sys = MassSystem(data["masses"], G=data.get("G", 1.0), kappa=data.get("kappa", -0.5))
    if "positions" not in data:
        return sys, None
    x = Configuration(np.asarray(data["positions"], dtype=float), sys)
    if "velocities" in data:
        y = Configuration(np.asarray(data["velocities"], dtype=float), sys)
        return sys, State(x, y)
    return sys, x


def load_scenario(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(data)


# ---------------------------------------------------------------------------
# loops


def loop_to_dict(loop):
    return {
        "period": loop.T,
        "masses": list(loop.sys.m),
        "G": loop.sys.G,
        "kappa": loop.sys.kappa,
        "cos_modes": loop.cos_modes.tolist(),
        "sin_modes": loop.sin_modes.tolist(),
    }


def loop_from_dict(data):
    from .action import Loop

    sys = MassSystem(data["masses"], G=data.get("G", 1.0), kappa=data.get("kappa", -0.5))
    return Loop(data["period"], np.asarray(data["cos_modes"], dtype=float),
                np.asarray(data["sin_modes"], dtype=float), sys)


# ---------------------------------------------------------------------------
# CSV writers


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def trajectory_to_csv(path, traj):
    """Absolute trajectory: time, positions row-major, velocities row-major."""
    z0 = traj.states[0]
    d, n = z0.d, z0.n
    header = ["t[time]"]
    header += [f"r{c}_{i}[length]" for c in range(d) for i in range(n)]
    header += [f"v{c}_{i}[length/time]" for c in range(d) for i in range(n)]
    rows = (
        [t, *z.x.r.ravel(), *z.y.r.ravel()]
        for t, z in zip(traj.times, traj.states)
    )
    _write_csv(path, header, rows)


def reduced_trajectory_to_csv(path, traj):
    """Reduced trajectory: time then beta, gamma, delta, rho row-major."""
    n = traj.states[0].n
    header = ["t[time]"]
    units = {"beta": "length^2", "gamma": "length^2/time",
             "delta": "length^2/time^2", "rho": "length^2/time"}
    for name in ("beta", "gamma", "delta", "rho"):
        header += [f"{name}_{i}_{j}[{units[name]}]" for i in range(n) for j in range(n)]
    rows = (
        [t, *rel.beta.ravel(), *rel.gamma.ravel(), *rel.delta.ravel(), *rel.rho.ravel()]
        for t, rel in zip(traj.times, traj.states)
    )
    _write_csv(path, header, rows)


def report_to_dict(report):
    return {
        "energy_drift": report.energy_drift,
        "momentum_drift": report.momentum_drift,
        "lagrange_jacobi_residual": report.lagrange_jacobi_residual,
        "sundman_min_gap": report.sundman_min_gap,
        "scaling_integral_drift": report.scaling_integral_drift,
        "series": {k: np.asarray(v).tolist() for k, v in report.series.items()},
    }


def shape_points_to_csv(path, points):
    """Rows (longitude[rad], latitude[rad], I)."""
    _write_csv(path, ["longitude[rad]", "latitude[rad]", "I[mass*length^2]"], points)
