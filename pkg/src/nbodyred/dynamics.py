"""Time integration and invariant audits.

Two routes are integrated: the absolute equations  x_dot = y, y_dot = 2 x A
on coordinates, and the reduced system on the quadruple (beta, gamma, delta,
rho), where A is recomputed from beta at every evaluation.  Audits check
energy, angular momentum, the virial (Lagrange-Jacobi) relation and the
Sundman gap I K - J^2 - |C|^2.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import (
    CollisionError,
    DegenerateConfiguration,
    InvalidStructure,
    StepFailure,
    ValidationError,
)
from .geometry import (
    COLLISION_FLOOR,
    Configuration,
    RelativeState,
    State,
    angular_momentum,
    beta_to_distances,
    bivector_component,
    bivector_norm_and_frequencies,
    hermitian_from_bivector,
    interaction_matrix_from_s,
    mass_dot,
    matrix_rank,
    potential,
)


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    metadata: dict = field(default_factory=dict)

    @property
    def kind(self):
        return "reduced" if isinstance(self.states[0], RelativeState) else "absolute"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ValidationError("times must be strictly increasing")
        self.times = t


@dataclass
class InvariantReport:
    energy_drift: float
    momentum_drift: float
    lagrange_jacobi_residual: float
    sundman_min_gap: float
    scaling_integral_drift: float | None  # 2IH - J^2, kappa = -1 only
    series: dict


def _min_distance(xr):
    diff = xr[:, :, None] - xr[:, None, :]
    s = np.einsum("cij,cij->ij", diff, diff)
    n = xr.shape[1]
    return float(np.sqrt(s[np.triu_indices(n, 1)].min()))


# ---------------------------------------------------------------------------
# absolute integration


def integrate_absolute(z0, sys, horizon, tol=1e-10, method="rk8", samples=513,
                       dt=None, collision_floor=COLLISION_FLOOR):
    """Integrate x_dot = y, y_dot = 2 x A over [0, horizon].

    method "rk8" uses the adaptive 8(5,3) Runge-Kutta pair with relative and
    absolute tolerance `tol`; "leapfrog" is a fixed-step kick-drift-kick
    scheme (step `dt`, default horizon/8192) for long conservation audits.
    Raises CollisionError when a mutual distance falls below the collision
    floor, StepFailure when the step size underflows.
    """
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    d, n = z0.d, z0.n
    ts = np.linspace(0.0, float(horizon), int(samples))

    def unpack(u):
        return u[: d * n].reshape(d, n), u[d * n :].reshape(d, n)

    def rhs(t, u):
        xr, yr = unpack(u)
        A = interaction_matrix_from_s(squared_distances_arr(xr), sys, collision_floor)
        return np.concatenate([yr.ravel(), (2.0 * (xr @ A)).ravel()])

    u0 = np.concatenate([z0.x.r.ravel(), z0.y.r.ravel()])

    if method == "rk8":
        def too_close(t, u):
            xr, _ = unpack(u)
            return _min_distance(xr) - 2.0 * collision_floor
        too_close.terminal = True
        too_close.direction = -1

        sol = solve_ivp(rhs, (0.0, float(horizon)), u0, method="DOP853",
                        t_eval=ts, rtol=tol, atol=tol, events=too_close,
                        dense_output=True)
        if sol.status == 1:
            raise CollisionError(f"collision at t = {sol.t_events[0][0]:.6g}")
        if sol.status != 0:
            # a stalled step during a near-collapse is a collision, not a
            # generic failure
            t_last = sol.sol.t_max if sol.sol is not None else 0.0
            mind = _min_distance(unpack(sol.sol(t_last))[0]) if sol.sol is not None else np.inf
            mind0 = _min_distance(z0.x.r)
            if mind < max(1e3 * collision_floor, 1e-6 * mind0):
                raise CollisionError(
                    f"collapse at t = {t_last:.6g} (min distance {mind:.3e})"
                )
            raise StepFailure(sol.message)
        us = sol.y.T
    elif method == "leapfrog":
        us = _leapfrog(rhs_accel_factory(sys, d, n, collision_floor), u0, ts,
                       dt if dt is not None else horizon / 8192.0, d, n)
    else:
        raise ValidationError(f"unknown integrator {method!r}")

    states = []
    for u in us:
        xr, yr = unpack(u)
        states.append(State(Configuration(xr, sys), Configuration(yr, sys)))
    return Trajectory(ts, states, {"integrator": method, "tol": tol})


def squared_distances_arr(xr):
    diff = xr[:, :, None] - xr[:, None, :]
    return np.einsum("cij,cij->ij", diff, diff)


def rhs_accel_factory(sys, d, n, collision_floor):
    def accel(xr):
        A = interaction_matrix_from_s(squared_distances_arr(xr), sys, collision_floor)
        return 2.0 * (xr @ A)
    return accel


def _leapfrog(accel, u0, ts, dt, d, n):
    """Fixed-step kick-drift-kick between the requested sample times."""
    x = u0[: d * n].reshape(d, n).copy()
    v = u0[d * n :].reshape(d, n).copy()
    out = np.empty((ts.size, u0.size))
    out[0] = u0
    t = ts[0]
    a = accel(x)
    for k in range(1, ts.size):
        target = ts[k]
        while t < target - 1e-15:
            h = min(dt, target - t)
            v += 0.5 * h * a
            x += h * v
            a = accel(x)
            v += 0.5 * h * a
            t += h
        out[k] = np.concatenate([x.ravel(), v.ravel()])
    return out


# ---------------------------------------------------------------------------
# reduced integration


def reduced_rhs(rel, sys, collision_floor=COLLISION_FLOOR):
    """Right-hand side of the reduced system.

    beta_dot = 2 gamma, gamma_dot = A^T beta + beta A + delta,
    delta_dot = 2 (A^T gamma + gamma A) - 2 (A^T rho - rho A),
    rho_dot = A^T beta - beta A,
    with A recomputed from beta through the squared distances.  The result
    is returned in the double-centered representation (the class evolves
    autonomously there because A kills the mass vector on one side and the
    ones vector on the other).
    """
    s = beta_to_distances(rel.beta)
    A = interaction_matrix_from_s(s, sys, collision_floor)
    At = A.T
    db = 2.0 * rel.gamma
    dg = At @ rel.beta + rel.beta @ A + rel.delta
    dd = 2.0 * (At @ rel.gamma + rel.gamma @ A) - 2.0 * (At @ rel.rho - rel.rho @ A)
    dr = At @ rel.beta - rel.beta @ A
    return RelativeState(db, dg, dd, dr)


def integrate_reduced(rel0, sys, horizon, tol=1e-10, samples=513,
                      collision_floor=COLLISION_FLOOR):
    """Integrate the reduced quadruple; same contract as integrate_absolute."""
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    n = rel0.n
    nn = n * n
    ts = np.linspace(0.0, float(horizon), int(samples))

    def pack(rel):
        return np.concatenate([rel.beta.ravel(), rel.gamma.ravel(),
                               rel.delta.ravel(), rel.rho.ravel()])

    def unpack(u):
        return (u[0:nn].reshape(n, n), u[nn:2 * nn].reshape(n, n),
                u[2 * nn:3 * nn].reshape(n, n), u[3 * nn:].reshape(n, n))

    def rhs(t, u):
        beta, gamma, delta, rho = unpack(u)
        beta = 0.5 * (beta + beta.T)
        gamma = 0.5 * (gamma + gamma.T)
        delta = 0.5 * (delta + delta.T)
        rho = 0.5 * (rho - rho.T)
        s = beta_to_distances(beta, tol=1e-6)
        A = interaction_matrix_from_s(s, sys, collision_floor)
        At = A.T
        db = 2.0 * gamma
        dg = At @ beta + beta @ A + delta
        dd = 2.0 * (At @ gamma + gamma @ A) - 2.0 * (At @ rho - rho @ A)
        dr = At @ beta - beta @ A
        return np.concatenate([db.ravel(), dg.ravel(), dd.ravel(), dr.ravel()])

    def too_close(t, u):
        beta = unpack(u)[0]
        diag = np.diag(beta)
        s = diag[:, None] + diag[None, :] - 2.0 * beta
        return s[np.triu_indices(n, 1)].min() - (2.0 * collision_floor) ** 2
    too_close.terminal = True
    too_close.direction = -1

    sol = solve_ivp(rhs, (0.0, float(horizon)), pack(rel0), method="DOP853",
                    t_eval=ts, rtol=tol, atol=tol, events=too_close,
                    dense_output=True)
    if sol.status == 1:
        raise CollisionError(f"collision at t = {sol.t_events[0][0]:.6g}")
    if sol.status != 0:
        s0_min = beta_to_distances(rel0.beta)[np.triu_indices(n, 1)].min()
        if sol.sol is not None:
            beta_last = unpack(sol.sol(sol.sol.t_max))[0]
            diag = np.diag(beta_last)
            s_last = diag[:, None] + diag[None, :] - 2.0 * beta_last
            if s_last[np.triu_indices(n, 1)].min() < 1e-12 * s0_min:
                raise CollisionError(f"collapse at t = {sol.sol.t_max:.6g}")
        raise StepFailure(sol.message)

    states = [RelativeState(*unpack(u)) for u in sol.y.T]
    return Trajectory(ts, states, {"integrator": "rk8", "tol": tol})


# ---------------------------------------------------------------------------
# invariants


def scalar_invariants(z, sys):
    """(I, J, K, U, H) of an absolute state."""
    I = mass_dot(z.x.r, z.x.r, sys.m)
    J = mass_dot(z.x.r, z.y.r, sys.m)
    K = mass_dot(z.y.r, z.y.r, sys.m)
    U = potential(z.x, sys)
    H = 0.5 * K - U
    return I, J, K, U, H


def sundman_gap(z, sys):
    """I K - J^2 - |C|^2 (nonnegative; zero exactly for complex-homothetic states)."""
    I, J, K, _, _ = scalar_invariants(z, sys)
    normC, _ = bivector_norm_and_frequencies(angular_momentum(z, sys))
    return I * K - J * J - normC * normC


def sundman_function(z, sys):
    """Sundman's function I^{-1/2}(J^2 + |C|^2) - 2 I^{1/2} H."""
    I, J, K, _, H = scalar_invariants(z, sys)
    normC, _ = bivector_norm_and_frequencies(angular_momentum(z, sys))
    return (J * J + normC * normC) / np.sqrt(I) - 2.0 * np.sqrt(I) * H


def audit_invariants(traj, sys):
    """Drift and residual report along an absolute trajectory.

    Reports the max relative drift of H and of the angular momentum table,
    the sup-norm residual of  J_dot - (2H + 2(kappa+1)U)  with J
    differentiated by cubic spline, the minimum Sundman gap, and for
    kappa = -1 the drift of the scaling integral 2 I H - J^2.
    """
    if traj.kind != "absolute":
        raise ValidationError("audit expects an absolute trajectory")
    m = len(traj.states)
    I = np.empty(m); J = np.empty(m); K = np.empty(m); U = np.empty(m)
    H = np.empty(m); normC = np.empty(m); Sfun = np.empty(m)
    c_tables = []
    for k, z in enumerate(traj.states):
        I[k], J[k], K[k], U[k], H[k] = scalar_invariants(z, sys)
        C = angular_momentum(z, sys)
        c_tables.append(C.c)
        normC[k], _ = bivector_norm_and_frequencies(C)
        Sfun[k] = (J[k] ** 2 + normC[k] ** 2) / np.sqrt(I[k]) - 2.0 * np.sqrt(I[k]) * H[k]
    c_tables = np.array(c_tables)

    h_scale = max(abs(H[0]), 1e-30)
    energy_drift = float(np.max(np.abs(H - H[0])) / h_scale)
    c0 = c_tables[0]
    # for zero-momentum runs measure against the natural scale sqrt(I K)
    natural = np.sqrt(I[0] * K[0])
    c_scale = np.abs(c0).max()
    if c_scale <= 1e-9 * natural:
        c_scale = max(natural, 1e-30)
    momentum_drift = float(np.max(np.abs(c_tables - c0)) / c_scale)

    jdot = CubicSpline(traj.times, J).derivative()(traj.times)
    virial = 2.0 * H + 2.0 * (sys.kappa + 1.0) * U
    interior = slice(2, -2) if m > 8 else slice(None)
    lj_residual = float(np.max(np.abs(jdot - virial)[interior]))

    gap = I * K - J ** 2 - normC ** 2
    sundman_min_gap = float(gap.min())

    scaling_drift = None
    if abs(sys.kappa + 1.0) < 1e-14:
        G2 = 2.0 * I * H - J ** 2
        scaling_drift = float(np.max(np.abs(G2 - G2[0])) / max(abs(G2[0]), 1e-30))

    series = {"t": traj.times.copy(), "I": I, "J": J, "K": K, "U": U, "H": H,
              "normC": normC, "sundman_gap": gap, "sundman_function": Sfun}
    return InvariantReport(energy_drift, momentum_drift, lj_residual,
                           sundman_min_gap, scaling_drift, series)


# ---------------------------------------------------------------------------
# Schwarz / Sundman machinery


@dataclass
class SchwarzGap:
    gap: float
    equality: bool
    omega_mismatch: float | None  # ||Omega - Omega_C|| on the fixed space, when equality


def _check_degenerate_hermitian(omega, tol=1e-10):
    """Omega must satisfy ||Omega v|| <= ||v|| and Omega^2 = -Id on Im Omega."""
    c = omega.c
    sv = np.linalg.svd(c, compute_uv=False)
    if sv.size and sv[0] > 1.0 + tol:
        raise InvalidStructure(f"largest singular value {sv[0]:.3e} exceeds 1")
    _, _, F = hermitian_from_bivector(omega)
    if F.shape[1]:
        resid = np.abs(c @ c @ F + F).max()
        if resid > tol:
            raise InvalidStructure(
                f"Omega^2 differs from -Id on its image by {resid:.3e}"
            )


def complex_schwarz_gap(z, omega, sys, equality_tol=1e-10):
    """Gap  I K - J^2 - (1/4) <C, Omega>^2  for a degenerate hermitian Omega.

    The gap is minimal (and equals the Sundman gap) for Omega = Omega_C.
    When the gap vanishes to equality_tol * I K, the equality flag is set
    and Omega is compared against Omega_C on the fixed space.
    """
    _check_degenerate_hermitian(omega)
    I, J, K, _, _ = scalar_invariants(z, sys)
    C = angular_momentum(z, sys)
    comp = bivector_component(C, omega)  # already (1/2) <C, Omega>
    gap = I * K - J * J - comp * comp
    equality = bool(gap <= equality_tol * max(I * K, 1e-300))
    mismatch = None
    if equality:
        _, omega_c, F = hermitian_from_bivector(C)
        if F.shape[1]:
            mismatch = float(np.abs(F.T @ (omega.c - omega_c) @ F).max())
        else:
            mismatch = 0.0
    return SchwarzGap(float(gap), equality, mismatch)


def saari_decomposition(z, sys):
    """Split a velocity into homothetic, rotational and deformation parts.

    y = y_h + y_r + y_d, mutually orthogonal for the mass metric;
    y_h = (J/I) x and y_r is the projection of y - y_h onto the tangent of
    the rotation orbit {W x : W antisymmetric}.
    """
    xr, yr = z.x.r, z.y.r
    d = z.d
    I = mass_dot(xr, xr, sys.m)
    if I < 1e-300:
        raise DegenerateConfiguration("total collision")
    J = mass_dot(xr, yr, sys.m)
    y_h = (J / I) * xr
    resid = yr - y_h

    # basis of the rotation-orbit tangent: (E_ab - E_ba) x, a < b
    pairs = [(a, b) for a in range(d) for b in range(a + 1, d)]
    basis = np.empty((len(pairs), d, z.n))
    for k, (a, b) in enumerate(pairs):
        w = np.zeros((d, d))
        w[a, b] = 1.0
        w[b, a] = -1.0
        basis[k] = w @ xr
    gram = np.einsum("i,kci,lci->kl", sys.m, basis, basis)
    rhs = np.einsum("i,kci,ci->k", sys.m, basis, resid)
    coef, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    y_r = np.einsum("k,kci->ci", coef, basis)
    y_d = resid - y_r
    return y_h, y_r, y_d


def dziobek_ranks(z, sys, rtol=1e-9):
    """(rank C, rank E) with the singular-value threshold rtol * sigma_max."""
    rank_c = matrix_rank(angular_momentum(z, sys).c, rtol)
    rank_e = matrix_rank(np.hstack([z.x.r, z.y.r]), rtol)
    return rank_c, rank_e
