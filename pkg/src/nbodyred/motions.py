"""Simple solutions in closed form.

Elliptic Kepler orbits with the normalization  zeta_ddot = -k zeta/|zeta|^3,
t - t0 = k a^{3/2} (u - e sin u), semi-major axis k a; homographic motions
of central configurations (every body on a similar conic); and the uniform
quasi-periodic rotations carried by balanced configurations in dimension
twice the configuration's rank.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NotAttractive, NotBalanced, NotCentral, ValidationError
from .geometry import (
    Bivector,
    Configuration,
    State,
    gram_form,
    inertia,
    matrix_rank,
    potential_and_gradient,
    wintner_conley,
)


# ---------------------------------------------------------------------------
# Kepler


@dataclass
class KeplerOrbit:
    k: float
    a: float
    e: float
    c: float
    t0: float = 0.0

    def __post_init__(self):
        if self.k <= 0 or self.a <= 0:
            raise ValidationError("k and a must be positive")
        if not 0.0 <= self.e < 1.0:
            raise ValidationError("elliptic branch requires 0 <= e < 1")
        defect = self.k**2 - self.c**2 / self.a - (self.k * self.e) ** 2
        if abs(defect) > 1e-12 * self.k**2:
            raise ValidationError(
                f"k^2 - c^2/a = k^2 e^2 violated by {defect:.3e}"
            )

    @classmethod
    def from_elements(cls, k, a, e, t0=0.0):
        """Orbit with c fixed by the energy relation (counterclockwise)."""
        c = k * np.sqrt(a * (1.0 - e * e))
        return cls(float(k), float(a), float(e), float(c), float(t0))

    @property
    def period(self):
        return 2.0 * np.pi * self.k * self.a**1.5

    @property
    def energy(self):
        return -0.5 / self.a


def kepler_anomaly(e, l, tol=1e-14, max_newton=60):
    """Solve u - e sin(u) = l for the eccentric anomaly.

    Newton iteration from the starter l + e sin(l)/(1 - sin(l+e) + sin(l)),
    with bisection fallback where 1 - e cos(u) is small; continuous and
    monotone in l (whole turns are peeled off and restored).
    """
    if not 0.0 <= e < 1.0:
        raise ValidationError("elliptic branch requires 0 <= e < 1")
    l = np.asarray(l, dtype=float)
    scalar = l.ndim == 0
    l = np.atleast_1d(l)

    turns = np.floor((l + np.pi) / (2.0 * np.pi))
    lw = l - 2.0 * np.pi * turns  # in [-pi, pi)

    denom = 1.0 - np.sin(lw + e) + np.sin(lw)
    u = lw + e * np.sin(lw) / np.where(np.abs(denom) < 1e-12, 1.0, denom)
    u = np.clip(u, -np.pi, np.pi)
    converged = np.zeros(lw.shape, dtype=bool)
    for _ in range(max_newton):
        f = u - e * np.sin(u) - lw
        fp = 1.0 - e * np.cos(u)
        bad = np.abs(fp) < 1e-3
        stepped = ~converged & ~bad
        u = np.where(stepped, u - f / np.where(bad, 1.0, fp), u)
        converged |= np.abs(f) < tol
        if np.all(converged | bad):
            break

    need = ~converged | (np.abs(u - e * np.sin(u) - lw) > tol)
    if np.any(need):
        lo = np.full(lw.shape, -np.pi)
        hi = np.full(lw.shape, np.pi)
        for _ in range(128):
            mid = 0.5 * (lo + hi)
            fmid = mid - e * np.sin(mid) - lw
            hi = np.where(fmid >= 0.0, mid, hi)
            lo = np.where(fmid < 0.0, mid, lo)
        u = np.where(need, 0.5 * (lo + hi), u)

    out = u + 2.0 * np.pi * turns
    return float(out[0]) if scalar else out


def kepler_state(orbit, t):
    """Position and velocity of the Kepler motion at time(s) t.

    xi = k a (cos u - e), eta = k a sqrt(1 - e^2) sin u, with u from the
    mean anomaly l = (t - t0) / (k a^{3/2}).
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    k, a, e = orbit.k, orbit.a, orbit.e
    l = (np.atleast_1d(t) - orbit.t0) / (k * a**1.5)
    u = np.atleast_1d(kepler_anomaly(e, l))
    r = k * a * (1.0 - e * np.cos(u))
    se = np.sqrt(1.0 - e * e)
    zeta = np.stack([k * a * (np.cos(u) - e), k * a * se * np.sin(u)])
    zdot = (k * np.sqrt(a) / r) * np.stack([-np.sin(u), se * np.cos(u)])
    if scalar:
        return zeta[:, 0], zdot[:, 0]
    return zeta, zdot


def kepler_radius_true_anomaly(orbit, v):
    """r = c^2 / (k (1 + e cos v)) from the true anomaly."""
    return orbit.c**2 / (orbit.k * (1.0 + orbit.e * np.cos(v)))


# ---------------------------------------------------------------------------
# homographic motions


class HomographicMotion:
    """x(t) = zeta(t) x0 with zeta an elliptic Kepler solution.

    x0 must be central; it is normalized to I = 1.  With embedding "plane"
    (default) an even-rank image carries the quarter-turn pairing of its own
    axes (the plane's rotation in the planar case) while an odd-rank image
    is doubled; embedding "double" always places the image next to an
    orthogonal copy of itself, which matches the realization used for
    relative equilibria.  `scale` is the semi-major axis of the common conic.
    """

    def __init__(self, x0, sys, e=0.0, scale=1.0, tol=1e-8, embedding="plane"):
        if abs(sys.kappa + 0.5) > 1e-14:
            raise ValidationError("homographic Kepler motions require kappa = -1/2")
        from .configurations import classify

        cls = classify(x0, sys, tol)
        if cls.central_residual >= tol:
            raise NotCentral(
                f"central residual {cls.central_residual:.3e} above {tol:.1e}"
            )
        I0, _, _ = inertia(x0, sys)
        xhat = x0.r / np.sqrt(I0)

        if embedding not in ("plane", "double"):
            raise ValidationError("embedding must be 'plane' or 'double'")
        u_img, _, _ = np.linalg.svd(xhat, full_matrices=False)
        rank = matrix_rank(xhat)
        P = u_img[:, :rank].T @ xhat  # rank x n coordinates of the image
        if embedding == "plane" and rank % 2 == 0:
            dim = rank
            X0 = P
            J = np.zeros((dim, dim))
            for i in range(dim // 2):
                J[2 * i, 2 * i + 1] = -1.0
                J[2 * i + 1, 2 * i] = 1.0
        else:
            # image next to an orthogonal copy; J swaps them
            dim = 2 * rank
            X0 = np.vstack([P, np.zeros((rank, sys.n))])
            J = np.zeros((dim, dim))
            J[:rank, rank:] = -np.eye(rank)
            J[rank:, :rank] = np.eye(rank)

        self.sys = sys
        self.x0 = Configuration(X0, sys)
        self.quarter_turn = J
        U0, _ = potential_and_gradient(Configuration(xhat, sys), sys)
        self.k = U0
        self.orbit = KeplerOrbit.from_elements(U0, scale / U0, e)

    @property
    def period(self):
        return self.orbit.period

    def state(self, t):
        zeta, zdot = kepler_state(self.orbit, t)
        X0, J = self.x0.r, self.quarter_turn
        xr = zeta[0] * X0 + zeta[1] * (J @ X0)
        yr = zdot[0] * X0 + zdot[1] * (J @ X0)
        return State(Configuration(xr, self.sys), Configuration(yr, self.sys))

    def sample(self, ts):
        return [self.state(t) for t in np.asarray(ts, dtype=float)]


def homographic_motion(x0, sys, e=0.0, scale=1.0, t=0.0, tol=1e-8):
    """State at time t of the homographic motion built on a central x0."""
    return HomographicMotion(x0, sys, e, scale, tol).state(t)


# ---------------------------------------------------------------------------
# relative equilibria


@dataclass
class RelativeEquilibrium:
    x0: Configuration          # balanced configuration embedded in 2 rank(beta) dims
    Omega: Bivector            # the fixed rotation, z_dot = Omega z
    frequencies: list          # omega_i, descending
    _coeff: np.ndarray = field(repr=False, default=None)   # mode rows (dual basis)
    _amp: np.ndarray = field(repr=False, default=None)     # sqrt(b_i)
    _sys: object = field(repr=False, default=None)

    def state(self, t):
        """Absolute state at time t (plane i rotates at omega_i)."""
        om = np.asarray(self.frequencies)
        cos, sin = np.cos(om * t), np.sin(om * t)
        r = self._amp[:, None] * self._coeff
        xr = np.empty((2 * om.size, self._coeff.shape[1]))
        yr = np.empty_like(xr)
        xr[0::2] = cos[:, None] * r
        xr[1::2] = sin[:, None] * r
        yr[0::2] = (-om * sin)[:, None] * r
        yr[1::2] = (om * cos)[:, None] * r
        return State(Configuration(xr, self._sys), Configuration(yr, self._sys))

    @property
    def slow_period(self):
        return 2.0 * np.pi / min(self.frequencies)


def _simultaneous_eigh(B, A, cluster_rtol=1e-7):
    """Eigenbasis of commuting symmetric B, A: diagonalize B, refine each
    eigenvalue cluster with A."""
    wb, V = np.linalg.eigh(B)
    scale = max(abs(wb).max(), 1e-300)
    wa = np.empty_like(wb)
    i = 0
    while i < wb.size:
        j = i + 1
        while j < wb.size and abs(wb[j] - wb[i]) <= cluster_rtol * scale:
            j += 1
        sub = V[:, i:j]
        wsub, Vsub = np.linalg.eigh(sub.T @ A @ sub)
        V[:, i:j] = sub @ Vsub
        wa[i:j] = wsub
        i = j
    return wb, wa, V


def relative_equilibrium(x0, sys, tol=1e-8):
    """Build the uniform quasi-periodic rotation carried by a balanced x0.

    The interaction and inertia tables commute for balanced configurations;
    each common eigenmode with inertia b_i > 0 and interaction eigenvalue
    a_i < 0 occupies an orthogonal plane rotating at omega_i = sqrt(-2 a_i).
    The motion space has dimension 2 rank(beta).  Raises NotBalanced or
    NotAttractive when the preconditions fail.
    """
    from .configurations import classify

    cls = classify(x0, sys, tol)
    if cls.balanced_residual >= tol:
        raise NotBalanced(
            f"commutation residual {cls.balanced_residual:.3e} above {tol:.1e}"
        )
    sqm = np.sqrt(sys.m)
    beta = gram_form(x0)
    A = wintner_conley(x0, sys)
    b_sym = beta * np.outer(sqm, sqm)
    a_sym = (A / sqm[:, None]) * sqm[None, :]
    a_sym = 0.5 * (a_sym + a_sym.T)

    wb, wa, V = _simultaneous_eigh(b_sym, a_sym)
    keep = wb > 1e-12 * wb.max()
    if np.any(wa[keep] >= 0.0):
        raise NotAttractive("interaction matrix not negative on the image")
    b = wb[keep]
    a = wa[keep]
    modes = V[:, keep]
    omega = np.sqrt(-2.0 * a)
    order = np.argsort(-omega)
    b, omega, modes = b[order], omega[order], modes[:, order]

    coeff = (modes / sqm[:, None]).T         # row i evaluates the dual covector
    amp = np.sqrt(b)
    r = b.size
    om_table = np.zeros((2 * r, 2 * r))
    for i in range(r):
        om_table[2 * i, 2 * i + 1] = -omega[i]
        om_table[2 * i + 1, 2 * i] = omega[i]

    x0_emb = np.zeros((2 * r, sys.n))
    x0_emb[0::2] = amp[:, None] * coeff      # phase 0: each plane on its first axis
    return RelativeEquilibrium(Configuration(x0_emb, sys), Bivector(om_table),
                               [float(w) for w in omega],
                               _coeff=coeff, _amp=amp, _sys=sys)


def sundman_profile(traj, sys):
    """Series of I K - J^2 - |C|^2 along an absolute trajectory."""
    from .dynamics import sundman_gap

    return np.array([sundman_gap(z, sys) for z in traj.states])
