"""Variational construction of symmetric periodic orbits.

T-periodic paths of configurations are trigonometric polynomials; the
Lagrangian action  integral of (K/2 + U)  is evaluated by the rectangle
rule on equispaced nodes (spectrally accurate for smooth loops) with an
analytic gradient in the Fourier coefficients.  Symmetry classes (the
antipodal "italian" constraint, the square/tetrahedron oscillation class of
four bodies, a triangle-plus-axis variant) are linear subspaces of
coefficient space; minimization runs in an orthonormal basis of the class,
so constraints hold to machine precision rather than by penalty.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    CollisionApproach,
    CollisionAtNode,
    NoConvergence,
    ValidationError,
)
from .geometry import (
    COLLISION_FLOOR,
    Configuration,
    State,
    interaction_matrix_from_s,
)


def _trig(n_modes, T, ts):
    k = np.arange(n_modes + 1)
    phase = np.outer(ts, k) * (2.0 * np.pi / T)
    return np.cos(phase), np.sin(phase)  # (q, k)


class Loop:
    """T-periodic path of configurations as real Fourier coefficients.

    cos_modes and sin_modes have shape (d, n, n_modes + 1); the path is
    x_ci(t) = sum_k cos_modes[c,i,k] cos(k w t) + sin_modes[c,i,k] sin(k w t)
    with w = 2 pi / T.  The constant sine coefficient is zeroed and the
    mass-weighted centroid removed mode by mode.
    """

    def __init__(self, T, cos_modes, sin_modes, sys):
        cos_modes = np.array(cos_modes, dtype=float)
        sin_modes = np.array(sin_modes, dtype=float)
        if cos_modes.shape != sin_modes.shape or cos_modes.ndim != 3:
            raise ValidationError("coefficient arrays must share shape (d, n, K+1)")
        if cos_modes.shape[1] != sys.n:
            raise ValidationError("coefficient arrays do not match the mass system")
        if T <= 0:
            raise ValidationError("period must be positive")
        sin_modes[:, :, 0] = 0.0
        for arr in (cos_modes, sin_modes):
            arr -= (arr * sys.m[None, :, None]).sum(axis=1, keepdims=True) / sys.M
        self.T = float(T)
        self.cos_modes = cos_modes
        self.sin_modes = sin_modes
        self.sys = sys
        self.d, self.n, self.n_modes = cos_modes.shape[0], cos_modes.shape[1], cos_modes.shape[2] - 1

    # -- evaluation ---------------------------------------------------------

    def positions(self, ts):
        cos, sin = _trig(self.n_modes, self.T, np.asarray(ts, dtype=float))
        return np.einsum("cik,qk->qci", self.cos_modes, cos) + \
            np.einsum("cik,qk->qci", self.sin_modes, sin)

    def velocities(self, ts):
        cos, sin = _trig(self.n_modes, self.T, np.asarray(ts, dtype=float))
        kw = np.arange(self.n_modes + 1) * (2.0 * np.pi / self.T)
        return np.einsum("cik,qk->qci", self.sin_modes * kw, cos) - \
            np.einsum("cik,qk->qci", self.cos_modes * kw, sin)

    def accelerations(self, ts):
        cos, sin = _trig(self.n_modes, self.T, np.asarray(ts, dtype=float))
        kw2 = (np.arange(self.n_modes + 1) * (2.0 * np.pi / self.T)) ** 2
        return -np.einsum("cik,qk->qci", self.cos_modes * kw2, cos) - \
            np.einsum("cik,qk->qci", self.sin_modes * kw2, sin)

    def state(self, t):
        x = self.positions([t])[0]
        v = self.velocities([t])[0]
        return State(Configuration(x, self.sys), Configuration(v, self.sys))

    def nodes(self, n_quad):
        return self.T * np.arange(n_quad) / n_quad

    # -- flat parameter vector ---------------------------------------------

    def params(self):
        return np.concatenate([self.cos_modes.ravel(), self.sin_modes.ravel()])

    def with_params(self, p):
        half = self.cos_modes.size
        shape = self.cos_modes.shape
        return Loop(self.T, p[:half].reshape(shape), p[half:].reshape(shape), self.sys)

    def scaled(self, factor):
        return Loop(self.T, factor * self.cos_modes, factor * self.sin_modes, self.sys)

    def __repr__(self):
        return f"Loop(T={self.T}, n={self.n}, d={self.d}, n_modes={self.n_modes})"


# ---------------------------------------------------------------------------
# symmetry actions


@dataclass
class _Element:
    perm: tuple          # body i of the source appears as body perm[i]
    matrix: np.ndarray   # orthogonal d x d map (full precision)
    shift: Fraction      # time shift as a fraction of T, in [0, 1)

    def key(self):
        return (self.perm, _mat_key(self.matrix), self.shift)


class SymmetryAction:
    """Finite group acting on loops by (permutation, orthogonal map, shift).

    A loop is invariant under the generator (perm, Q, s) when
    x_perm(i)(t + s T) = Q x_i(t) for all bodies and times.  The group is
    the closure of the generators; construction fails unless it closes
    within max_order elements.
    """

    def __init__(self, label, n, d, generators, max_order=64):
        self.label = label
        self.n = n
        self.d = d
        gens = []
        for perm, Q, shift in generators:
            perm = tuple(int(p) for p in perm)
            if sorted(perm) != list(range(n)):
                raise ValidationError(f"{perm} is not a permutation of 0..{n-1}")
            Q = np.asarray(Q, dtype=float)
            if Q.shape != (d, d) or np.abs(Q @ Q.T - np.eye(d)).max() > 1e-12:
                raise ValidationError("generator map must be d x d orthogonal")
            gens.append(_Element(perm, Q, Fraction(shift) % 1))
        self.elements = self._close(gens, n, d, max_order)

    @staticmethod
    def _close(gens, n, d, max_order):
        ident = _Element(tuple(range(n)), np.eye(d), Fraction(0))
        seen = {ident.key(): ident}
        frontier = [ident]
        while frontier:
            nxt = []
            for a in frontier:
                for g in gens:
                    c = _compose(a, g)
                    if c.key() not in seen:
                        seen[c.key()] = c
                        nxt.append(c)
            frontier = nxt
            if len(seen) > max_order:
                raise ValidationError("group does not close; check the generators")
        return [seen[k] for k in sorted(seen, key=lambda k: (k[2], k[0], k[1]))]

    @property
    def order(self):
        return len(self.elements)

    def check_masses(self, sys):
        for el in self.elements:
            for i, j in enumerate(el.perm):
                if abs(sys.m[i] - sys.m[j]) > 1e-12 * sys.m[i]:
                    raise ValidationError(
                        "symmetry permutes bodies of unequal masses"
                    )


def _mat_key(Q):
    # entries of distinct elements differ by O(1); 9 digits survive the
    # float drift of repeated composition
    return tuple(tuple(round(v, 9) + 0.0 for v in row) for row in np.asarray(Q))


def _compose(a, b):
    """Element whose loop operator is rho(a) rho(b)."""
    perm = tuple(b.perm[a.perm[i]] for i in range(len(a.perm)))
    return _Element(perm, b.matrix @ a.matrix, (a.shift + b.shift) % 1)


def _apply_element(cos_modes, sin_modes, el, T):
    """Coefficients of  t -> Q^T x(t + shift T) P_perm  (fixed points = invariance)."""
    Q = el.matrix
    K = cos_modes.shape[2] - 1
    k = np.arange(K + 1)
    ang = 2.0 * np.pi * float(el.shift) * k
    ck, sk = np.cos(ang), np.sin(ang)
    a = cos_modes * ck + sin_modes * sk
    b = -cos_modes * sk + sin_modes * ck
    a = np.einsum("dc,cik->dik", Q.T, a)
    b = np.einsum("dc,cik->dik", Q.T, b)
    perm = list(el.perm)
    return a[:, perm, :], b[:, perm, :]


def project_symmetry(loop, sym):
    """Group-average a loop onto the symmetry class (idempotent)."""
    if (sym.n, sym.d) != (loop.n, loop.d):
        raise ValidationError("symmetry and loop shapes differ")
    sym.check_masses(loop.sys)
    acc_a = np.zeros_like(loop.cos_modes)
    acc_b = np.zeros_like(loop.sin_modes)
    for el in sym.elements:
        a, b = _apply_element(loop.cos_modes, loop.sin_modes, el, loop.T)
        acc_a += a
        acc_b += b
    return Loop(loop.T, acc_a / sym.order, acc_b / sym.order, loop.sys)


def italian(n, d):
    """x(t - T/2) = -x(t)."""
    return SymmetryAction("italian", n, d, [(tuple(range(n)), -np.eye(d), Fraction(1, 2))])


def hiphop_z2z4():
    """Four bodies in R^3: square horizontal projection with counter-
    oscillating diagonals, plus the antipodal half-period constraint."""
    quarter_flip = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    cycle = (1, 2, 3, 0)  # body i -> i+1
    return SymmetryAction("hiphop_Z2xZ4", 4, 3, [
        (cycle, quarter_flip, Fraction(0)),
        ((0, 1, 2, 3), -np.eye(3), Fraction(1, 2)),
    ])


def hiphop_z3():
    """Three bodies on a horizontal triangle against a fourth on the axis."""
    c, s = np.cos(2.0 * np.pi / 3.0), np.sin(2.0 * np.pi / 3.0)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return SymmetryAction("hiphop_Z3", 4, 3, [
        ((1, 2, 0, 3), rot, Fraction(0)),
        ((0, 1, 2, 3), -np.eye(3), Fraction(1, 2)),
    ])


def symmetry_by_label(label, n=4, d=3):
    if label == "italian":
        return italian(n, d)
    if label in ("hiphop_Z2xZ4", "z2z4"):
        return hiphop_z2z4()
    if label in ("hiphop_Z3", "z3"):
        return hiphop_z3()
    raise ValidationError(f"unknown symmetry label {label!r}")


def invariant_basis(sym, sys, T, n_modes):
    """Orthonormal basis of the invariant, centroid-free coefficient space."""
    sym.check_masses(sys)
    template = Loop(T, np.zeros((sym.d, sym.n, n_modes + 1)),
                    np.zeros((sym.d, sym.n, n_modes + 1)), sys)
    N = 2 * sym.d * sym.n * (n_modes + 1)

    def apply(p):
        loop = template.with_params(p)  # centroid projection happens here
        return project_symmetry(loop, sym).params()

    P = np.empty((N, N))
    eye = np.eye(N)
    for j in range(N):
        P[:, j] = apply(eye[j])
    u, sv, _ = np.linalg.svd(P)
    Z = u[:, sv > 0.5]
    return Z, template


# ---------------------------------------------------------------------------
# action functional


def action_value_and_gradient(loop, n_quad=None, collision_floor=COLLISION_FLOOR):
    """Action  integral of (K/2 + U)  and its coefficient gradient.

    Rectangle rule on n_quad equispaced nodes (default max(256, 8 K));
    raises CollisionAtNode below the collision floor.  The gradient is the
    exact derivative of the quadrature, ordered like Loop.params().
    """
    sys = loop.sys
    if n_quad is None:
        n_quad = max(256, 8 * loop.n_modes)
    ts = loop.nodes(n_quad)
    x = loop.positions(ts)   # (q, d, n)
    v = loop.velocities(ts)
    w = loop.T / n_quad

    diff = x[:, :, :, None] - x[:, :, None, :]
    s = np.einsum("qcij,qcij->qij", diff, diff)
    iu = np.triu_indices(sys.n, 1)
    spairs = s[:, iu[0], iu[1]]
    if spairs.min() < collision_floor**2:
        raise CollisionAtNode(
            f"minimal node distance {np.sqrt(max(spairs.min(), 0.0)):.3e} "
            "below the collision floor"
        )
    mm = sys.m[iu[0]] * sys.m[iu[1]]
    U = (mm * sys.phi(spairs)).sum(axis=1)
    K = np.einsum("i,qci,qci->q", sys.m, v, v)
    S = float(w * (0.5 * K + U).sum())

    # dU/dx at each node: m_j m_l Phi'(s) 2 (x_j - x_l) summed over partners
    dphi = np.zeros_like(s)
    off = ~np.eye(sys.n, dtype=bool)
    dphi[:, off] = sys.dphi(s[:, off])
    wgt = dphi * np.outer(sys.m, sys.m)[None, :, :]
    fx = 2.0 * (np.einsum("qij,qci->qci", wgt, x) - np.einsum("qij,qcj->qci", wgt, x))
    mv = sys.m[None, None, :] * v

    cos, sin = _trig(loop.n_modes, loop.T, ts)
    kw = np.arange(loop.n_modes + 1) * (2.0 * np.pi / loop.T)
    g_cos = w * (np.einsum("qci,qk->cik", fx, cos) - np.einsum("qci,qk->cik", mv, sin) * kw)
    g_sin = w * (np.einsum("qci,qk->cik", fx, sin) + np.einsum("qci,qk->cik", mv, cos) * kw)
    return S, np.concatenate([g_cos.ravel(), g_sin.ravel()])


# ---------------------------------------------------------------------------
# minimization


@dataclass
class MinimizeOptions:
    gtol: float = 1e-6
    max_iter: int = 4000
    n_quad: int = 256
    dist_floor: float = None   # default: 1e-3 of the seed's mean distance
    memory: int = 12
    restarts: int = 3
    seed: int = 0


def _min_node_distance(loop, n_quad):
    x = loop.positions(loop.nodes(n_quad))
    diff = x[:, :, :, None] - x[:, :, None, :]
    s = np.einsum("qcij,qcij->qij", diff, diff)
    iu = np.triu_indices(loop.n, 1)
    return float(np.sqrt(s[:, iu[0], iu[1]].min()))


def _mean_distance(loop, n_quad):
    x = loop.positions(loop.nodes(n_quad))
    diff = x[:, :, :, None] - x[:, :, None, :]
    s = np.einsum("qcij,qcij->qij", diff, diff)
    iu = np.triu_indices(loop.n, 1)
    return float(np.sqrt(s[:, iu[0], iu[1]]).mean())


def minimize_action(seed_loop, sym, opts=None):
    """Minimize the action over the symmetry class of the seed.

    Limited-memory quasi-Newton on the invariant coefficient vector with
    backtracking line search; steps whose minimal node distance falls below
    the distance floor are rejected.  On stall the memory is dropped and the
    iterate jittered (deterministically); raises NoConvergence when the
    projected-gradient norm never reaches gtol, CollisionApproach when the
    floor blocks every step.
    """
    opts = opts or MinimizeOptions()
    Z, template = invariant_basis(sym, seed_loop.sys, seed_loop.T, seed_loop.n_modes)
    floor = opts.dist_floor
    if floor is None:
        floor = 1e-3 * _mean_distance(seed_loop, 64)

    proj_seed = project_symmetry(seed_loop, sym)
    xi = Z.T @ proj_seed.params()

    def evaluate(xi_vec):
        loop = template.with_params(Z @ xi_vec)
        if _min_node_distance(loop, opts.n_quad) < floor:
            return np.inf, None
        S, g = action_value_and_gradient(loop, opts.n_quad)
        return S, Z.T @ g

    f, g = evaluate(xi)
    if not np.isfinite(f):
        raise CollisionApproach("seed loop is below the distance floor")

    rng = np.random.default_rng(opts.seed)
    s_hist, y_hist = [], []
    restarts_left = opts.restarts
    for _ in range(opts.max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm <= opts.gtol:
            return template.with_params(Z @ xi)

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s_k, y_k in zip(reversed(s_hist), reversed(y_hist)):
            a_k = (s_k @ q) / (y_k @ s_k)
            q -= a_k * y_k
            alphas.append(a_k)
        if y_hist:
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        else:
            q *= 1.0 / max(gnorm, 1.0)
        for (s_k, y_k), a_k in zip(zip(s_hist, y_hist), reversed(alphas)):
            b_k = (y_k @ q) / (y_k @ s_k)
            q += (a_k - b_k) * s_k
        direction = -q
        if direction @ g >= 0:
            direction = -g
            s_hist, y_hist = [], []

        step = 1.0
        accepted = False
        for _ in range(40):
            f_new, g_new = evaluate(xi + step * direction)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * (direction @ g):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if restarts_left > 0:
                restarts_left -= 1
                s_hist, y_hist = [], []
                jitter = 1e-6 * max(np.linalg.norm(xi), 1.0)
                for _ in range(20):
                    cand = xi + jitter * rng.standard_normal(xi.size)
                    f_c, g_c = evaluate(cand)
                    if np.isfinite(f_c):
                        xi, f, g = cand, f_c, g_c
                        break
                else:
                    raise CollisionApproach("distance floor blocks every restart")
                continue
            raise NoConvergence(
                f"line search stalled at gradient norm {np.linalg.norm(g):.3e}"
            )

        s_k = step * direction
        y_k = g_new - g
        if s_k @ y_k > 1e-12 * np.linalg.norm(s_k) * np.linalg.norm(y_k):
            s_hist.append(s_k)
            y_hist.append(y_k)
            if len(s_hist) > opts.memory:
                s_hist.pop(0)
                y_hist.pop(0)
        xi = xi + s_k
        f, g = f_new, g_new

    raise NoConvergence(f"gradient norm {np.linalg.norm(g):.3e} after max_iter")


# ---------------------------------------------------------------------------
# verification


SQUARE_PATTERN = np.sort(np.array([1.0, 1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0)]))
TETRA_PATTERN = np.ones(6)


def shape_distance(x, pattern):
    """Distance of the sorted normalized mutual-distance vector to a pattern."""
    diff = x[:, :, None] - x[:, None, :]
    n = x.shape[1]
    iu = np.triu_indices(n, 1)
    dists = np.sort(np.sqrt(np.einsum("cij,cij->ij", diff, diff)[iu]))
    p = pattern / np.linalg.norm(pattern)
    return float(np.linalg.norm(dists / np.linalg.norm(dists) - p))


@dataclass
class LoopReport:
    action: float
    eom_residual: float
    min_distance: float
    symmetry_defect: float | None
    square_events: list = field(default_factory=list)
    tetra_events: list = field(default_factory=list)
    planarity: float = 0.0   # rms distance to the best-fitting fixed plane


def _local_minima_below(ts, vals, tol):
    events = []
    for q in range(ts.size):
        prev_v, next_v = vals[q - 1], vals[(q + 1) % ts.size]
        if vals[q] < tol and vals[q] <= prev_v and vals[q] < next_v:
            events.append(q)
    return events


def _square_tetra_events(loop, n_scan, tol):
    """Alternating square/tetrahedron passages of a 4-body loop.

    Square events are the local minima of the square shape distance below
    tol.  The oscillation visits the tetrahedral shape between consecutive
    square passages (a visit may cross the exactly-regular shape more than
    once); each visit is reported once, at its closest approach, provided
    that approach is below tol.
    """
    ts = loop.nodes(n_scan)
    x = loop.positions(ts)
    d_sq = np.array([shape_distance(x[q], SQUARE_PATTERN) for q in range(n_scan)])
    d_te = np.array([shape_distance(x[q], TETRA_PATTERN) for q in range(n_scan)])
    sq_idx = _local_minima_below(ts, d_sq, tol)
    squares = [float(ts[q]) for q in sq_idx]
    tetras = []
    if len(sq_idx) >= 2:
        bounds = sq_idx + [sq_idx[0] + n_scan]
        for a, b in zip(bounds[:-1], bounds[1:]):
            window = np.arange(a + 1, b) % n_scan
            if window.size == 0:
                continue
            q_best = window[np.argmin(d_te[window])]
            if d_te[q_best] < tol:
                tetras.append(float(ts[q_best]))
    else:
        tetras = [float(ts[q]) for q in _local_minima_below(ts, d_te, tol)]
    return squares, tetras


def verify_loop(loop, sym=None, n_quad=None, shape_tol=1e-2, n_scan=2048):
    """Residual report for a loop.

    EOM residual compares the spectral second derivative with 2 x A at the
    quadrature nodes (relative to the acceleration scale); for four bodies
    the square passages are the local minima of the square shape distance
    below shape_tol and each tetrahedral visit between consecutive squares
    is reported at its closest approach.
    """
    sys = loop.sys
    if n_quad is None:
        n_quad = max(256, 8 * loop.n_modes)
    ts = loop.nodes(n_quad)
    x = loop.positions(ts)
    acc = loop.accelerations(ts)
    scale = np.abs(acc).max()
    resid = 0.0
    for q in range(n_quad):
        diff = x[q][:, :, None] - x[q][:, None, :]
        s = np.einsum("cij,cij->ij", diff, diff)
        A = interaction_matrix_from_s(s, sys)
        resid = max(resid, np.abs(acc[q] - 2.0 * x[q] @ A).max())
    eom = resid / scale

    S, _ = action_value_and_gradient(loop, n_quad)
    min_dist = _min_node_distance(loop, n_quad)

    defect = None
    if sym is not None:
        proj = project_symmetry(loop, sym)
        defect = float(max(np.abs(proj.cos_modes - loop.cos_modes).max(),
                           np.abs(proj.sin_modes - loop.sin_modes).max()))

    squares, tetras = [], []
    if loop.n == 4:
        squares, tetras = _square_tetra_events(loop, n_scan, shape_tol)

    xs = loop.positions(loop.nodes(min(n_scan, 512)))
    flat = xs.transpose(1, 0, 2).reshape(loop.d, -1)
    sv = np.linalg.svd(flat - flat.mean(axis=1, keepdims=True), compute_uv=False)
    planarity = float(sv[-1] / sv[0]) if loop.d > 2 else 0.0

    return LoopReport(S, float(eom), min_dist, defect, squares, tetras, planarity)


# ---------------------------------------------------------------------------
# seeds


def square_relative_equilibrium_loop(T, sys, n_modes, vertical_kick=0.0):
    """Four equal masses on a rotating square, one revolution per period.

    The planar loop is the exact relative equilibrium of the square
    (harmonic one); vertical_kick adds a first-harmonic vertical
    oscillation with alternating sign along the square, which seeds the
    square/tetrahedron oscillation class.
    """
    if sys.n != 4:
        raise ValidationError("square seed needs four bodies")
    m = sys.m[0]
    if np.abs(sys.m - m).max() > 1e-12 * m:
        raise ValidationError("square seed needs equal masses")
    w = 2.0 * np.pi / T
    # radius from the central-configuration multiplier: w^2 = U / I
    R = (sys.G * m * (2.0 * np.sqrt(2.0) + 1.0) / (4.0 * w**2)) ** (1.0 / 3.0)
    a = np.zeros((3, 4, n_modes + 1))
    b = np.zeros((3, 4, n_modes + 1))
    for i in range(4):
        phase = 0.5 * np.pi * i
        # R cos(wt + phase), R sin(wt + phase)
        a[0, i, 1] = R * np.cos(phase)
        b[0, i, 1] = -R * np.sin(phase)
        a[1, i, 1] = R * np.sin(phase)
        b[1, i, 1] = R * np.cos(phase)
        b[2, i, 1] = vertical_kick * (-1.0) ** i
    return Loop(T, a, b, sys)


def circular_two_body_loop(T, sys, n_modes):
    """The circular solution of two bodies with one revolution per period."""
    if sys.n != 2:
        raise ValidationError("two bodies required")
    w = 2.0 * np.pi / T
    rho = (sys.G * sys.M / w**2) ** (1.0 / 3.0)  # separation
    a = np.zeros((2, 2, n_modes + 1))
    b = np.zeros((2, 2, n_modes + 1))
    r1 = rho * sys.m[1] / sys.M
    r2 = -rho * sys.m[0] / sys.M
    for i, r in enumerate((r1, r2)):
        a[0, i, 1] = r
        b[1, i, 1] = r
    return Loop(T, a, b, sys)
