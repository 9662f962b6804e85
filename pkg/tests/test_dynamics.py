import numpy as np
import pytest

from conftest import equilateral, isosceles, random_state, tame_scenario
from nbodyred.errors import CollisionError, InvalidStructure
from nbodyred.geometry import (
    Bivector,
    Configuration,
    MassSystem,
    RelativeState,
    State,
    angular_momentum,
    bivector_norm_and_frequencies,
    gram_form,
    hermitian_from_bivector,
    mass_dot,
    wintner_conley,
)
from nbodyred.dynamics import (
    audit_invariants,
    complex_schwarz_gap,
    dziobek_ranks,
    integrate_absolute,
    integrate_reduced,
    reduced_rhs,
    saari_decomposition,
    scalar_invariants,
    sundman_function,
    sundman_gap,
)

SYS2 = MassSystem([1.0, 1.0])


def circular_two_body():
    x = Configuration([[-0.5, 0.5], [0.0, 0.0]], SYS2)
    y = Configuration([[0.0, 0.0], [-np.sqrt(0.5), np.sqrt(0.5)]], SYS2)
    return State(x, y)


CIRC_PERIOD = 2.0 * np.pi / np.sqrt(2.0)  # separation 1, G M = 2


# ---------------------------------------------------------------------------
# absolute integration


def test_circular_orbit_closes():
    z0 = circular_two_body()
    traj = integrate_absolute(z0, SYS2, CIRC_PERIOD, tol=1e-12, samples=65)
    zf = traj.states[-1]
    assert np.abs(zf.x.r - z0.x.r).max() < 1e-8
    assert np.abs(zf.y.r - z0.y.r).max() < 1e-8


def test_center_of_mass_stays_fixed():
    rng = np.random.default_rng(0)
    sys, z0 = tame_scenario(rng, 4, 3, 5.0)
    traj = integrate_absolute(z0, sys, 5.0, tol=1e-10, samples=33)
    for z in traj.states:
        assert np.abs(z.x.r @ sys.m).max() < 1e-12
        assert np.abs(z.y.r @ sys.m).max() < 1e-12


def test_homothetic_release_stays_homothetic():
    sys = MassSystem([1.0, 1.0, 1.0])
    x0 = equilateral(sys)
    z0 = State(x0, Configuration(np.zeros((2, 3)), sys))
    # released at rest; collapse time ~ 0.64 for I=1, U=3
    traj = integrate_absolute(z0, sys, 0.5, tol=1e-12, samples=21)
    for z in traj.states:
        nu = mass_dot(z.x.r, x0.r, sys.m)  # I(x0) = 1
        assert np.abs(z.x.r - nu * x0.r).max() < 1e-9
    assert traj.states[-1].x.r[0, 0] / x0.r[0, 0] < 1.0  # shrinking


def test_homothetic_release_collides():
    sys = MassSystem([1.0, 1.0, 1.0])
    z0 = State(equilateral(sys), Configuration(np.zeros((2, 3)), sys))
    with pytest.raises(CollisionError):
        integrate_absolute(z0, sys, 2.0, tol=1e-10, samples=33)


def test_radial_infall_j_decreasing():
    x = Configuration([[-1.0, 1.0], [0.0, 0.0]], SYS2)
    z0 = State(x, Configuration(np.zeros((2, 2)), SYS2))
    traj = integrate_absolute(z0, SYS2, 1.0, tol=1e-10, samples=33)
    J = [scalar_invariants(z, SYS2)[1] for z in traj.states]
    assert np.all(np.diff(J) < 0.0)


def test_leapfrog_energy_bounded():
    z0 = circular_two_body()
    traj = integrate_absolute(z0, SYS2, 5 * CIRC_PERIOD, method="leapfrog",
                              dt=1e-3, samples=65)
    H = np.array([scalar_invariants(z, SYS2)[4] for z in traj.states])
    assert np.abs(H - H[0]).max() < 1e-5 * abs(H[0])


def test_lyapunov_j_increasing_for_nonnegative_energy():
    # kappa > -1 and H >= 0 force J to increase along the flow
    rng = np.random.default_rng(1)
    for _ in range(5):
        sys, z0 = tame_scenario(rng, 3, 3, 6.0)
        if scalar_invariants(z0, sys)[4] < 0.0:
            continue
        traj = integrate_absolute(z0, sys, 6.0, tol=1e-10, samples=65)
        J = [scalar_invariants(z, sys)[1] for z in traj.states]
        assert np.all(np.diff(J) > 0.0)


# ---------------------------------------------------------------------------
# reduced system


def test_reduced_rhs_relative_equilibrium_fixed_point():
    sys = MassSystem([1.0, 1.0, 1.0])
    x = isosceles(sys)
    beta = gram_form(x)
    A = wintner_conley(x, sys)
    rel = RelativeState(beta, np.zeros((3, 3)), -2.0 * beta @ A, np.zeros((3, 3)))
    drv = reduced_rhs(rel, sys)
    for a in (drv.beta, drv.gamma, drv.delta, drv.rho):
        assert np.abs(a).max() < 1e-13


def test_reduced_rhs_matches_absolute_flow_differences():
    rng = np.random.default_rng(2)
    sys, z0 = tame_scenario(rng, 3, 3, 0.1)
    rel0 = RelativeState.from_state(z0)
    drv = reduced_rhs(rel0, sys)
    h = 1e-5
    plus = integrate_absolute(z0, sys, h, tol=1e-13, samples=2).states[-1]
    minus_traj = integrate_absolute(
        State(z0.x, Configuration(-z0.y.r, sys)), sys, h, tol=1e-13, samples=2)
    minus = minus_traj.states[-1]  # time reversal
    rel_p = RelativeState.from_state(plus)
    rel_m = RelativeState.from_state(
        State(minus.x, Configuration(-minus.y.r, sys)))
    for field in ("beta", "gamma", "delta", "rho"):
        fd = (getattr(rel_p, field) - getattr(rel_m, field)) / (2.0 * h)
        assert np.abs(fd - getattr(drv, field)).max() < 1e-6


def test_reduced_rhs_scaled_beta_only():
    sys = MassSystem([1.0, 1.0, 1.0])
    beta = 1.7**2 * gram_form(equilateral(sys))
    zero = np.zeros((3, 3))
    drv = reduced_rhs(RelativeState(beta, zero, zero, zero), sys)
    assert np.abs(drv.beta).max() == 0.0  # beta_dot = 2 gamma = 0


def test_reduced_matches_absolute_run():
    rng = np.random.default_rng(3)
    sys, z0 = tame_scenario(rng, 3, 3, 5.0)
    ta = integrate_absolute(z0, sys, 5.0, tol=1e-12, samples=41)
    tr = integrate_reduced(RelativeState.from_state(z0), sys, 5.0,
                           tol=1e-12, samples=41)
    err = 0.0
    for za, rel in zip(ta.states, tr.states):
        ra = RelativeState.from_state(za)
        for field in ("beta", "gamma", "delta", "rho"):
            err = max(err, np.abs(getattr(ra, field) - getattr(rel, field)).max())
    assert err < 1e-6


def test_reduced_circular_beta_constant():
    rel0 = RelativeState.from_state(circular_two_body())
    traj = integrate_reduced(rel0, SYS2, CIRC_PERIOD, tol=1e-12, samples=33)
    for rel in traj.states:
        assert np.abs(rel.beta - rel0.beta).max() < 1e-8


def test_reduced_relative_equilibrium_is_fixed_point():
    sys = MassSystem([1.0, 1.0, 1.0])
    x = isosceles(sys)
    beta = gram_form(x)
    A = wintner_conley(x, sys)
    rel0 = RelativeState(beta, np.zeros((3, 3)), -2.0 * beta @ A, np.zeros((3, 3)))
    traj = integrate_reduced(rel0, sys, 3.0, tol=1e-12, samples=17)
    for rel in traj.states:
        for field in ("beta", "gamma", "delta", "rho"):
            assert np.abs(getattr(rel, field) - getattr(rel0, field)).max() < 1e-9


# ---------------------------------------------------------------------------
# audits


def test_audit_drifts_small():
    rng = np.random.default_rng(4)
    sys, z0 = tame_scenario(rng, 4, 3, 10.0)
    traj = integrate_absolute(z0, sys, 10.0, tol=1e-10, samples=101)
    rep = audit_invariants(traj, sys)
    assert rep.energy_drift < 1e-8
    assert rep.momentum_drift < 1e-8
    assert np.isfinite(rep.lagrange_jacobi_residual)


def test_audit_scaling_integral_kappa_minus_one():
    rng = np.random.default_rng(5)
    sys, z0 = tame_scenario(rng, 3, 3, 8.0, kappa=-1.0)
    traj = integrate_absolute(z0, sys, 8.0, tol=1e-11, samples=101)
    rep = audit_invariants(traj, sys)
    assert rep.scaling_integral_drift is not None
    assert rep.scaling_integral_drift < 1e-8


def test_audit_lagrange_jacobi_residual():
    rng = np.random.default_rng(6)
    for kappa in (-0.5, -1.0, -2.0 / 3.0):
        sys, z0 = tame_scenario(rng, 3, 3, 4.0, kappa=kappa)
        traj = integrate_absolute(z0, sys, 4.0, tol=1e-11, samples=1601)
        rep = audit_invariants(traj, sys)
        assert rep.lagrange_jacobi_residual < 1e-6


def test_audit_homothetic_motion_sundman_zero():
    sys = MassSystem([1.0, 1.0, 1.0])
    z0 = State(equilateral(sys), Configuration(np.zeros((2, 3)), sys))
    traj = integrate_absolute(z0, sys, 0.5, tol=1e-12, samples=33)
    for z in traj.states:
        I, J, K, _, _ = scalar_invariants(z, sys)
        assert bivector_norm_and_frequencies(angular_momentum(z, sys))[0] < 1e-12
        assert abs(I * K - J * J) < 1e-10 * max(I * K, 1.0)


def test_sundman_function_formula():
    rng = np.random.default_rng(7)
    sys, z = random_state(rng, 4, 3)
    I, J, K, _, H = scalar_invariants(z, sys)
    normC, _ = bivector_norm_and_frequencies(angular_momentum(z, sys))
    expected = (J * J + normC**2) / np.sqrt(I) - 2.0 * np.sqrt(I) * H
    assert sundman_function(z, sys) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# Sundman and Schwarz gaps


def test_sundman_gap_homothetic_zero():
    rng = np.random.default_rng(8)
    sys, z = random_state(rng, 4, 3)
    zh = State(z.x, Configuration(0.6 * z.x.r, sys))
    I, _, K, _, _ = scalar_invariants(zh, sys)
    assert abs(sundman_gap(zh, sys)) < 1e-12 * I * K


def test_sundman_gap_nonnegative_random():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        n, d = rng.integers(2, 6), rng.integers(1, 5)
        sys, z = random_state(rng, n, d)
        I, _, K, _, _ = scalar_invariants(z, sys)
        assert sundman_gap(z, sys) >= -1e-12 * I * K


def test_sundman_equality_complex_homothetic():
    # planar state with y = (J/I + i c/I) x under the quarter turn
    sys = MassSystem([1.0, 2.0, 3.0])
    x = Configuration(np.random.default_rng(10).normal(size=(2, 3)), sys)
    Jq = np.array([[0.0, -1.0], [1.0, 0.0]])
    y = Configuration(0.3 * x.r + 0.8 * (Jq @ x.r), sys)
    z = State(x, y)
    I, _, K, _, _ = scalar_invariants(z, sys)
    assert abs(sundman_gap(z, sys)) < 1e-12 * I * K


def test_schwarz_gap_with_omega_c_is_sundman():
    rng = np.random.default_rng(11)
    sys, z = random_state(rng, 4, 4)
    C = angular_momentum(z, sys)
    _, omega_c, _ = hermitian_from_bivector(C)
    out = complex_schwarz_gap(z, Bivector(omega_c), sys)
    assert out.gap == pytest.approx(sundman_gap(z, sys), rel=1e-10)


def test_schwarz_gap_zero_omega():
    rng = np.random.default_rng(12)
    sys, z = random_state(rng, 4, 3)
    I, J, K, _, _ = scalar_invariants(z, sys)
    out = complex_schwarz_gap(z, Bivector(np.zeros((3, 3))), sys)
    assert out.gap == pytest.approx(I * K - J * J, rel=1e-12)
    assert out.gap >= 0.0


def test_schwarz_gap_dominates_sundman():
    rng = np.random.default_rng(13)
    for _ in range(50):
        sys, z = random_state(rng, 4, 4)
        w = Bivector(rng.normal(size=(4, 4)))
        omega, _, _ = hermitian_from_bivector(w)  # a valid structure
        out = complex_schwarz_gap(z, Bivector(omega), sys)
        assert out.gap >= sundman_gap(z, sys) - 1e-10 * abs(out.gap)


def test_schwarz_equality_recovers_omega_c():
    rng = np.random.default_rng(14)
    sys = MassSystem([1.0, 1.5, 2.0, 0.7])
    seed = Bivector(rng.normal(size=(4, 4)))
    J, omega, F = hermitian_from_bivector(seed)
    x = Configuration(J @ (-J @ rng.normal(size=(4, 4))), sys)  # columns in Im J
    y = Configuration(0.4 * x.r + 1.1 * (J @ x.r), sys)
    z = State(x, y)
    out = complex_schwarz_gap(z, Bivector(omega), sys)
    assert out.equality
    assert out.omega_mismatch is not None and out.omega_mismatch < 1e-10


def test_schwarz_invalid_structure_rejected():
    rng = np.random.default_rng(15)
    sys, z = random_state(rng, 3, 3)
    with pytest.raises(InvalidStructure):
        complex_schwarz_gap(z, Bivector(2.0 * np.array(
            [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])), sys)
    skew = np.array([[0.0, -0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(InvalidStructure):
        complex_schwarz_gap(z, Bivector(skew), sys)  # Omega^2 != -Id on image


# ---------------------------------------------------------------------------
# Saari decomposition


def test_saari_rigid_rotation():
    rng = np.random.default_rng(16)
    sys, z = random_state(rng, 4, 3)
    w = np.array([[0.0, 0.4, -0.1], [-0.4, 0.0, 0.7], [0.1, -0.7, 0.0]])
    zr = State(z.x, Configuration(w @ z.x.r, sys))
    y_h, y_r, y_d = saari_decomposition(zr, sys)
    assert np.abs(y_h).max() < 1e-12
    assert np.abs(y_d).max() < 1e-10


def test_saari_homothetic():
    rng = np.random.default_rng(17)
    sys, z = random_state(rng, 4, 3)
    zh = State(z.x, Configuration(0.9 * z.x.r, sys))
    y_h, y_r, y_d = saari_decomposition(zh, sys)
    assert np.abs(y_r).max() < 1e-10
    assert np.abs(y_d).max() < 1e-10


def test_saari_pythagoras_and_rotational_bound():
    rng = np.random.default_rng(18)
    for _ in range(100):
        n, d = rng.integers(2, 6), rng.integers(2, 5)
        sys, z = random_state(rng, n, d)
        y_h, y_r, y_d = saari_decomposition(z, sys)
        I, _, K, _, _ = scalar_invariants(z, sys)
        total = sum(mass_dot(v, v, sys.m) for v in (y_h, y_r, y_d))
        assert total == pytest.approx(K, rel=1e-12)
        assert np.abs(y_h + y_r + y_d - z.y.r).max() < 1e-12 * max(1.0, np.abs(z.y.r).max())
        normC, _ = bivector_norm_and_frequencies(angular_momentum(z, sys))
        assert mass_dot(y_r, y_r, sys.m) >= normC**2 / I - 1e-12 * K


# ---------------------------------------------------------------------------
# rank estimates


def test_dziobek_rank_inequalities():
    rng = np.random.default_rng(19)
    for _ in range(1000):
        n, d = rng.integers(2, 6), rng.integers(1, 5)
        sys, z = random_state(rng, n, d)
        rank_c, rank_e = dziobek_ranks(z, sys)
        assert rank_c <= rank_e <= rank_c / 2 + n - 1


def test_zero_momentum_three_bodies_stay_planar():
    rng = np.random.default_rng(20)
    sys = MassSystem(rng.uniform(0.5, 1.5, 3))
    r = rng.normal(size=(3, 3)) * 2.0
    x = Configuration(r, sys)
    y = Configuration(x.r * np.array([0.3, 0.2, 0.25]), sys)  # v_k parallel r_k
    z0 = State(x, y)
    assert bivector_norm_and_frequencies(angular_momentum(z0, sys))[0] < 1e-12
    traj = integrate_absolute(z0, sys, 10.0, tol=1e-10, samples=101)
    for z in traj.states:
        _, rank_e = dziobek_ranks(z, sys)
        assert rank_e <= 2


def test_audit_zero_momentum_run_reports_sane_drift():
    rng = np.random.default_rng(21)
    sys = MassSystem(rng.uniform(0.5, 1.5, 3))
    x = Configuration(rng.normal(size=(3, 3)) * 2.0, sys)
    y = Configuration(x.r * np.array([0.25, 0.2, 0.3]), sys)
    traj = integrate_absolute(State(x, y), sys, 2.0, tol=1e-10, samples=33)
    rep = audit_invariants(traj, sys)
    assert rep.momentum_drift < 1e-8  # noise over the sqrt(I K) scale, not 1/eps
