import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm, null_space

from entfeedback.algebra import (
    OPS,
    conserved_R,
    devectorize,
    ket_projector,
    random_density_matrix,
    singlet,
    trace_distance,
    vectorize,
)
from entfeedback.master import (
    AffineGenerator,
    AmbiguousSteadyStateError,
    IntegrationDivergedError,
    Mode,
    analytic_stationary,
    build_generator,
    generator_from_rhs,
    integrate_me,
    markovian_me_rhs,
    me_rhs,
    rhs_for,
    steady_state,
    symmetric_stationary,
)

seeds = st.integers(0, 2**32 - 1)
omegas = st.floats(-3, 3, allow_nan=False)
lams = st.floats(-2, 2, allow_nan=False)


def liouvillian(H, Ls):
    """Column-stacking superoperator assembled from Kronecker products."""
    I = np.eye(4)
    S = -1j * (np.kron(I, H) - np.kron(H.T, I))
    for L in Ls:
        LdL = L.conj().T @ L
        S += np.kron(L.conj(), L) - 0.5 * (np.kron(I, LdL) + np.kron(LdL.T, I))
    return S


def apply(S, rho):
    return (S @ rho.reshape(-1, order="F")).reshape(4, 4, order="F")


def oracle_generator(omega, lam, theta=0.0):
    c = np.exp(-1j * theta) * OPS.Sigma
    F = OPS.Sigma_x
    H = omega * F + 0.5 * lam * (c.conj().T @ F + F @ c)
    S = liouvillian(H, [c - 1j * lam * F])
    rho0 = devectorize(np.zeros(15))
    M = np.empty((15, 15))
    for k in range(15):
        e = np.zeros(15)
        e[k] = 1
        M[:, k] = vectorize(apply(S, devectorize(e) - rho0))
    return M, -vectorize(apply(S, rho0)), S


def oracle_long_time(S, rho0, t=400.0):
    return apply(expm(t * S), rho0)


@pytest.mark.parametrize("omega,lam", [(0.4, 0.0), (1.7, 0.0), (0.4, -0.8), (2.2, 1.3), (-0.6, 0.5)])
def test_generator_matches_kronecker_oracle(omega, lam):
    mode = Mode.NONE if lam == 0 else Mode.MARKOVIAN
    gen = build_generator(omega, lam, mode)
    M, w, _ = oracle_generator(omega, lam)
    assert np.allclose(gen.M, M, atol=1e-13)
    assert np.allclose(gen.w, w, atol=1e-13)


def test_feedback_generator_reduces_to_no_feedback():
    for omega in (0.0, 0.3, 2.5):
        a = build_generator(omega, 0.0, Mode.NONE)
        b = build_generator(omega, 0.0, Mode.MARKOVIAN)
        assert np.max(np.abs(a.M - b.M)) < 1e-14
        assert np.max(np.abs(a.w - b.w)) < 1e-14


def test_quadrature_generator_matches_oracle():
    gen = build_generator(0.4, -0.8, Mode.MARKOVIAN, quadrature=np.pi / 2)
    M, w, _ = oracle_generator(0.4, -0.8, np.pi / 2)
    assert np.allclose(gen.M, M, atol=1e-8)
    assert np.allclose(gen.w, w, atol=1e-8)


def test_generator_rejects_bayesian_and_nonfinite():
    with pytest.raises(ValueError):
        build_generator(1.0, 1.0, Mode.BAYESIAN)
    with pytest.raises(ValueError):
        build_generator(np.nan, 0.0)
    with pytest.raises(ValueError):
        rhs_for("bayesian", 1.0)


@given(seeds, omegas, lams)
def test_affine_form_reproduces_rhs(seed, omega, lam):
    rho = random_density_matrix(np.random.default_rng(seed))
    gen = build_generator(omega, lam, Mode.MARKOVIAN)
    assert np.allclose(gen.rhs(vectorize(rho)),
                       vectorize(markovian_me_rhs(rho, omega, lam)), atol=1e-12)


@given(seeds, omegas, lams, st.floats(0, 2 * np.pi))
def test_rhs_trace_free_hermitian(seed, omega, lam, theta):
    rho = random_density_matrix(np.random.default_rng(seed))
    for d in (me_rhs(rho, omega), markovian_me_rhs(rho, omega, lam, theta)):
        assert abs(np.trace(d)) < 1e-12
        assert np.allclose(d, d.conj().T, atol=1e-12)


@given(omegas, lams, st.floats(0, 2 * np.pi))
def test_singlet_is_fixed_point(omega, lam, theta):
    assert np.allclose(me_rhs(singlet(), omega), 0, atol=1e-14)
    assert np.allclose(markovian_me_rhs(singlet(), omega, lam, theta), 0, atol=1e-14)


@given(seeds, omegas, lams)
def test_rhs_conserves_R(seed, omega, lam):
    rho = random_density_matrix(np.random.default_rng(seed))
    assert abs(np.trace(markovian_me_rhs(rho, omega, lam) @ OPS.conserved_op)) < 1e-12


def naive_rk4(gen, v, dt, n):
    out = [v]
    for _ in range(n):
        k1 = gen.rhs(v)
        k2 = gen.rhs(v + 0.5 * dt * k1)
        k3 = gen.rhs(v + 0.5 * dt * k2)
        k4 = gen.rhs(v + dt * k3)
        v = v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(v)
    return out


def test_integrate_me_equals_stepwise_rk4():
    gen = build_generator(0.9, -0.4, Mode.MARKOVIAN)
    rho0 = ket_projector("10")
    path = integrate_me(rho0, gen, 1.05, dt=0.01, stride=10)
    ref = naive_rk4(gen, vectorize(rho0), 0.01, 105)
    assert np.allclose(path.times, [0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.05])
    for t, rho in zip(path.times, path.states):
        assert np.allclose(vectorize(rho), ref[int(round(t / 0.01))], atol=1e-13)


def test_integrate_me_matches_exponential():
    gen = build_generator(0.4, -0.8, Mode.MARKOVIAN)
    _, _, S = oracle_generator(0.4, -0.8)
    rho0 = ket_projector("00")
    path = integrate_me(rho0, gen, 5.0, dt=1e-3)
    assert trace_distance(path.states[-1], apply(expm(5.0 * S), rho0)) < 1e-10


@given(seeds, st.floats(0, 3), lams)
def test_integrate_me_conserves_R(seed, omega, lam):
    rho0 = random_density_matrix(np.random.default_rng(seed))
    path = integrate_me(rho0, build_generator(omega, lam, Mode.MARKOVIAN), 2.0, dt=1e-2, stride=20)
    R = [conserved_R(r) for r in path.states]
    assert np.max(np.abs(np.array(R) - conserved_R(rho0))) < 1e-8


def test_integrate_me_reports_divergence_step():
    gen = build_generator(1.0, 2.0, Mode.MARKOVIAN)
    with pytest.raises(IntegrationDivergedError) as exc:
        integrate_me(ket_projector("00"), gen, 50.0, dt=0.5, stride=1)
    assert exc.value.step >= 1


def test_integrate_me_argument_checks():
    gen = build_generator(1.0)
    with pytest.raises(ValueError):
        integrate_me(ket_projector("00"), gen, 1.0, dt=0)
    with pytest.raises(ValueError):
        integrate_me(ket_projector("00"), gen, 1.0, stride=0)


def test_no_feedback_closed_form_entries():
    # population of |11> is 4w^4 / (12 w^4 + 4 w^2 + 1)
    w = 0.7
    st_ = analytic_stationary(w)
    assert np.isclose(st_.rho_s[0, 0].real, 4 * w**4 / (12 * w**4 + 4 * w**2 + 1))
    assert np.allclose(analytic_stationary(0.0).rho_s, ket_projector("00"))


@pytest.mark.parametrize("omega,lam", [(0.4, 0.0), (0.4, -0.8), (1.5, 0.7), (3.0, -1.9)])
@pytest.mark.parametrize("R", [0.0, 1.0, 2.0])
def test_closed_form_matches_exponential_oracle(omega, lam, R):
    _, _, S = oracle_generator(omega, lam)
    rho0 = 0.5 * R * ket_projector("00") + 0.5 * (2 - R) * singlet()
    mode = Mode.MARKOVIAN if lam else Mode.NONE
    st_ = analytic_stationary(omega, lam, mode, R)
    assert trace_distance(st_.rho_inf, oracle_long_time(S, rho0)) < 1e-9


def test_closed_form_R1_from_ket10_matches_oracle():
    _, _, S = oracle_generator(0.8, -0.5)
    st_ = analytic_stationary(0.8, -0.5, Mode.MARKOVIAN, 1.0)
    assert trace_distance(st_.rho_inf, oracle_long_time(S, ket_projector("10"))) < 1e-9


def test_closed_form_is_null_vector():
    for omega, lam in [(0.3, 0.2), (2.0, -1.0)]:
        gen = build_generator(omega, lam, Mode.MARKOVIAN)
        v = vectorize(analytic_stationary(omega, lam, Mode.MARKOVIAN).rho_s)
        assert np.max(np.abs(gen.rhs(v))) < 1e-12


def test_analytic_stationary_argument_checks():
    with pytest.raises(ValueError):
        analytic_stationary(1.0, R=2.5)
    with pytest.raises(ValueError):
        analytic_stationary(1.0, 0.3, Mode.NONE)
    with pytest.raises(ValueError):
        analytic_stationary(1.0, 0.3, Mode.BAYESIAN)


@pytest.mark.parametrize("label", ["00", "10", "11"])
def test_steady_state_solve_matches_oracle(label):
    gen = build_generator(1.1, 0.6, Mode.MARKOVIAN)
    _, _, S = oracle_generator(1.1, 0.6)
    rho0 = ket_projector(label)
    st_ = steady_state(rho0, gen)
    assert trace_distance(st_.rho_inf, oracle_long_time(S, rho0)) < 1e-9
    assert np.isclose(st_.R, conserved_R(rho0))


def test_steady_state_degenerate_undriven_limit():
    # omega = lambda = 0: the symmetric part decays to |00>, the singlet
    # is dark and so is the coherence between the two.
    gen = build_generator(0.0)
    _, _, S = oracle_generator(0.0, 0.0)
    assert null_space(gen.M).shape[1] == 3
    psi = np.array([0, 1, 0, 1]) / np.sqrt(2)
    for rho0 in (ket_projector("10"), np.outer(psi, psi).astype(complex)):
        st_ = steady_state(rho0, gen)
        assert trace_distance(st_.rho_inf, oracle_long_time(S, rho0)) < 1e-9
    st_ = steady_state(ket_projector("10"), gen)
    assert np.allclose(st_.rho_inf, 0.5 * ket_projector("00") + 0.5 * singlet())
    assert np.allclose(st_.rho_s, ket_projector("00"))


def test_steady_state_rejects_undamped_oscillation():
    M = np.zeros((15, 15))
    M[1, 2], M[2, 1] = 1.0, -1.0
    gen = AffineGenerator(M, np.zeros(15), 0.0, 0.0, Mode.NONE)
    with pytest.raises(AmbiguousSteadyStateError):
        steady_state(ket_projector("00"), gen)


def test_steady_state_rejects_regular_generator():
    gen = AffineGenerator(-np.eye(15), np.zeros(15), 0.0, 0.0, Mode.NONE)
    with pytest.raises(AmbiguousSteadyStateError):
        steady_state(ket_projector("00"), gen)


def test_symmetric_stationary_quadrature_path():
    st_ = symmetric_stationary(0.4, -0.8, Mode.MARKOVIAN, 2.0, quadrature=np.pi / 2)
    _, _, S = oracle_generator(0.4, -0.8, np.pi / 2)
    assert trace_distance(st_.rho_inf, oracle_long_time(S, ket_projector("00"))) < 1e-9


def test_generator_from_rhs_is_exact_for_affine_maps():
    M, w = generator_from_rhs(rhs_for("none", 0.8))
    gen = build_generator(0.8)
    assert np.allclose(M, gen.M, atol=1e-10) and np.allclose(w, gen.w, atol=1e-10)
