import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import sqrtm

from conftest import random_unitary
from entfeedback.algebra import (
    InvalidStateError,
    ket_projector,
    random_density_matrix,
    singlet,
)
from entfeedback.entanglement import (
    concurrence,
    concurrence_of_stationary,
    concurrence_psd,
    spin_flip_operator,
)
from entfeedback.master import Mode

seeds = st.integers(0, 2**32 - 1)


def fidelity_oracle(rho):
    """Concurrence from the Hermitian square root sqrt(sqrt(rho) rho~ sqrt(rho))."""
    Y = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])
    tilde = Y @ rho.conj() @ Y
    s = sqrtm(rho)
    ev = np.sort(np.abs(np.linalg.eigvals(sqrtm(s @ tilde @ s))))[::-1]
    return max(0.0, ev[0] - ev[1:].sum())


def test_singlet_is_maximal():
    assert np.isclose(concurrence(singlet()).value, 1.0)


def test_product_ground_state():
    c = concurrence(ket_projector("00"))
    assert c.value == 0.0
    assert np.allclose(c.eigenroots, 0)


def test_half_ground_half_singlet():
    rho = 0.5 * ket_projector("00") + 0.5 * singlet()
    assert abs(concurrence(rho).value - 0.5) < 1e-12


@pytest.mark.parametrize("p", [0.0, 0.2, 1 / 3, 0.5, 0.9, 1.0])
def test_werner_states(p):
    rho = p * singlet() + (1 - p) * np.eye(4) / 4
    assert abs(concurrence(rho).value - max(0.0, (3 * p - 1) / 2)) < 1e-12


@given(seeds)
def test_pure_states(seed):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    a, b, c, d = psi
    expected = 2 * abs(a * d - b * c)
    assert abs(concurrence(np.outer(psi, psi.conj())).value - expected) < 1e-10


@given(seeds, st.sampled_from([1, 2, 3, 4]))
def test_matches_fidelity_oracle(seed, rank):
    rho = random_density_matrix(np.random.default_rng(seed), rank)
    assert abs(concurrence(rho).value - fidelity_oracle(rho)) < 1e-7


@given(seeds)
def test_bounds_and_sorted_roots(seed):
    c = concurrence(random_density_matrix(np.random.default_rng(seed)))
    assert 0.0 <= c.value <= 1.0
    assert np.all(np.diff(c.eigenroots) <= 0) and np.all(c.eigenroots >= 0)


@given(seeds)
def test_local_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(rng, 2)
    U = np.kron(random_unitary(rng), random_unitary(rng))
    assert abs(concurrence(U @ rho @ U.conj().T).value - concurrence(rho).value) < 1e-10


@given(seeds)
def test_product_states_are_separable(seed):
    rng = np.random.default_rng(seed)

    def qubit():
        g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        r = g @ g.conj().T
        return r / np.trace(r)

    assert concurrence(np.kron(qubit(), qubit())).value < 1e-10


def test_ladder_convention_is_phase_of_pauli():
    ladder, pauli = spin_flip_operator("ladder"), spin_flip_operator("pauli")
    ratio = ladder[np.nonzero(pauli)] / pauli[np.nonzero(pauli)]
    assert np.allclose(ratio, ratio[0]) and np.isclose(abs(ratio[0]), 1)


@given(seeds)
def test_convention_equivalence(seed):
    rho = random_density_matrix(np.random.default_rng(seed))
    a = concurrence(rho, "pauli")
    b = concurrence(rho, "ladder")
    assert np.allclose(a.eigenroots, b.eigenroots, atol=1e-12)
    with pytest.raises(ValueError):
        spin_flip_operator("other")


def test_contract_violations():
    with pytest.raises(InvalidStateError):
        concurrence(np.eye(4))
    with pytest.raises(InvalidStateError):
        concurrence(np.diag([1.2, -0.2, 0, 0]))


@given(seeds)
def test_psd_variant_agrees_on_states(seed):
    rho = random_density_matrix(np.random.default_rng(seed))
    assert abs(concurrence_psd(rho) - concurrence(rho).value) < 1e-10


def test_psd_variant_uses_positive_part():
    psi = np.array([0, 1, -1, 0]) / np.sqrt(2)
    bad = 1.05 * np.outer(psi, psi) - 0.05 * ket_projector("11")
    # positive part is 1.05 |singlet><singlet| and concurrence is homogeneous
    assert np.isclose(concurrence_psd(bad), 1.05)


def test_stationary_examples():
    assert concurrence_of_stationary(0.0, 0.0, Mode.NONE, 2.0) == 0.0
    c = concurrence_of_stationary(0.4, 0.0, Mode.NONE, 2.0)
    assert abs(c - 0.11) < 0.01
    assert abs(concurrence_of_stationary(1.3, 0.0, Mode.NONE, 0.0) - 1.0) < 1e-12


def test_stationary_markovian_example():
    # Reference value for the optimal current-feedback operating point.
    c = concurrence_of_stationary(0.4, -0.8, Mode.MARKOVIAN, 2.0)
    assert abs(c - 0.31) < 0.02


def test_stationary_markovian_conjugate_quadrature():
    c = concurrence_of_stationary(0.4, -0.8, Mode.MARKOVIAN, 2.0, quadrature=np.pi / 2)
    assert abs(c - 0.31) < 0.02
