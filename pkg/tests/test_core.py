from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qutritctx import core
from qutritctx.errors import ConsistencyError, UsageError, ValidationError

S2, S3 = np.sqrt(2), np.sqrt(3)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
complex_3x3 = st.tuples(arrays(float, (3, 3), elements=finite), arrays(float, (3, 3), elements=finite))


def _herm(pair):
    a = pair[0] + 1j * pair[1]
    return (a + a.conj().T) / 2


def _ket(pair):
    v = pair[0][0] + 1j * pair[1][0]
    n = np.linalg.norm(v)
    return None if n < 1e-3 else v / n


# --- rays and operators --------------------------------------------------------


def test_catalog_rays():
    assert np.allclose(core.ray(1), [1, 0, 0])
    assert np.allclose(core.ray(5), np.array([1, 0, -S2]) / S3)
    for i in range(1, 10):
        assert abs(np.linalg.norm(core.ray(i)) ** 2 - 1) < 1e-15


def test_catalog_is_read_only():
    with pytest.raises(ValueError):
        core.RAYS[0, 0] = 2


@pytest.mark.parametrize("bad", [0, 10, -1, 2.0, True, "3"])
def test_ray_rejects_bad_index(bad):
    with pytest.raises(UsageError):
        core.ray(bad)


def test_dichotomous_of_first_ray():
    assert np.allclose(core.dichotomous(core.ray(1)), np.diag([-1, 1, 1]))


def test_projector_examples():
    assert np.allclose(core.projector(core.ray(2)), np.diag([0, 1, 0]))
    p9 = core.projector(core.ray(9))
    assert np.allclose(p9 @ core.ray(9), core.ray(9))


def test_unnormalized_ket_rejected():
    with pytest.raises(ValidationError):
        core.projector([1, 1, 0])
    with pytest.raises(ValidationError):
        core.as_ket([1, 0])


@settings(max_examples=60, deadline=None)
@given(complex_3x3)
def test_dichotomous_properties(pair):
    k = _ket(pair)
    if k is None:
        return
    a = core.dichotomous(k)
    assert np.max(np.abs(a @ a - np.eye(3))) < 1e-12
    assert np.allclose(np.linalg.eigvalsh(a), [-1, 1, 1], atol=1e-12)
    assert abs(np.trace(core.projector(k)).real - 1) < 1e-12


def test_expectation_examples():
    rho1 = core.pure_state(core.ray(1))
    assert core.expectation(rho1, core.dichotomous(core.ray(1))) == pytest.approx(-1, abs=1e-15)
    mixed = core.maximally_mixed()
    for i in range(1, 10):
        assert core.expectation(mixed, core.dichotomous(core.ray(i))) == pytest.approx(1 / 3, abs=1e-14)
    # |<1|7>|^2 with |7> = (sqrt2/2, 1/2, 1/2)
    assert core.expectation(rho1, core.projector(core.ray(7))) == pytest.approx(0.5, abs=1e-15)


def test_expectation_rejects_imaginary():
    rho = core.maximally_mixed()
    with pytest.raises(ConsistencyError):
        core.expectation(rho, 1j * np.eye(3))


def test_validators():
    with pytest.raises(ValidationError):
        core.as_hermitian(np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]]))
    with pytest.raises(ValidationError):
        core.as_density(np.eye(3))
    with pytest.raises(ValidationError):
        core.as_density(np.diag([1.5, -0.5, 0]))
    with pytest.raises(ValidationError):
        core.as_unitary(2 * np.eye(3))
    with pytest.raises(ValidationError):
        core.as_hermitian(np.eye(2))


# --- random states -------------------------------------------------------------


def test_hs_states_are_densities(rng):
    rhos = core.random_hs_states(rng, 500)
    for r in rhos:
        core.as_density(r, 1e-12)


def test_hs_mean_is_maximally_mixed(rng):
    rhos = core.random_hs_states(rng, 100_000)
    assert np.max(np.abs(rhos.mean(axis=0) - np.eye(3) / 3)) < 0.01


def _purity_reference(n: int, seed: int) -> np.ndarray:
    """Loop-based Ginibre sampler using the stdlib RNG, independent of the package."""
    r = random.Random(seed)
    out = np.empty(n)
    for k in range(n):
        g = [[complex(r.gauss(0, 1), r.gauss(0, 1)) for _ in range(3)] for _ in range(3)]
        w = [[sum(g[i][l] * g[j][l].conjugate() for l in range(3)) for j in range(3)] for i in range(3)]
        tr = sum(w[i][i].real for i in range(3))
        out[k] = sum(abs(w[i][j]) ** 2 for i in range(3) for j in range(3)) / tr**2
    return out


def test_hs_purity_matches_independent_sampler(rng):
    n = 100_000
    rhos = core.random_hs_states(rng, n)
    pur = np.einsum("nij,nji->n", rhos, rhos).real
    ref = _purity_reference(20_000, 99)
    se = np.sqrt(pur.var() / n + ref.var() / len(ref))
    assert abs(pur.mean() - ref.mean()) < 2 * se
    # Exact Hilbert-Schmidt value 2N / (N^2 + 1) for N = 3.
    assert abs(pur.mean() - 0.6) < 3 * np.sqrt(pur.var() / n)


def test_hs_sampling_deterministic():
    a = core.random_hs_states(np.random.default_rng(5), 10)
    b = core.random_hs_states(np.random.default_rng(5), 10)
    assert np.array_equal(a, b)


def test_random_unitary_is_unitary(rng):
    for _ in range(20):
        core.as_unitary(core.random_unitary(rng), 1e-12)


# --- eigensolver ---------------------------------------------------------------


def test_eigh3_diagonal():
    w, v = core.eigh3(np.diag([-1.0, 1.0, 1.0]))
    assert np.allclose(w, [-1, 1, 1])
    assert np.allclose(np.abs(v), np.eye(3)[:, [0, 1, 2]]) or np.allclose(np.abs(v[:, 0]), [1, 0, 0])


@settings(max_examples=200, deadline=None)
@given(complex_3x3)
def test_eigh3_matches_numpy(pair):
    h = _herm(pair)
    w, v = core.eigh3(h)
    assert np.allclose(w, np.linalg.eigvalsh(h), atol=1e-10 * max(1, np.abs(h).max()))
    assert np.max(np.abs(v @ np.diag(w) @ v.conj().T - h)) < 1e-12 * max(1, np.abs(h).max())
    assert np.max(np.abs(v.conj().T @ v - np.eye(3))) < 1e-12
    # Ascending up to the tie tolerance inside which vectors fix the order.
    assert np.all(np.diff(w) >= -1e-10 * np.abs(h).max())


@pytest.mark.parametrize("scale", [2.2e-309, 1e-200, 1e200])
def test_eigh3_extreme_scales(scale):
    h = np.full((3, 3), scale, dtype=complex)
    w, v = core.eigh3(h)
    assert np.all(np.isfinite(w)) and np.all(np.isfinite(v))
    assert np.allclose(w / scale, [0, 0, 3], atol=1e-12)
    assert np.max(np.abs(v.conj().T @ v - np.eye(3))) < 1e-12


def test_eigh3_reproducible_on_degenerate_input():
    h = core.dichotomous(core.ray(7))
    w1, v1 = core.eigh3(h)
    w2, v2 = core.eigh3(np.array(h))
    assert np.array_equal(w1, w2) and np.array_equal(v1, v2)
    for k in range(3):
        first = v1[np.argmax(np.abs(v1[:, k]) > 1e-8), k]
        assert abs(first.imag) < 1e-15 and first.real > 0


def test_eigh3_witness_spectrum(m):
    w, _ = core.eigh3(m)
    assert np.allclose(w, np.linalg.eigvalsh(m), atol=1e-12)
    assert w[0] == pytest.approx(-6.0, abs=1e-12)


# --- conjugation ---------------------------------------------------------------


def test_conjugate_examples(rng):
    obs = np.diag([-1.0, 1, 1])
    assert np.allclose(core.conjugate(obs, np.eye(3)), obs)
    swap = np.eye(3)[[1, 0, 2]]
    assert np.allclose(core.conjugate(obs, swap), np.diag([1, -1, 1]))
    h = _herm((rng.standard_normal((3, 3)), rng.standard_normal((3, 3))))
    u = core.random_unitary(rng)
    assert np.allclose(np.linalg.eigvalsh(core.conjugate(h, u)), np.linalg.eigvalsh(h), atol=1e-12)


def test_pairs_round_trip(rng):
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert np.array_equal(core.from_pairs(core.to_pairs(a)), a)
