"""Exact linear algebra for a single qutrit.

States, observables and unitaries are plain ``numpy`` arrays (complex128,
read-only once validated). The ``as_*`` helpers check the invariants of each
kind and are the only place tolerances live.
"""

from __future__ import annotations

import numpy as np

from .errors import ConsistencyError, UsageError, ValidationError

DIM = 3
TOL = 1e-12
FILE_TOL = 1e-9

_S2 = np.sqrt(2.0)
_S3 = np.sqrt(3.0)

# Nine-ray catalog, vertex i is row i - 1.
RAYS = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0 / _S2, -1.0 / _S2],
        [1.0 / _S3, 0.0, -_S2 / _S3],
        [1.0 / _S3, _S2 / _S3, 0.0],
        [_S2 / 2, 0.5, 0.5],
        [_S2 / 2, -0.5, -0.5],
        [_S2 / 2, -0.5, 0.5],
    ],
    dtype=complex,
)
RAYS.setflags(write=False)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def as_ket(v, tol: float = TOL) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape != (DIM,):
        raise ValidationError(f"ket must have shape (3,), got {v.shape}")
    if abs(np.vdot(v, v).real - 1.0) > tol:
        raise ValidationError(f"ket not normalized: |v|^2 = {np.vdot(v, v).real!r}")
    return _frozen(v)


def as_hermitian(h, tol: float = TOL) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.shape != (DIM, DIM):
        raise ValidationError(f"operator must have shape (3, 3), got {h.shape}")
    if np.max(np.abs(h - h.conj().T)) > tol:
        raise ValidationError("operator is not Hermitian")
    return _frozen(h)


def as_density(rho, tol: float = TOL) -> np.ndarray:
    rho = as_hermitian(rho, tol)
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValidationError(f"density matrix trace {np.trace(rho).real!r} != 1")
    if np.linalg.eigvalsh(rho)[0] < -tol:
        raise ValidationError("density matrix has a negative eigenvalue")
    return rho


def as_unitary(u, tol: float = TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (DIM, DIM):
        raise ValidationError(f"unitary must have shape (3, 3), got {u.shape}")
    if np.max(np.abs(u @ u.conj().T - np.eye(DIM))) > tol:
        raise ValidationError("matrix is not unitary")
    return _frozen(u)


def ray(index: int) -> np.ndarray:
    """Catalog ray ``|index>`` for ``index`` in 1..9."""
    if isinstance(index, bool) or not isinstance(index, (int, np.integer)) or not 1 <= index <= 9:
        raise UsageError(f"ray index must be an integer in 1..9, got {index!r}")
    return RAYS[index - 1]


def projector(k) -> np.ndarray:
    k = as_ket(k)
    return _frozen(np.outer(k, k.conj()))


def dichotomous(k) -> np.ndarray:
    """The +/-1 observable ``I - 2|k><k|``."""
    return _frozen(np.eye(DIM) - 2.0 * projector(k))


def pure_state(k) -> np.ndarray:
    return projector(k)


def maximally_mixed() -> np.ndarray:
    return _frozen(np.eye(DIM) / DIM)


def expectation(rho, obs) -> float:
    """``Tr(rho obs)``; raises if the trace has a non-negligible imaginary part."""
    val = np.trace(np.asarray(rho) @ np.asarray(obs))
    if abs(val.imag) > 1e-9:
        raise ConsistencyError(f"expectation has imaginary part {val.imag!r}")
    return float(val.real)


def random_hs_states(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` Hilbert-Schmidt distributed density matrices, shape ``(n, 3, 3)``.

    Ginibre construction: ``G G^dag / Tr(G G^dag)`` with standard complex
    Gaussian entries (real and imaginary parts N(0, 1/2)).
    """
    g = (rng.standard_normal((n, DIM, DIM)) + 1j * rng.standard_normal((n, DIM, DIM))) / _S2
    rho = g @ g.conj().transpose(0, 2, 1)
    tr = np.einsum("nii->n", rho).real
    bad = tr < 1e-300
    while np.any(bad):
        m = int(bad.sum())
        g = (rng.standard_normal((m, DIM, DIM)) + 1j * rng.standard_normal((m, DIM, DIM))) / _S2
        rho[bad] = g @ g.conj().transpose(0, 2, 1)
        tr[bad] = np.einsum("nii->n", rho[bad]).real
        bad = tr < 1e-300
    rho /= tr[:, None, None]
    # Remove round-off asymmetry so each sample is Hermitian to machine precision.
    return 0.5 * (rho + rho.conj().transpose(0, 2, 1))


def random_hs_state(rng: np.random.Generator) -> np.ndarray:
    return _frozen(random_hs_states(rng, 1)[0])


def random_unitary(rng: np.random.Generator) -> np.ndarray:
    """Haar unitary via QR of a Ginibre matrix with phase correction."""
    z = (rng.standard_normal((DIM, DIM)) + 1j * rng.standard_normal((DIM, DIM))) / _S2
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return _frozen(q * (d / np.abs(d)))


def random_ket(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(DIM) + 1j * rng.standard_normal(DIM)
    return _frozen(v / np.linalg.norm(v))


def _jacobi(h: np.ndarray, max_sweeps: int = 64) -> tuple[np.ndarray, np.ndarray]:
    a = np.array(h, dtype=complex)
    v = np.eye(DIM, dtype=complex)
    # Work at unit scale so tiny (subnormal) or huge entries rotate cleanly.
    norm = float(np.max(np.abs(a)))
    if norm == 0.0 or not np.isfinite(norm):
        return np.diag(a).real.copy(), v
    # Power-of-two scaling is exact and cannot overflow.
    e = int(np.frexp(norm)[1])
    a = np.ldexp(a.real, -e) + 1j * np.ldexp(a.imag, -e)
    scale = 1.0
    for _ in range(max_sweeps):
        off = abs(a[0, 1]) + abs(a[0, 2]) + abs(a[1, 2])
        if off <= 1e-17 * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            mag = abs(apq)
            if mag <= 1e-18 * scale:
                continue
            # Phase the (p, q) element real, then a real plane rotation zeroes it.
            phase = apq / mag
            theta = 0.5 * np.arctan2(2.0 * mag, a[p, p].real - a[q, q].real)
            c, s = np.cos(theta), np.sin(theta)
            j = np.eye(DIM, dtype=complex)
            j[p, p] = c
            j[p, q] = -s
            j[q, p] = phase.conjugate() * s
            j[q, q] = phase.conjugate() * c
            a = j.conj().T @ a @ j
            v = v @ j
    return np.ldexp(np.diag(a).real, e), v


def _phase_normalize(vec: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(vec) > 1e-8))
    z = vec[idx]
    return vec if z == 0 else vec * (abs(z) / z)


def eigh3(h, tol: float = TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian 3x3 matrix by cyclic Jacobi sweeps.

    Returns ``(w, V)`` with ``w`` ascending and eigenvectors as the columns of
    ``V``. Each eigenvector is phase-fixed so its first non-negligible entry is
    real positive; eigenvalues equal within 1e-10 of the matrix scale are
    ordered by their vectors in descending lexicographic order, so the output
    is reproducible.
    """
    h = as_hermitian(h, tol)
    w, v = _jacobi(h)
    cols = [_phase_normalize(v[:, k]) for k in range(DIM)]

    def key(k):
        vec = cols[k]
        return tuple(np.column_stack([vec.real, vec.imag]).ravel())

    order = sorted(range(DIM), key=lambda k: w[k])
    gap = 1e-10 * float(np.max(np.abs(h)))
    # Stable pass: reorder runs of (near-)degenerate eigenvalues lexicographically.
    out: list[int] = []
    i = 0
    while i < DIM:
        j = i + 1
        while j < DIM and w[order[j]] - w[order[i]] <= gap:
            j += 1
        out.extend(sorted(order[i:j], key=key, reverse=True))
        i = j
    vals = np.array([w[k] for k in out])
    vecs = np.column_stack([cols[k] for k in out])
    return vals, vecs


def conjugate(obs, u) -> np.ndarray:
    """``U obs U^dag``."""
    u = as_unitary(u, 1e-10)
    return _frozen(u @ np.asarray(obs) @ u.conj().T)


def to_pairs(a) -> list:
    """Nested ``[re, im]`` lists for JSON."""
    a = np.asarray(a, dtype=complex)
    if a.ndim == 0:
        return [float(a.real), float(a.imag)]
    return [to_pairs(x) for x in a]


def from_pairs(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ValidationError("expected trailing [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]
