"""Liouville-space machinery: vectorization, superoperators, norms, propagation.

Conventions
-----------
* Density matrices are vectorized by column stacking, so the matrix entry
  ``(i, j)`` lands at vector index ``i + N * j`` (0-based).
* Generators ``G`` act through ``i d/dt |rho> = G |rho>``.  A Hamiltonian
  superoperator therefore reproduces ``d rho/dt = -i [H, rho]`` and a
  dissipator carries an explicit factor ``i`` relative to the usual
  Lindblad form.
* Propagators are ``exp(-i G t)``.

Operators and vectors are plain complex :class:`numpy.ndarray` objects.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, NotHermitianError, QHEngineError

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-10

# Above this eigenvector condition number the eigendecomposition route can
# no longer deliver ~1e-12 relative accuracy; fall back to Pade.
EIG_COND_LIMIT = 1e3


def _square_dim(M: np.ndarray) -> int:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    return M.shape[0]


def hilbert_dim(v: np.ndarray) -> int:
    """Return ``N`` for a Liouville vector (length ``N**2``) or superoperator."""
    n2 = v.shape[0]
    n = int(round(np.sqrt(n2)))
    if n * n != n2:
        raise DimensionError(f"length {n2} is not a perfect square")
    return n


def vec(M: np.ndarray) -> np.ndarray:
    """Column-stack a square matrix into a Liouville vector."""
    M = np.asarray(M)
    _square_dim(M)
    return M.reshape(-1, order="F").astype(complex)


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    n = hilbert_dim(v)
    return v.reshape((n, n), order="F")


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product ``<a|b> = tr(a^dagger b)`` of two vectors."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def identity_vector(n: int) -> np.ndarray:
    """``|I>``; its conjugate transpose is the trace functional."""
    return vec(np.eye(n))


def is_hermitian(M: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(np.linalg.norm(M), 1.0)
    return bool(np.linalg.norm(M - M.conj().T) <= tol * scale)


def hamiltonian_superop(H: np.ndarray) -> np.ndarray:
    """Superoperator of the commutator ``rho -> [H, rho]``.

    Entry-wise this is ``H_im delta_jn - H_nj delta_im`` for the pair
    ``(ij), (mn)``.  The result is Hermitian and annihilates ``|H>`` from
    both sides.
    """
    H = np.asarray(H, dtype=complex)
    n = _square_dim(H)
    if not is_hermitian(H):
        raise NotHermitianError("Hamiltonian must be Hermitian")
    eye = np.eye(n)
    return np.kron(eye, H) - np.kron(H.T, eye)


def dissipator_superop(jump_ops: Sequence[np.ndarray], dim: int | None = None) -> np.ndarray:
    """Lindblad dissipator in the ``i d/dt`` convention.

    For each jump operator ``A`` the Hilbert-space action
    ``A rho A^+ - 1/2 {A^+ A, rho}`` is vectorized and multiplied by ``i``.

    Args:
        jump_ops: jump operators, all ``N x N``.
        dim: ``N``; required only when ``jump_ops`` is empty.
    """
    ops = [np.asarray(A, dtype=complex) for A in jump_ops]
    if not ops:
        if dim is None:
            raise DimensionError("dim is required for an empty jump-operator list")
        return np.zeros((dim * dim, dim * dim), dtype=complex)
    n = _square_dim(ops[0])
    if dim is not None and dim != n:
        raise DimensionError(f"jump operators are {n}x{n}, expected {dim}")
    eye = np.eye(n)
    D = np.zeros((n * n, n * n), dtype=complex)
    for A in ops:
        if A.shape != (n, n):
            raise DimensionError(f"jump operator shape {A.shape} != {(n, n)}")
        AdA = A.conj().T @ A
        D += np.kron(A.conj(), A) - 0.5 * np.kron(eye, AdA) - 0.5 * np.kron(AdA.T, eye)
    return 1j * D


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value (full SVD; operands here are at most a few dozen wide)."""
    M = np.asarray(M)
    if not np.all(np.isfinite(M)):
        raise QHEngineError("spectral norm of a non-finite matrix")
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


def trace_defect(G: np.ndarray) -> float:
    """``|| <I| G ||``; zero for any trace-preserving generator."""
    n = hilbert_dim(G)
    return float(np.linalg.norm(identity_vector(n).conj() @ G))


def propagate(G: np.ndarray, t: float, method: str = "auto") -> np.ndarray:
    """Propagator ``exp(-i G t)``.

    ``method="auto"`` uses an eigendecomposition when the eigenvector basis
    is well conditioned and scaling-and-squaring Pade otherwise.
    """
    if t < 0:
        raise ValueError("backward propagation (t < 0) is not supported")
    G = np.asarray(G, dtype=complex)
    _square_dim(G)
    if t == 0:
        return np.eye(G.shape[0], dtype=complex)
    if method not in ("auto", "eig", "pade"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "eig"):
        w, V = np.linalg.eig(G)
        cond = np.linalg.cond(V)
        if np.isfinite(cond) and (cond < EIG_COND_LIMIT or method == "eig"):
            return (V * np.exp(-1j * w * t)) @ np.linalg.inv(V)
    return scipy.linalg.expm(-1j * t * G)


def propagate_with_integral(G: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``exp(-i G t)`` and ``int_0^t exp(-i G u) du``.

    Both come out of one exponential of the block matrix
    ``[[-i G, I], [0, 0]]``.
    """
    if t < 0:
        raise ValueError("backward propagation (t < 0) is not supported")
    n = _square_dim(G)
    if t == 0:
        return np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex)
    block = np.zeros((2 * n, 2 * n), dtype=complex)
    block[:n, :n] = -1j * G
    block[:n, n:] = np.eye(n)
    E = scipy.linalg.expm(block * t)
    return E[:n, :n], E[:n, n:]


def expectation(A: np.ndarray, rho: np.ndarray, tol: float = 1e-12) -> float:
    """``tr(A rho)`` for Hermitian ``A`` and a density vector ``rho``."""
    A = np.asarray(A)
    if not is_hermitian(A):
        raise NotHermitianError("observable must be Hermitian")
    val = inner(vec(A), rho)
    if abs(val.imag) > tol * max(1.0, abs(val.real)):
        raise QHEngineError(f"expectation value has imaginary part {val.imag:.3e}")
    return val.real


def population_projector(n: int) -> np.ndarray:
    """Projection onto the diagonal (population) entries of Liouville space."""
    P = np.zeros((n * n, n * n))
    idx = np.arange(n) * (n + 1)
    P[idx, idx] = 1.0
    return P


def choi_matrix(K: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) K(|i><j|)`` of a superoperator."""
    n = hilbert_dim(K)
    C = np.zeros((n * n, n * n), dtype=complex)
    for i in range(n):
        for j in range(n):
            out = unvec(K[:, i + n * j])
            C[i * n:(i + 1) * n, j * n:(j + 1) * n] = out
    return C


def check_density(rho: np.ndarray, trace_tol: float = TRACE_TOL,
                  positivity_tol: float = POSITIVITY_TOL) -> list[str]:
    """Return a list of problems with ``rho`` as a density vector (empty if valid)."""
    problems = []
    M = unvec(rho)
    tr = np.trace(M)
    if abs(tr - 1) > trace_tol:
        problems.append(f"trace {tr.real:.15g}{tr.imag:+.3e}j")
    if np.linalg.norm(M - M.conj().T) > 1e-12 * max(1.0, np.linalg.norm(M)):
        problems.append("not Hermitian")
    lam = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    if lam[0] < -positivity_tol:
        problems.append(f"negative eigenvalue {lam[0]:.3e}")
    return problems


def is_density(rho: np.ndarray, **kw) -> bool:
    return not check_density(rho, **kw)


def cptp_defects(K: np.ndarray) -> dict[str, float]:
    """Trace-preservation, Hermiticity-preservation and positivity defects of a map."""
    n = hilbert_dim(K)
    C = choi_matrix(K)
    herm = float(np.linalg.norm(C - C.conj().T))
    lam = np.linalg.eigvalsh(0.5 * (C + C.conj().T))
    return {
        "trace": float(np.linalg.norm(identity_vector(n).conj() @ K - identity_vector(n).conj())),
        "hermiticity": herm,
        "positivity": float(max(0.0, -lam[0])),
    }


def is_cptp(K: np.ndarray, tol: float = 1e-12) -> bool:
    return all(v <= tol for v in cptp_defects(K).values())
