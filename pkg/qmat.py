"""
Dense complex linear algebra for steerlab.

Conventions used everywhere in the package:
  - computational basis |0>, ..., |d-1>
  - bipartite operators act on A (x) B with A the left Kronecker factor
  - vectorization is row-major, |A>> = sum_ij A_ij |ij>, so that
    |A rho B>> = (A (x) B^T)|rho>> and <<A|B>> = Tr(A^dagger B)
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from scipy.stats import unitary_group

import config
from models import HermitianEig, BlochVector, DimensionMismatchError, NotHermitianError, InvalidArgumentError

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)


def as_rng(seed=None) -> np.random.Generator:
    """Accept a Generator, a SeedSequence or an int seed and return a Generator"""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_matrix(m, name="matrix") -> np.ndarray:
    """Coerce to a finite complex 2-d array"""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def _require_square(m, name="matrix"):
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {m.shape}")


def kron(a, b) -> np.ndarray:
    """(a (x) b)[i*rb + k, j*cb + l] = a[i, j] * b[k, l]"""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def partial_trace(m, d_a: int, d_b: int, side: str = "A") -> np.ndarray:
    """
    Trace out one factor of an operator on C^d_a (x) C^d_b.

    side="A" traces out the left factor and returns a d_b x d_b matrix;
    side="B" traces out the right factor and returns d_a x d_a.
    """
    m = as_matrix(m)
    if m.shape != (d_a * d_b, d_a * d_b):
        raise DimensionMismatchError(
            f"Operator of shape {m.shape} is not on a {d_a}x{d_b} bipartite space"
        )
    t = m.reshape(d_a, d_b, d_a, d_b)
    side = side.upper()
    if side == "A":
        return np.einsum('ikil->kl', t)
    if side == "B":
        return np.einsum('ikjk->ij', t)
    raise ValueError(f"side must be 'A' or 'B', got {side!r}")


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m, dtype=complex)
    scale = max(np.linalg.norm(m), 1.0)
    return bool(np.linalg.norm(m - m.conj().T) <= tol * scale)


def hermitian_eig(m) -> HermitianEig:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    m = as_matrix(m)
    _require_square(m)
    if not is_hermitian(m):
        raise NotHermitianError("hermitian_eig received a non-Hermitian matrix")
    # symmetrize away round-off before handing to LAPACK
    values, vectors = np.linalg.eigh((m + m.conj().T) / 2)
    return HermitianEig(eigenvalues=values, eigenvectors=vectors)


def psd_sqrt(m) -> np.ndarray:
    """Principal square root of a PSD matrix; slightly negative eigenvalues are clipped."""
    eig = hermitian_eig(m)
    roots = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
    v = eig.eigenvectors
    return (v * roots) @ v.conj().T


def vectorize(a) -> np.ndarray:
    a = as_matrix(a)
    _require_square(a)
    return a.reshape(-1).copy()


def devectorize(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionMismatchError(f"Vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(d, d).copy()


def haar_unitary(d: int, seed=None) -> np.ndarray:
    """One Haar-random d x d unitary"""
    return haar_unitaries(d, 1, seed)[0]


def haar_unitaries(d: int, count: int, seed=None) -> np.ndarray:
    """
    Draw `count` Haar-random unitaries as an array of shape (count, d, d).
    d=1 reduces to uniform phases.
    """
    if d < 1:
        raise ValueError(f"Unitary dimension must be >= 1, got {d}")
    rng = as_rng(seed)
    if d == 1:
        phases = rng.uniform(0.0, 2 * np.pi, size=count)
        return np.exp(1j * phases).reshape(count, 1, 1)
    samples = unitary_group.rvs(d, size=count, random_state=rng)
    return np.asarray(samples, dtype=complex).reshape(count, d, d)


def random_density_matrix(d: int, seed=None, rank: Optional[int] = None) -> np.ndarray:
    """Random density matrix from a Ginibre matrix G as G G^dagger / Tr; rank defaults to full."""
    rng = as_rng(seed)
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def bloch_operator(n) -> np.ndarray:
    """n . sigma for a real three-vector n"""
    if isinstance(n, BlochVector):
        n = n.as_array()
    n = np.asarray(n, dtype=float).ravel()
    if n.size != 3:
        raise DimensionMismatchError(f"Bloch vector needs 3 components, got {n.size}")
    return n[0] * PAULI_X + n[1] * PAULI_Y + n[2] * PAULI_Z


def maximally_entangled_vector(d: int) -> np.ndarray:
    """|psi_+> = sum_i |ii> / sqrt(d)"""
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)


def maximally_entangled_projector(d: int) -> np.ndarray:
    psi = maximally_entangled_vector(d)
    return np.outer(psi, psi.conj())


def flip_operator(d: int) -> np.ndarray:
    """V|ij> = |ji>"""
    v = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            v[j * d + i, i * d + j] = 1.0
    return v


def fourier_matrix(d: int) -> np.ndarray:
    """Unitary DFT matrix, columns are the Fourier basis vectors"""
    idx = np.arange(d)
    return np.exp(2j * np.pi * np.outer(idx, idx) / d) / np.sqrt(d)


def trace_distance(a, b) -> float:
    eig = hermitian_eig(as_matrix(a) - as_matrix(b))
    return float(0.5 * np.abs(eig.eigenvalues).sum())


def map_sample_chunks(fn, samples: int, seed=None, chunk_size: Optional[int] = None) -> list:
    """
    Split `samples` draws into fixed-size chunks, each with its own spawned
    SeedSequence, and evaluate fn(count, rng) for every chunk on a thread pool.

    Results come back in chunk order. The chunk layout depends only on the
    sample count and chunk size, so any worker count gives identical numbers.
    """
    if samples < 1:
        raise InvalidArgumentError(f"Need at least one sample, got {samples}")
    chunk_size = chunk_size or config.mc_chunk_size()
    counts = [chunk_size] * (samples // chunk_size)
    if samples % chunk_size:
        counts.append(samples % chunk_size)
    streams = np.random.SeedSequence(seed).spawn(len(counts))
    workers = min(config.worker_count(), max(len(counts), 1))
    logging.debug(f"Sampling {samples} draws in {len(counts)} chunks on {workers} workers")

    def run(job):
        count, stream = job
        return fn(count, np.random.default_rng(stream))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, zip(counts, streams)))
