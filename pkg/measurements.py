"""
Weighted projective measurement sets for Alice and Bob.
Every set here is a list of orthonormal bases with weights q_mu summing to one.
"""

from __future__ import annotations

import logging

import numpy as np

import qmat
from models import MeasurementSet, UnitaryRelation, BlochVector, InvalidMeasurementError

WEIGHT_TOL = 1e-12
GRAM_TOL = 1e-10


def validate_measurement_set(ms: MeasurementSet) -> MeasurementSet:
    """Check the weight and orthonormality invariants, raising InvalidMeasurementError."""
    d = ms.dim
    if ms.bases.ndim != 3 or ms.bases.shape[1:] != (d, d):
        raise InvalidMeasurementError(f"Bases must have shape (N, {d}, {d}), got {ms.bases.shape}")
    if ms.weights.shape != (ms.settings,):
        raise InvalidMeasurementError(
            f"Got {ms.weights.size} weights for {ms.settings} settings"
        )
    if np.any(ms.weights < -WEIGHT_TOL):
        raise InvalidMeasurementError("Measurement weights must be non-negative")
    if abs(ms.weights.sum() - 1.0) > WEIGHT_TOL:
        raise InvalidMeasurementError(f"Measurement weights sum to {ms.weights.sum()}, not 1")
    gram = np.einsum('mia,mib->mab', ms.bases.conj(), ms.bases)
    deviation = np.abs(gram - np.eye(d)).max() if ms.settings else 0.0
    if deviation > GRAM_TOL:
        raise InvalidMeasurementError(f"Basis vectors are not orthonormal (deviation {deviation:.2e})")
    return ms


def measurement_set(bases, weights=None) -> MeasurementSet:
    """Build and validate a MeasurementSet; weights default to uniform 1/N."""
    bases = np.asarray(bases, dtype=complex)
    if bases.ndim == 2:
        bases = bases[np.newaxis]
    n = bases.shape[0]
    if n == 0:
        raise InvalidMeasurementError("A measurement set needs at least one setting")
    if weights is None:
        weights = np.full(n, 1.0 / n)
    ms = MeasurementSet(dim=int(bases.shape[-1]), weights=np.asarray(weights, dtype=float), bases=bases)
    return validate_measurement_set(ms)


def computational_basis(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex)


def mub_pair(d: int) -> MeasurementSet:
    """Computational and Fourier bases with equal weight; a MUB pair in every dimension."""
    if d < 2:
        raise InvalidMeasurementError(f"MUB pair needs d >= 2, got {d}")
    return measurement_set([computational_basis(d), qmat.fourier_matrix(d)])


def identical_pair(d: int) -> MeasurementSet:
    return measurement_set([computational_basis(d), computational_basis(d)])


def haar_measurement_set(d: int, settings: int, seed=None, weights=None) -> MeasurementSet:
    """Settings drawn as columns of independent Haar unitaries"""
    bases = qmat.haar_unitaries(d, settings, seed)
    return measurement_set(bases, weights)


def random_weights(settings: int, seed=None) -> np.ndarray:
    rng = qmat.as_rng(seed)
    w = rng.dirichlet(np.ones(settings))
    return w


def bloch_basis(n) -> np.ndarray:
    """Columns are the +1 and -1 eigenvectors of n . sigma."""
    if isinstance(n, BlochVector):
        n = n.as_array()
    n = np.asarray(n, dtype=float).ravel()
    if n.size != 3:
        raise InvalidMeasurementError(f"Bloch direction needs 3 components, got {n.size}")
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise InvalidMeasurementError(f"Bloch direction must be a unit vector, |n| = {np.linalg.norm(n)}")
    eig = qmat.hermitian_eig(qmat.bloch_operator(n))
    return eig.eigenvectors[:, ::-1]


def bloch_measurement(n, weight: float = 1.0):
    """
    One qubit setting Phi^{+/-} = (I +/- n.sigma)/2, returned as (weight, basis).
    Outcome 0 is the '+' projector.
    """
    return float(weight), bloch_basis(n)


def bloch_measurement_set(directions, weights=None) -> MeasurementSet:
    bases = [bloch_measurement(n)[1] for n in directions]
    return measurement_set(bases, weights)


def bloch_directions(ms: MeasurementSet) -> np.ndarray:
    """Bloch vectors n_mu with Phi^0_mu = (I + n_mu.sigma)/2, shape (N, 3)"""
    if ms.dim != 2:
        raise InvalidMeasurementError(f"Bloch directions exist only for qubits, got d={ms.dim}")
    first = ms.bases[:, :, 0]
    return np.real(np.stack([
        np.einsum('mi,ij,mj->m', first.conj(), p, first) for p in qmat.PAULIS
    ], axis=1))


def conjugate_set(ms: MeasurementSet) -> MeasurementSet:
    """Complex-conjugated bases in the computational basis"""
    return MeasurementSet(dim=ms.dim, weights=ms.weights.copy(), bases=ms.bases.conj())


def unitary_relation(ms: MeasurementSet) -> UnitaryRelation:
    """U with |phi^b_2> = sum_a U[b, a] |phi^a_1>, i.e. U[b, a] = <phi^a_1|phi^b_2>."""
    if ms.settings != 2:
        raise InvalidMeasurementError(f"unitary_relation needs exactly 2 settings, got {ms.settings}")
    b1, b2 = ms.bases
    u = (b1.conj().T @ b2).T
    logging.debug(f"Unitary relation max |U_ab| = {np.abs(u).max():.6f}")
    return UnitaryRelation(u=u)


def resolves_identity(ms: MeasurementSet, tol: float = 1e-10) -> bool:
    sums = ms.projectors().sum(axis=1)
    return bool(np.abs(sums - np.eye(ms.dim)).max() <= tol)
