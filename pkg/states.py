"""
Bipartite state families, assemblages and their validation.
"""

from __future__ import annotations

import logging
from typing import Iterable, Optional, Tuple

import numpy as np

import qmat
from models import (
    DensityMatrix, Assemblage, TState, MeasurementSet, ResponseFunction,
    InvalidStateError, InvalidArgumentError, DimensionMismatchError, NotHermitianError,
)

TRACE_TOL = 1e-10
PSD_TOL = 1e-10
ASSEMBLAGE_TOL = 1e-9


def validate_density_matrix(m, kind: str = "custom", params=None) -> DensityMatrix:
    """
    Wrap a matrix as a DensityMatrix after checking it is Hermitian, unit-trace
    and PSD. Eigenvalues in [-1e-10, 0) are accepted and clipped to 0; the
    stored matrix is rebuilt from the clipped spectrum only when one is.
    """
    m = qmat.as_matrix(m, "density matrix")
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"Density matrix must be square, got {m.shape}")
    try:
        eig = qmat.hermitian_eig(m)
    except NotHermitianError:
        raise InvalidStateError(f"{kind} matrix is not Hermitian")
    trace = np.trace(m).real
    if abs(trace - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"{kind} matrix has trace {trace}, expected 1")
    if eig.eigenvalues[0] < -PSD_TOL:
        raise InvalidStateError(
            f"{kind} matrix is not positive semidefinite (min eigenvalue {eig.eigenvalues[0]:.3e})"
        )
    if eig.eigenvalues[0] < 0:
        clipped = np.clip(eig.eigenvalues, 0.0, None)
        vecs = eig.eigenvectors
        m = (vecs * clipped) @ vecs.conj().T
        m = m / np.trace(m).real
    return DensityMatrix(dim=m.shape[0], matrix=m, kind=kind, params=dict(params or {}))


def _bipartite_dim(w: DensityMatrix) -> int:
    d = int(round(np.sqrt(w.dim)))
    if d * d != w.dim:
        raise DimensionMismatchError(f"State of dimension {w.dim} is not on C^d (x) C^d")
    return d


def werner_state(d: int, w: float) -> DensityMatrix:
    """(d-1+w)/(d-1) I/d^2 - w/(d-1) V/d with V the flip operator"""
    if d < 2:
        raise InvalidStateError(f"Werner state needs d >= 2, got {d}")
    if not 0.0 <= w <= 1.0:
        raise InvalidStateError(f"Werner parameter w must lie in [0, 1], got {w}")
    identity = np.eye(d * d, dtype=complex)
    m = (d - 1 + w) / (d - 1) * identity / d**2 - w / (d - 1) * qmat.flip_operator(d) / d
    return validate_density_matrix(m, kind="werner", params={'d': d, 'w': w})


def isotropic_state(d: int, eta: float) -> DensityMatrix:
    """(1-eta) I/d^2 + eta P_+"""
    if d < 2:
        raise InvalidStateError(f"Isotropic state needs d >= 2, got {d}")
    lower = -1.0 / (d * d - 1)
    if not lower - 1e-15 <= eta <= 1.0:
        raise InvalidStateError(f"Isotropic parameter eta must lie in [{lower}, 1], got {eta}")
    m = (1 - eta) * np.eye(d * d, dtype=complex) / d**2 + eta * qmat.maximally_entangled_projector(d)
    return validate_density_matrix(m, kind="isotropic", params={'d': d, 'eta': eta})


def t_state(t) -> DensityMatrix:
    """(I (x) I + sum_i t_i sigma_i (x) sigma_i) / 4"""
    if not isinstance(t, TState):
        t = TState(tuple(float(x) for x in t))
    values = t.as_array()
    if values.size != 3:
        raise InvalidStateError(f"T-state needs three correlation entries, got {values.size}")
    m = np.eye(4, dtype=complex)
    for ti, p in zip(values, qmat.PAULIS):
        m = m + ti * np.kron(p, p)
    return validate_density_matrix(m / 4, kind="tstate", params={'t': [float(x) for x in values]})


def two_qubit_from_standard_form(a, b, T) -> DensityMatrix:
    """(I + a.sigma (x) I + I (x) b.sigma + sum_ij T_ij sigma_i (x) sigma_j) / 4"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    T = np.asarray(T, dtype=float).reshape(3, 3)
    identity = np.eye(2, dtype=complex)
    m = np.eye(4, dtype=complex)
    m = m + np.kron(qmat.bloch_operator(a), identity) + np.kron(identity, qmat.bloch_operator(b))
    for i, p in enumerate(qmat.PAULIS):
        for j, s in enumerate(qmat.PAULIS):
            m = m + T[i, j] * np.kron(p, s)
    return validate_density_matrix(m / 4, kind="two-qubit")


def standard_form(w: DensityMatrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Local Bloch vectors a, b and correlation matrix T of a two-qubit state"""
    if w.dim != 4:
        raise DimensionMismatchError(f"standard_form needs a two-qubit state, got dim {w.dim}")
    identity = np.eye(2, dtype=complex)
    m = w.matrix
    a = np.array([np.trace(m @ np.kron(p, identity)).real for p in qmat.PAULIS])
    b = np.array([np.trace(m @ np.kron(identity, p)).real for p in qmat.PAULIS])
    T = np.array([[np.trace(m @ np.kron(p, s)).real for s in qmat.PAULIS] for p in qmat.PAULIS])
    return a, b, T


def product_state(rho, sigma) -> DensityMatrix:
    return validate_density_matrix(qmat.kron(rho, sigma), kind="product")


def reduced_state(w: DensityMatrix, side: str = "A") -> np.ndarray:
    """Reduced state of the named party (side="A" keeps Alice)"""
    d = _bipartite_dim(w)
    traced = "B" if side.upper() == "A" else "A"
    return qmat.partial_trace(w.matrix, d, d, traced)


def partial_transpose(m, d_a: int, d_b: int) -> np.ndarray:
    """Transpose on the B factor"""
    m = qmat.as_matrix(m)
    if m.shape != (d_a * d_b, d_a * d_b):
        raise DimensionMismatchError(f"Operator of shape {m.shape} is not on a {d_a}x{d_b} space")
    return m.reshape(d_a, d_b, d_a, d_b).transpose(0, 3, 2, 1).reshape(d_a * d_b, d_a * d_b)


def ppt_min_eigenvalue(w: DensityMatrix) -> float:
    d = _bipartite_dim(w)
    return float(qmat.hermitian_eig(partial_transpose(w.matrix, d, d)).eigenvalues[0])


def random_bipartite_state(d: int, seed=None, rank=None) -> DensityMatrix:
    return validate_density_matrix(qmat.random_density_matrix(d * d, seed, rank), kind="random")


def random_separable_state(d: int, terms: int = 8, seed=None) -> DensityMatrix:
    """Convex mixture of `terms` random product states"""
    rng = qmat.as_rng(seed)
    weights = rng.dirichlet(np.ones(terms))
    m = np.zeros((d * d, d * d), dtype=complex)
    for p in weights:
        m = m + p * np.kron(qmat.random_density_matrix(d, rng), qmat.random_density_matrix(d, rng))
    return validate_density_matrix(m, kind="separable", params={'terms': terms})


# --- Assemblages ---

def validate_assemblage(assemblage: Assemblage, tol: float = ASSEMBLAGE_TOL) -> Assemblage:
    """Check PSD members, unit total trace per setting and a common Bob marginal."""
    members = assemblage.members
    if members.ndim != 4 or members.shape[2] != members.shape[3]:
        raise DimensionMismatchError(f"Assemblage members must have shape (N, k, d, d), got {members.shape}")
    flat = members.reshape(-1, assemblage.dim, assemblage.dim)
    for m in flat:
        if qmat.hermitian_eig(m).eigenvalues[0] < -PSD_TOL:
            raise InvalidStateError("Assemblage member is not positive semidefinite")
    totals = np.trace(members, axis1=2, axis2=3).real.sum(axis=1)
    if np.abs(totals - 1.0).max() > tol:
        raise InvalidStateError(f"Assemblage traces per setting are {totals}, expected 1")
    marginals = members.sum(axis=1)
    if np.abs(marginals - marginals[0]).max() > tol:
        raise InvalidStateError("Assemblage is signalling: Bob's marginal depends on the setting")
    return assemblage


def assemblage_from_state(w: DensityMatrix, alice: MeasurementSet) -> Assemblage:
    """rho~^a_mu = Tr_A[(Pi^a_mu (x) I) W]"""
    d = _bipartite_dim(w)
    if alice.dim != d:
        raise DimensionMismatchError(f"Alice measures in dimension {alice.dim}, state is {d}x{d}")
    projectors = alice.projectors()
    w4 = w.matrix.reshape(d, d, d, d)
    members = np.einsum('uaim,mkil->uakl', projectors, w4)
    return validate_assemblage(Assemblage(members=members))


def lhs_assemblage(states: Iterable, responses) -> Assemblage:
    """
    Local-hidden-state assemblage rho~^a_mu = sum_xi Omega(xi) p(a|mu,xi) rho_xi.

    states is a list of (Omega(xi), rho_xi) pairs; responses is a ResponseFunction
    or an array p[mu, xi, a].
    """
    states = list(states)
    weights = np.array([float(p) for p, _ in states])
    rhos = np.array([r.matrix if isinstance(r, DensityMatrix) else np.asarray(r, dtype=complex)
                     for _, r in states])
    table = responses.table if isinstance(responses, ResponseFunction) else np.asarray(responses, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise InvalidStateError(f"Hidden-state weights must be a probability vector, sum is {weights.sum()}")
    if table.ndim != 3 or table.shape[1] != len(states):
        raise DimensionMismatchError(f"Response table shape {table.shape} does not match {len(states)} hidden states")
    if np.any(table < 0) or np.abs(table.sum(axis=2) - 1.0).max() > 1e-12:
        raise InvalidStateError("Response function is not normalized over outcomes")
    members = np.einsum('x,mxa,xij->maij', weights, table, rhos)
    return validate_assemblage(Assemblage(members=members))


def haar_lhs_assemblage(d: int, samples: int, seed=None, rule: str = "max",
                        alice: Optional[MeasurementSet] = None) -> Assemblage:
    """
    Discretized Haar-state LHS model with the optimal deterministic responses.

    Hidden states are Haar-random pure states; for each of Alice's settings the
    response picks the outcome whose conjugated projector has the largest
    (rule="max") or smallest (rule="min") overlap, ties to the smallest index.
    With the computational basis this reproduces the isotropic assemblage at
    eta = (H_d - 1)/(d - 1) for "max" and the Werner assemblage at w = 1 - 1/d
    for "min".
    """
    if samples < 1:
        raise InvalidArgumentError(f"haar_lhs_assemblage needs at least one hidden state, got {samples}")
    if rule not in ("max", "min"):
        raise ValueError(f"rule must be 'max' or 'min', got {rule!r}")
    bases = (alice.bases if alice is not None else np.eye(d, dtype=complex)[np.newaxis])
    pick = np.argmax if rule == "max" else np.argmin

    def chunk(count, rng):
        psi = qmat.haar_unitaries(d, count, rng)[:, :, 0]
        overlaps = np.abs(np.einsum('mia,si->sma', bases, psi)) ** 2
        choice = pick(overlaps, axis=2)
        onehot = np.eye(d)[choice]
        return np.einsum('sma,si,sj->maij', onehot, psi, psi.conj())

    partial_sums = qmat.map_sample_chunks(chunk, samples, seed)
    members = np.sum(partial_sums, axis=0) / samples
    logging.debug(f"Haar LHS assemblage built from {samples} hidden states (rule={rule})")
    return Assemblage(members=members)
