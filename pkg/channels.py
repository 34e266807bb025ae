"""
Quantum channels on Bob's side: Kraus and process-matrix forms, the channel
decomposition of a bipartite state, entanglement-breaking channels, entanglement
fidelity and isotropic twirling.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Tuple

import numpy as np

import qmat
import states
from models import (
    QuantumChannel, EbChannel, ProcessMatrix, DensityMatrix,
    InvalidChannelError, DimensionMismatchError,
)

TP_TOL = 1e-9
RANK_TOL = 1e-10


def validate_channel(channel: QuantumChannel, tol: float = TP_TOL) -> QuantumChannel:
    """Check that every Kraus operator is d x d and sum K^dagger K = I."""
    if not channel.kraus:
        raise InvalidChannelError("A channel needs at least one Kraus operator")
    d = channel.dim
    total = np.zeros((d, d), dtype=complex)
    for k in channel.kraus:
        if k.shape != (d, d):
            raise InvalidChannelError(f"Kraus operator of shape {k.shape} on a {d}-dimensional channel")
        total += k.conj().T @ k
    deviation = np.abs(total - np.eye(d)).max()
    if deviation > tol:
        raise InvalidChannelError(f"Channel is not trace preserving (deviation {deviation:.2e})")
    return channel


def channel_from_kraus(kraus) -> QuantumChannel:
    kraus = [qmat.as_matrix(k, "Kraus operator") for k in kraus]
    if not kraus:
        raise InvalidChannelError("A channel needs at least one Kraus operator")
    return validate_channel(QuantumChannel(dim=kraus[0].shape[0], kraus=kraus))


def identity_channel(d: int) -> QuantumChannel:
    return QuantumChannel(dim=d, kraus=[np.eye(d, dtype=complex)])


def _weyl_operator(d: int, j: int, k: int) -> np.ndarray:
    """X^j Z^k with X|i> = |i+1 mod d> and Z|i> = w^i |i>"""
    shift = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return np.linalg.matrix_power(shift, j) @ np.linalg.matrix_power(clock, k)


def depolarizing_channel(d: int, eta: float) -> QuantumChannel:
    """
    eps(A) = eta A + (1 - eta) Tr(A) I/d, written with the d^2 Weyl operators.
    Valid for -1/(d^2 - 1) <= eta <= 1.
    """
    lower = -1.0 / (d * d - 1)
    if not lower - 1e-15 <= eta <= 1.0:
        raise InvalidChannelError(f"Depolarizing parameter must lie in [{lower}, 1], got {eta}")
    rest = (1.0 - eta) / d**2
    kraus = []
    for j in range(d):
        for k in range(d):
            weight = eta + rest if (j, k) == (0, 0) else rest
            if weight > 0:
                kraus.append(np.sqrt(max(weight, 0.0)) * _weyl_operator(d, j, k))
    return validate_channel(QuantumChannel(dim=d, kraus=kraus))


def amplitude_damping_channel(gamma: float) -> QuantumChannel:
    if not 0.0 <= gamma <= 1.0:
        raise InvalidChannelError(f"Damping rate must lie in [0, 1], got {gamma}")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return validate_channel(QuantumChannel(dim=2, kraus=[k0, k1]))


def random_channel(d: int, kraus_count: int = 3, seed=None) -> QuantumChannel:
    """Kraus operators cut from the first d columns of a Haar unitary of size kraus_count * d"""
    u = qmat.haar_unitary(kraus_count * d, seed)
    isometry = u[:, :d]
    kraus = [isometry[m * d:(m + 1) * d, :] for m in range(kraus_count)]
    return QuantumChannel(dim=d, kraus=kraus)


def apply(channel: QuantumChannel, rho) -> DensityMatrix:
    """eps(rho) = sum_m K_m rho K_m^dagger"""
    matrix = rho.matrix if isinstance(rho, DensityMatrix) else qmat.as_matrix(rho)
    if matrix.shape != (channel.dim, channel.dim):
        raise DimensionMismatchError(f"Channel on dimension {channel.dim} applied to a {matrix.shape} matrix")
    out = sum(k @ matrix @ k.conj().T for k in channel.kraus)
    return states.validate_density_matrix(out, kind="channel-output")


def apply_to_bob(channel: QuantumChannel, w) -> np.ndarray:
    """(I (x) eps)(W) for an operator W on C^d_A (x) C^d"""
    matrix = w.matrix if isinstance(w, DensityMatrix) else qmat.as_matrix(w)
    d_b = channel.dim
    d_a = matrix.shape[0] // d_b
    if d_a * d_b != matrix.shape[0]:
        raise DimensionMismatchError(f"Operator of shape {matrix.shape} has no factor of dimension {d_b}")
    eye = np.eye(d_a, dtype=complex)
    out = np.zeros_like(matrix)
    for k in channel.kraus:
        lifted = np.kron(eye, k)
        out += lifted @ matrix @ lifted.conj().T
    return out


def process_matrix(channel: QuantumChannel) -> ProcessMatrix:
    """sum_m K_m (x) K_m^*, so that |eps(rho)>> = lambda |rho>>"""
    return ProcessMatrix(matrix=sum(np.kron(k, k.conj()) for k in channel.kraus))


def apply_process(pm: ProcessMatrix, rho) -> np.ndarray:
    matrix = rho.matrix if isinstance(rho, DensityMatrix) else qmat.as_matrix(rho)
    return qmat.devectorize(pm.matrix @ qmat.vectorize(matrix))


def is_trace_preserving(pm: ProcessMatrix, tol: float = TP_TOL) -> bool:
    """<<I| lambda = <<I|"""
    left = qmat.vectorize(np.eye(pm.dim)).conj()
    return bool(np.abs(left @ pm.matrix - left).max() <= tol)


def _support_split(rho_t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Pseudo-inverse square root of a PSD matrix and the projector onto its kernel"""
    eig = qmat.hermitian_eig(rho_t)
    keep = eig.eigenvalues > RANK_TOL
    v_keep = eig.eigenvectors[:, keep]
    v_null = eig.eigenvectors[:, ~keep]
    inv_sqrt = (v_keep / np.sqrt(eig.eigenvalues[keep])) @ v_keep.conj().T
    return inv_sqrt, v_null @ v_null.conj().T


def decompose_state(w) -> Tuple[np.ndarray, QuantumChannel]:
    """
    Write W = (I (x) eps)(|sqrt(rho_A)>><<sqrt(rho_A)|).

    With W = sum_m lambda_m |Gamma_m>><<Gamma_m| the Kraus operators are
    B_m = sqrt(lambda_m) Gamma_m^T pinv(sqrt(rho_A^T)). When rho_A is rank
    deficient the kernel projector of rho_A^T completes the set to a trace
    preserving channel; it does not change the reconstruction.
    """
    if not isinstance(w, DensityMatrix):
        w = states.validate_density_matrix(w)
    d = states._bipartite_dim(w)
    rho_a = states.reduced_state(w, "A")
    sqrt_rho_a = qmat.psd_sqrt(rho_a)
    inv_sqrt_t, kernel = _support_split(rho_a.T)

    eig = qmat.hermitian_eig(w.matrix)
    kraus = []
    for value, vector in zip(eig.eigenvalues, eig.eigenvectors.T):
        if value <= RANK_TOL:
            continue
        gamma = qmat.devectorize(vector)
        kraus.append(np.sqrt(value) * gamma.T @ inv_sqrt_t)
    rank_deficient = bool(np.abs(kernel).max() > 0)
    if rank_deficient:
        kraus.append(kernel)
    logging.debug(f"Decomposed state into {len(kraus)} Kraus operators (rank deficient: {rank_deficient})")
    return sqrt_rho_a, validate_channel(QuantumChannel(dim=d, kraus=kraus))


def reconstruct_state(sqrt_rho_a, channel: QuantumChannel) -> np.ndarray:
    """(I (x) eps)(|A>><<A|) for A = sqrt(rho_A)"""
    vec = qmat.vectorize(sqrt_rho_a)
    return apply_to_bob(channel, np.outer(vec, vec.conj()))


def eb_channel(effects, preparations, tol: float = TP_TOL) -> EbChannel:
    """Validated measure-and-prepare channel: POVM {M_y} and states {rho_y}"""
    effects = [qmat.as_matrix(m, "POVM effect") for m in effects]
    preparations = [
        p.matrix if isinstance(p, DensityMatrix) else states.validate_density_matrix(p).matrix
        for p in preparations
    ]
    if not effects or len(effects) != len(preparations):
        raise InvalidChannelError(f"Got {len(effects)} effects for {len(preparations)} preparations")
    d = effects[0].shape[0]
    for m in effects:
        if m.shape != (d, d) or not qmat.is_hermitian(m):
            raise InvalidChannelError("POVM effects must be Hermitian d x d matrices")
        if qmat.hermitian_eig(m).eigenvalues[0] < -tol:
            raise InvalidChannelError("POVM effect is not positive semidefinite")
    if np.abs(sum(effects) - np.eye(d)).max() > tol:
        raise InvalidChannelError("POVM effects do not sum to the identity")
    if any(p.shape != (d, d) for p in preparations):
        raise DimensionMismatchError("Prepared states must match the POVM dimension")
    return EbChannel(effects=effects, preparations=preparations)


def eb_channel_as_kraus(eb: EbChannel) -> Tuple[QuantumChannel, ProcessMatrix]:
    """
    Kraus form K_yij = sqrt(r_j m_i)|f_j><e_i| from the spectral decompositions
    M_y = sum_i m_i |e_i><e_i| and rho_y = sum_j r_j |f_j><f_j|, together with the
    process matrix sum_y |rho_y>><<M_y|.
    """
    kraus: List[np.ndarray] = []
    pm = np.zeros((eb.dim**2, eb.dim**2), dtype=complex)
    for m, rho in zip(eb.effects, eb.preparations):
        m_eig = qmat.hermitian_eig(m)
        r_eig = qmat.hermitian_eig(rho)
        for mi, e in zip(m_eig.eigenvalues, m_eig.eigenvectors.T):
            for rj, f in zip(r_eig.eigenvalues, r_eig.eigenvectors.T):
                weight = mi * rj
                if weight > RANK_TOL**2:
                    kraus.append(np.sqrt(weight) * np.outer(f, e.conj()))
        pm += np.outer(qmat.vectorize(rho), qmat.vectorize(m).conj())
    return validate_channel(QuantumChannel(dim=eb.dim, kraus=kraus), tol=1e-8), ProcessMatrix(matrix=pm)


def random_povm(d: int, outcomes: int, seed=None) -> List[np.ndarray]:
    """M_y = S^{-1/2} G_y S^{-1/2} for random PSD G_y with S = sum_y G_y"""
    rng = qmat.as_rng(seed)
    raw = []
    for _ in range(outcomes):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        raw.append(g @ g.conj().T)
    inv_sqrt, _ = _support_split(sum(raw))
    return [inv_sqrt @ g @ inv_sqrt for g in raw]


def random_eb_channel(d: int, outcomes: Optional[int] = None, seed=None) -> EbChannel:
    rng = qmat.as_rng(seed)
    outcomes = outcomes or d
    effects = random_povm(d, outcomes, rng)
    preparations = [qmat.random_density_matrix(d, rng) for _ in range(outcomes)]
    return eb_channel(effects, preparations)


def choi_state(channel: QuantumChannel) -> DensityMatrix:
    """W_eps = (I (x) eps)(P_+)"""
    out = apply_to_bob(channel, qmat.maximally_entangled_projector(channel.dim))
    return states.validate_density_matrix(out, kind="choi", params={'d': channel.dim})


def entanglement_fidelity(channel: QuantumChannel) -> float:
    """f(psi_+, eps) = Tr(lambda)/d^2 = sum_m |Tr K_m|^2 / d^2"""
    d = channel.dim
    return float(sum(abs(np.trace(k)) ** 2 for k in channel.kraus) / d**2)


def entanglement_fidelity_direct(channel: QuantumChannel) -> float:
    """<psi_+|(I (x) eps)(P_+)|psi_+>"""
    psi = qmat.maximally_entangled_vector(channel.dim)
    out = apply_to_bob(channel, np.outer(psi, psi.conj()))
    return float(np.real(psi.conj() @ out @ psi))


def isotropic_eta_from_fidelity(f: float, d: int) -> float:
    """eta of the isotropic state whose overlap with psi_+ is f"""
    return (d * d * f - 1.0) / (d * d - 1.0)


def isotropic_projection(w) -> DensityMatrix:
    """The exact Haar twirl: the isotropic state with the same psi_+ overlap"""
    if not isinstance(w, DensityMatrix):
        w = states.validate_density_matrix(w)
    d = states._bipartite_dim(w)
    psi = qmat.maximally_entangled_vector(d)
    f = float(np.real(psi.conj() @ w.matrix @ psi))
    return states.isotropic_state(d, isotropic_eta_from_fidelity(f, d))


def twirl(w, samples: int, seed=None) -> DensityMatrix:
    """Monte Carlo average of (U^* (x) U) W (U^* (x) U)^dagger over Haar unitaries U"""
    if not isinstance(w, DensityMatrix):
        w = states.validate_density_matrix(w)
    d = states._bipartite_dim(w)
    matrix = w.matrix

    def chunk(count, rng):
        u = qmat.haar_unitaries(d, count, rng)
        lifted = np.einsum('sij,skl->sikjl', u.conj(), u).reshape(count, d * d, d * d)
        return np.einsum('sab,bc,sdc->ad', lifted, matrix, lifted.conj())

    total = np.sum(qmat.map_sample_chunks(chunk, samples, seed), axis=0)
    out = total / samples
    out = (out + out.conj().T) / 2
    return states.validate_density_matrix(out, kind="twirled", params={'samples': samples, 'seed': seed})
