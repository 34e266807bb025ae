"""
Nonsteering thresholds.

For a finite Bob measurement set the thresholds are the extremal eigenvalues of
rho_bar_k = sum_mu q_mu Phi^{k_mu}_mu over all d^N deterministic assignments k.
For Bob's continuous Haar-distributed settings they are H_d/d and 1/d^2.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Tuple

import numpy as np

import config
import qmat
from measurements import bloch_directions, unitary_relation
from models import (
    MeasurementSet, NstResult, DeterministicAssignment,
    EnumerationCapError, InvalidArgumentError, InvalidMeasurementError, SteeringError,
)

TIE_TOL = 1e-12
ENUM_CHUNK = 4096
MIN_MC_SAMPLES = 1000


def harmonic_number(d: int) -> float:
    return float(sum(1.0 / n for n in range(1, d + 1)))


def _assignment_digits(start: int, stop: int, d: int, n: int) -> np.ndarray:
    """Rows k for assignment indices [start, stop); the first setting is the most significant digit."""
    idx = np.arange(start, stop, dtype=np.int64)
    powers = d ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % d


def _first_within(values: np.ndarray, target: float, larger: bool) -> int:
    if larger:
        hits = np.nonzero(values >= target - TIE_TOL)[0]
    else:
        hits = np.nonzero(values <= target + TIE_TOL)[0]
    return int(hits[0])


def nst_enumerate(bob: MeasurementSet) -> NstResult:
    """
    Exact thresholds by enumerating every deterministic assignment.

    Raises EnumerationCapError when d^N exceeds the configured cap. Among
    assignments whose eigenvalue ties within 1e-12 the smallest index wins.
    """
    d, n = bob.dim, bob.settings
    total = d ** n
    cap = config.enumeration_cap()
    if total > cap:
        raise EnumerationCapError(f"Enumeration needs {total} assignments, cap is {cap}")
    weighted = bob.weights[:, None, None, None] * bob.projectors()
    settings_idx = np.arange(n)

    def scan(bounds):
        start, stop = bounds
        digits = _assignment_digits(start, stop, d, n)
        rho_bar = weighted[settings_idx[None, :], digits].sum(axis=1)
        values, vectors = np.linalg.eigh(rho_bar)
        top, bottom = values[:, -1], values[:, 0]
        i_max = _first_within(top, top.max(), larger=True)
        i_min = _first_within(bottom, bottom.min(), larger=False)
        return (
            (top[i_max], start + i_max, vectors[i_max, :, -1]),
            (bottom[i_min], start + i_min, vectors[i_min, :, 0]),
        )

    chunks = [(s, min(s + ENUM_CHUNK, total)) for s in range(0, total, ENUM_CHUNK)]
    workers = min(config.worker_count(), len(chunks))
    logging.debug(f"Enumerating {total} assignments (d={d}, N={n}) on {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(scan, chunks))

    best_plus = max(r[0][0] for r in results)
    best_minus = min(r[1][0] for r in results)
    plus = next(r[0] for r in results if r[0][0] >= best_plus - TIE_TOL)
    minus = next(r[1] for r in results if r[1][0] <= best_minus + TIE_TOL)

    def witness(entry):
        _, index, vector = entry
        return next(enumerate_assignments(bob, index, index + 1)), vector

    return NstResult(
        d=d, n=n,
        f_plus=float(min(plus[0], 1.0)),
        f_minus=float(max(minus[0], 0.0)),
        witness_plus=witness(plus),
        witness_minus=witness(minus),
        method="enumerate",
    )


def rho_bar(bob: MeasurementSet, assignment: DeterministicAssignment) -> np.ndarray:
    """sum_mu q_mu Phi^{k_mu}_mu"""
    k = np.asarray(assignment.k, dtype=int)
    if k.size != bob.settings or np.any(k < 0) or np.any(k >= bob.dim):
        raise InvalidMeasurementError(f"Assignment {assignment.k} does not fit {bob.settings} settings of dimension {bob.dim}")
    projectors = bob.projectors()[np.arange(bob.settings), k]
    return np.einsum('m,mij->ij', bob.weights, projectors)


def two_setting_closed_form(bob: MeasurementSet) -> Tuple[float, float]:
    """
    Thresholds for two rank-one settings from the largest overlap |U_ab|.

    For weights (q1, q2) the top eigenvalue of q1 Phi^a_1 + q2 Phi^b_2 is
    (1 + sqrt(1 - 4 q1 q2 (1 - |U_ab|^2)))/2; equal weights give (1 + max|U_ab|)/2.
    The lower threshold is the matching small eigenvalue for qubits and 0 for d > 2.
    """
    s = unitary_relation(bob).max_modulus()
    q1, q2 = bob.weights
    root = np.sqrt(max(1.0 - 4.0 * q1 * q2 * (1.0 - s * s), 0.0))
    f_plus = (1.0 + root) / 2.0
    f_minus = (1.0 - root) / 2.0 if bob.dim == 2 else 0.0
    return float(f_plus), float(f_minus)


def nst_probabilistic_check(bob: MeasurementSet, trials: int, seed=None,
                            nst: Optional[NstResult] = None, concentration: float = 0.5) -> dict:
    """
    Randomized check that no probabilistic response beats the deterministic thresholds.

    Each trial draws a Dirichlet response table p(a|mu) and a Haar-random pure
    state |phi>, then evaluates sum_mu q_mu <phi| sum_a p(a|mu) Phi^a_mu |phi>.
    """
    if trials < 1:
        raise InvalidArgumentError(f"nst_probabilistic_check needs at least one trial, got {trials}")
    nst = nst or nst_enumerate(bob)
    rng = qmat.as_rng(seed)
    d, n = bob.dim, bob.settings
    phi = qmat.haar_unitaries(d, trials, rng)[:, :, 0]
    responses = rng.dirichlet(np.full(d, concentration), size=(trials, n))
    overlaps = np.abs(np.einsum('mia,si->sma', bob.bases.conj(), phi)) ** 2
    values = np.einsum('m,sma,sma->s', bob.weights, responses, overlaps)
    above = int(np.count_nonzero(values > nst.f_plus + 1e-9))
    below = int(np.count_nonzero(values < nst.f_minus - 1e-9))
    if above or below:
        logging.warning(f"Probabilistic check found {above + below} violations of the deterministic thresholds")
    return {
        'trials': int(trials),
        'violations': above + below,
        'above_f_plus': above,
        'below_f_minus': below,
        'max_value': float(values.max()),
        'min_value': float(values.min()),
        'f_plus': nst.f_plus,
        'f_minus': nst.f_minus,
    }


def geometric_nst(bob: MeasurementSet) -> Tuple[float, float, float]:
    """
    Geometric thresholds g_+/- = +/- r_opt for qubits, where r_opt is the longest
    sum_mu (+/-) q_mu n_mu over all sign patterns.
    """
    if bob.dim != 2:
        raise InvalidMeasurementError(f"geometric_nst applies to qubits only, got d={bob.dim}")
    n = bob.settings
    if n > 30:
        raise InvalidMeasurementError(f"geometric_nst supports at most 30 settings, got {n}")
    patterns = 2 ** (n - 1)
    if patterns > config.enumeration_cap():
        raise EnumerationCapError(f"Sign enumeration needs {patterns} patterns, cap is {config.enumeration_cap()}")
    vectors = bob.weights[:, None] * bloch_directions(bob)
    best = 0.0
    # the first sign is fixed to +, the global flip gives the same length
    for start in range(0, patterns, ENUM_CHUNK):
        idx = np.arange(start, min(start + ENUM_CHUNK, patterns), dtype=np.int64)
        bits = (idx[:, None] >> np.arange(n - 1, dtype=np.int64)[None, :]) & 1
        signs = np.concatenate([np.ones((idx.size, 1)), 1 - 2 * bits], axis=1)
        lengths = np.linalg.norm(signs @ vectors, axis=1)
        best = max(best, float(lengths.max()))
    return best, -best, best


def continuous_thresholds(d: int) -> Tuple[float, float]:
    """(H_d/d, 1/d^2) for Bob's Haar-continuous settings"""
    if d < 2:
        raise SteeringError(f"Continuous thresholds need d >= 2, got {d}")
    return harmonic_number(d) / d, 1.0 / d**2


def continuous_nst(d: int) -> NstResult:
    f_plus, f_minus = continuous_thresholds(d)
    return NstResult(d=d, n=None, f_plus=f_plus, f_minus=f_minus, method="analytic")


def continuous_threshold_mc(d: int, samples: int, seed=None) -> NstResult:
    """
    Monte Carlo estimate of the continuous thresholds.

    A Haar state phi with p_a = |<a|phi>|^2 contributes max_a p_a to the upper
    threshold and min_a p_a to the lower one, the optimal deterministic responses
    with ties to the smallest index. For qubits the northern-hemisphere share
    E[p_0 1{p_0 > p_1}] is reported as well.
    """
    if samples < MIN_MC_SAMPLES:
        raise SteeringError(f"continuous_threshold_mc needs at least {MIN_MC_SAMPLES} samples, got {samples}")

    def chunk(count, rng):
        phi = qmat.haar_unitaries(d, count, rng)[:, :, 0]
        p = np.abs(phi) ** 2
        hi, lo = p.max(axis=1), p.min(axis=1)
        north = p[:, 0] * (p[:, 0] > p[:, -1])
        return np.array([
            hi.sum(), (hi**2).sum(), lo.sum(), (lo**2).sum(), north.sum(), (north**2).sum(),
        ])

    sums = np.sum(qmat.map_sample_chunks(chunk, samples, seed), axis=0)

    def mean_and_stderr(total, total_sq):
        mean = total / samples
        var = max(total_sq / samples - mean**2, 0.0) * samples / (samples - 1)
        return float(mean), float(np.sqrt(var / samples))

    f_plus, err_plus = mean_and_stderr(sums[0], sums[1])
    f_minus, err_minus = mean_and_stderr(sums[2], sums[3])
    details = {'stderr_plus': err_plus, 'stderr_minus': err_minus, 'seed': seed}
    if d == 2:
        north, err_north = mean_and_stderr(sums[4], sums[5])
        details.update({'northern_hemisphere': north, 'northern_hemisphere_stderr': err_north})
    logging.info(f"Continuous thresholds d={d} by MC: F+={f_plus:.6f} F-={f_minus:.6f} ({samples} samples)")
    return NstResult(
        d=d, n=None, f_plus=f_plus, f_minus=f_minus,
        method="mc", samples=int(samples), stderr=max(err_plus, err_minus), details=details,
    )


def enumerate_assignments(bob: MeasurementSet, start: int = 0, stop: Optional[int] = None):
    """Lazily yield DeterministicAssignments for indices [start, stop) in index order"""
    total = bob.dim ** bob.settings
    stop = total if stop is None else min(stop, total)
    for block in range(start, stop, ENUM_CHUNK):
        for row in _assignment_digits(block, min(block + ENUM_CHUNK, stop), bob.dim, bob.settings):
            yield DeterministicAssignment(k=tuple(int(x) for x in row))
