"""
Data models for steerlab.
This module defines the domain types shared by the compute modules, their JSON
forms, and the error hierarchy raised when an input breaks a type's invariants.
"""

from dataclasses import dataclass, field
from typing import Optional, List, Dict, Any, Tuple
import json

import numpy as np

STEERABLE = "steerable-A-to-B"
INCONCLUSIVE = "inconclusive"
VERDICTS = (STEERABLE, INCONCLUSIVE)


# --- Errors ---

class SteeringError(ValueError):
    """Base class for invalid inputs to steerlab operations."""


class DimensionMismatchError(SteeringError):
    pass


class NotHermitianError(SteeringError):
    pass


class InvalidStateError(SteeringError):
    pass


class InvalidMeasurementError(SteeringError):
    pass


class InvalidChannelError(SteeringError):
    pass


class InvalidArgumentError(SteeringError):
    """Sample counts, trial counts and similar parameters out of range."""


class EnumerationCapError(SteeringError):
    """Raised when an exact enumeration would exceed the configured cap."""


# --- JSON helpers for complex arrays ---

def matrix_to_dict(m: np.ndarray) -> Dict[str, Any]:
    """Serialize a complex matrix as {rows, cols, re, im} in row-major order."""
    m = np.asarray(m, dtype=complex)
    return {
        'rows': int(m.shape[0]),
        'cols': int(m.shape[1]),
        're': [float(x) for x in m.real.ravel()],
        'im': [float(x) for x in m.imag.ravel()],
    }


def matrix_from_dict(data: Dict[str, Any]) -> np.ndarray:
    rows, cols = int(data['rows']), int(data['cols'])
    re = np.asarray(data['re'], dtype=float)
    im = np.asarray(data.get('im', [0.0] * (rows * cols)), dtype=float)
    if re.size != rows * cols or im.size != rows * cols:
        raise DimensionMismatchError(f"Matrix payload has {re.size} entries, expected {rows * cols}")
    return (re + 1j * im).reshape(rows, cols)


def vector_to_dict(v: np.ndarray) -> Dict[str, Any]:
    v = np.asarray(v, dtype=complex).ravel()
    return {'re': [float(x) for x in v.real], 'im': [float(x) for x in v.imag]}


def vector_from_dict(data: Dict[str, Any]) -> np.ndarray:
    re = np.asarray(data['re'], dtype=float)
    im = np.asarray(data.get('im', [0.0] * re.size), dtype=float)
    return re + 1j * im


# --- Linear-algebra value types ---

@dataclass
class HermitianEig:
    """Spectral decomposition with ascending eigenvalues and eigenvectors as columns."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def max_pair(self) -> Tuple[float, np.ndarray]:
        return float(self.eigenvalues[-1]), self.eigenvectors[:, -1]

    def min_pair(self) -> Tuple[float, np.ndarray]:
        return float(self.eigenvalues[0]), self.eigenvectors[:, 0]


@dataclass
class BlochVector:
    """Real three-vector r with rho = (I + r.sigma)/2 for qubits"""
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def from_array(cls, r) -> "BlochVector":
        r = np.asarray(r, dtype=float).ravel()
        if r.size != 3:
            raise DimensionMismatchError(f"Bloch vector needs 3 components, got {r.size}")
        return cls(float(r[0]), float(r[1]), float(r[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def is_unit(self, tol: float = 1e-12) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def to_dict(self) -> Dict[str, Any]:
        return {'x': self.x, 'y': self.y, 'z': self.z}


# --- States and assemblages ---

@dataclass
class DensityMatrix:
    """A validated d x d density matrix, tagged with the family it was built from"""
    dim: int
    matrix: np.ndarray
    kind: str = "custom"
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'dim': int(self.dim),
            'params': dict(self.params),
            'matrix': matrix_to_dict(self.matrix),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DensityMatrix":
        return cls(
            dim=int(data['dim']),
            matrix=matrix_from_dict(data['matrix']),
            kind=data.get('kind', 'custom'),
            params=dict(data.get('params', {})),
        )


@dataclass
class TState:
    """Diagonal correlation entries (t1, t2, t3) of a two-qubit T-state."""
    t: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.t, dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {'t': [float(x) for x in self.t]}


@dataclass
class Assemblage:
    """Unnormalized conditional states; members[mu, a] is a d x d matrix."""
    members: np.ndarray

    @property
    def settings(self) -> int:
        return int(self.members.shape[0])

    @property
    def outcomes(self) -> int:
        return int(self.members.shape[1])

    @property
    def dim(self) -> int:
        return int(self.members.shape[-1])

    def bob_reduced(self, mu: int = 0) -> np.ndarray:
        return self.members[mu].sum(axis=0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': 'assemblage',
            'dim': self.dim,
            'params': {'settings': self.settings, 'outcomes': self.outcomes},
            'members': [[matrix_to_dict(m) for m in row] for row in self.members],
        }


# --- Measurements ---

@dataclass
class MeasurementSet:
    """
    Weighted rank-one projective measurements.
    bases[mu][:, a] is the vector |phi^a_mu>; weights[mu] is q_mu.
    """
    dim: int
    weights: np.ndarray
    bases: np.ndarray

    @property
    def settings(self) -> int:
        return int(self.bases.shape[0])

    def projectors(self) -> np.ndarray:
        """Array P with P[mu, a] = |phi^a_mu><phi^a_mu|."""
        return np.einsum('mia,mja->maij', self.bases, self.bases.conj())

    def setting(self, mu: int) -> Tuple[float, np.ndarray]:
        return float(self.weights[mu]), self.bases[mu]

    def to_dict(self) -> Dict[str, Any]:
        settings = []
        for mu in range(self.settings):
            settings.append({
                'q': float(self.weights[mu]),
                'basis': [vector_to_dict(self.bases[mu][:, a]) for a in range(self.dim)],
            })
        return {'dim': int(self.dim), 'settings': settings}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MeasurementSet":
        d = int(data['dim'])
        weights = np.array([float(s['q']) for s in data['settings']])
        bases = np.array([
            np.column_stack([vector_from_dict(v) for v in s['basis']]) for s in data['settings']
        ]).reshape(len(weights), d, d)
        return cls(dim=d, weights=weights, bases=bases)


@dataclass
class UnitaryRelation:
    """U with |phi^b_2> = sum_a U[b, a] |phi^a_1>"""
    u: np.ndarray

    def max_modulus(self) -> float:
        return float(np.abs(self.u).max())


# --- Thresholds ---

@dataclass
class DeterministicAssignment:
    k: Tuple[int, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {'k': [int(x) for x in self.k]}


@dataclass
class ResponseFunction:
    """Response table p[mu, xi, a] = p(a | mu, xi), normalized over a."""
    table: np.ndarray


@dataclass
class NstResult:
    """Nonsteering thresholds for one Bob measurement scenario, with provenance"""
    d: int
    n: Optional[int]
    f_plus: float
    f_minus: float
    witness_plus: Optional[Tuple[DeterministicAssignment, np.ndarray]] = None
    witness_minus: Optional[Tuple[DeterministicAssignment, np.ndarray]] = None
    method: str = "enumerate"
    samples: Optional[int] = None
    stderr: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        witnesses = {}
        for label, witness in (('plus', self.witness_plus), ('minus', self.witness_minus)):
            if witness is None:
                witnesses[label] = None
            else:
                assignment, vector = witness
                witnesses[label] = {
                    'assignment': assignment.to_dict()['k'],
                    'eigenvector': vector_to_dict(vector),
                }
        return {
            'd': int(self.d),
            'N': None if self.n is None else int(self.n),
            'f_plus': float(self.f_plus),
            'f_minus': float(self.f_minus),
            'witnesses': witnesses,
            'method': self.method,
            'samples': self.samples,
            'stderr': None if self.stderr is None else float(self.stderr),
            'details': dict(self.details),
        }


# --- Criteria ---

@dataclass
class ExtremalFidelity:
    """Extremal averaged fidelities over Alice's projective measurements"""
    f_plus_bar: float
    f_minus_bar: float
    alice_witness: MeasurementSet
    alice_witness_minus: MeasurementSet
    exact: bool = True
    stderr_plus: float = 0.0
    stderr_minus: float = 0.0
    per_setting_plus: List[float] = field(default_factory=list)
    per_setting_minus: List[float] = field(default_factory=list)
    trace: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'f_plus_bar': float(self.f_plus_bar),
            'f_minus_bar': float(self.f_minus_bar),
            'exact': self.exact,
            'stderr_plus': float(self.stderr_plus),
            'stderr_minus': float(self.stderr_minus),
            'per_setting_plus': [float(x) for x in self.per_setting_plus],
            'per_setting_minus': [float(x) for x in self.per_setting_minus],
        }


@dataclass
class CriterionReport:
    """Outcome of one steering criterion, with the numbers that produced it"""
    kind: str
    averaged_fidelity: float
    thresholds: Tuple[float, float]
    verdict: str = INCONCLUSIVE
    margin: float = 0.0
    error_budget: float = 1e-9
    witness: Optional[Dict[str, Any]] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def steerable(self) -> bool:
        return self.verdict == STEERABLE

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'F_bar': float(self.averaged_fidelity),
            'thresholds': {'f_minus': float(self.thresholds[0]), 'f_plus': float(self.thresholds[1])},
            'margin': float(self.margin),
            'verdict': self.verdict,
            'error_budget': float(self.error_budget),
            'witness': self.witness,
            'details': self.details,
        }


# --- Channels ---

@dataclass
class QuantumChannel:
    """A square channel given by its Kraus operators"""
    dim: int
    kraus: List[np.ndarray] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'dim': int(self.dim), 'kraus': [matrix_to_dict(k) for k in self.kraus]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QuantumChannel":
        return cls(dim=int(data['dim']), kraus=[matrix_from_dict(k) for k in data['kraus']])


@dataclass
class EbChannel:
    """Measure-and-prepare channel: outcome y of POVM {M_y} prepares rho_y."""
    effects: List[np.ndarray] = field(default_factory=list)
    preparations: List[np.ndarray] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return int(self.effects[0].shape[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'effects': [matrix_to_dict(m) for m in self.effects],
            'preparations': [matrix_to_dict(r) for r in self.preparations],
        }


@dataclass
class ProcessMatrix:
    """d^2 x d^2 matrix sum_m K_m (x) K_m^* acting on row-major vectorized operators"""
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))


# --- CLI runs ---

@dataclass
class RunConfig:
    """Everything needed to reproduce one CLI report"""
    command: str = ""
    state: Dict[str, Any] = field(default_factory=dict)
    measurement: Dict[str, Any] = field(default_factory=dict)
    mc: Dict[str, Any] = field(default_factory=lambda: {'samples': None, 'seed': 0})
    quadrature: Dict[str, Any] = field(default_factory=lambda: {'resolution': 64})
    output: Dict[str, Any] = field(default_factory=lambda: {'path': None, 'format': 'json'})
    options: Dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.mc.get('seed', 0))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'state': dict(self.state),
            'measurement': dict(self.measurement),
            'mc': dict(self.mc),
            'quadrature': dict(self.quadrature),
            'output': dict(self.output),
            'options': dict(self.options),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        config = cls(command=data.get('command', ''))
        for key in ('state', 'measurement', 'mc', 'quadrature', 'output', 'options'):
            if key in data and data[key] is not None:
                merged = getattr(config, key)
                merged.update(data[key])
        return config


@dataclass
class RunRecord:
    """A row of the run ledger"""
    id: Optional[int] = None
    command: str = ""
    config_json: str = ""
    report_json: str = ""
    seed: int = 0
    created_date: Optional[str] = None

    def get_config_dict(self) -> Dict[str, Any]:
        """Parse the stored RunConfig JSON string"""
        try:
            return json.loads(self.config_json) if self.config_json else {}
        except json.JSONDecodeError:
            return {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'id': self.id,
            'command': self.command,
            'seed': self.seed,
            'created_date': self.created_date,
        }


def create_run_from_row(row) -> RunRecord:
    """Create RunRecord object from database row"""
    return RunRecord(
        id=row[0] if row else None,
        command=row[1] if len(row) > 1 else "",
        config_json=row[2] if len(row) > 2 else "",
        report_json=row[3] if len(row) > 3 else "",
        seed=row[4] if len(row) > 4 else 0,
        created_date=row[5] if len(row) > 5 else None,
    )
