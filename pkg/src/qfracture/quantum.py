"""Dense statevector simulation of the amplitude-encoding feature circuit.

Basis convention: for an ``n``-qubit register, basis index ``i`` corresponds to
the bitstring of ``i`` written with qubit 0 as the most significant bit.  A
statevector reshaped to ``(2,) * n`` in C order therefore has axis ``q`` for
qubit ``q``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    CapacityError,
    ConfigError,
    DimensionError,
    DuplicateQubitError,
    NormalizationError,
    QubitIndexError,
)

NORM_TOL = 1e-10
ENTANGLEMENTS = ("ring", "linear")
GATE_KINDS = ("RX", "RY", "CNOT")


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ConfigError(f"n_qubits must be positive, got {self.n_qubits}")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.size != 2 ** self.n_qubits:
            raise DimensionError(
                f"{self.n_qubits} qubits need {2 ** self.n_qubits} amplitudes, got {amps.size}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> "StateVector":
        amps = np.zeros(2 ** n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    control: int | None = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigError(f"unsupported gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise ConfigError("CNOT needs a control qubit")
            if self.control == self.target:
                raise DuplicateQubitError("CNOT control and target must differ")

    def qubits(self) -> tuple[int, ...]:
        return (self.control, self.target) if self.kind == "CNOT" else (self.target,)


@dataclass(frozen=True)
class CircuitSpec:
    """Fixed-angle RX/RY + CNOT layered circuit.

    Each layer applies ``RX`` then ``RY`` to every qubit (angles drawn uniformly
    from ``[0, 2*pi)`` by a PRNG seeded with ``angle_seed``), followed by a CNOT
    chain: ``q -> (q + 1) % n`` for ``ring``, ``q -> q + 1`` for ``linear``.
    """

    n_qubits: int = 4
    layers: int = 2
    angle_seed: int = 42
    entanglement: str = "ring"

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ConfigError("n_qubits must be positive")
        if self.layers < 0:
            raise ConfigError("layers must be non-negative")
        if self.entanglement not in ENTANGLEMENTS:
            raise ConfigError(f"entanglement must be one of {ENTANGLEMENTS}")

    def angles(self) -> np.ndarray:
        """Angles of shape ``(layers, n_qubits, 2)``; last axis is (RX, RY)."""
        rng = np.random.default_rng(self.angle_seed)
        return rng.uniform(0.0, 2.0 * math.pi, size=(self.layers, self.n_qubits, 2))

    def gates(self) -> tuple[GateOp, ...]:
        return _build_gates(self.n_qubits, self.layers, self.angle_seed, self.entanglement)

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "layers": self.layers,
            "angle_seed": self.angle_seed,
            "entanglement": self.entanglement,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitSpec":
        unknown = set(d) - {"n_qubits", "layers", "angle_seed", "entanglement"}
        if unknown:
            raise ConfigError(f"unknown circuit keys: {sorted(unknown)}")
        return cls(**d)


def _cnot_pairs(n: int, entanglement: str) -> list[tuple[int, int]]:
    if n < 2:
        return []
    if entanglement == "linear":
        return [(q, q + 1) for q in range(n - 1)]
    if n == 2:
        return [(0, 1), (1, 0)]
    return [(q, (q + 1) % n) for q in range(n)]


@lru_cache(maxsize=64)
def _build_gates(n_qubits, layers, angle_seed, entanglement) -> tuple[GateOp, ...]:
    spec = CircuitSpec(n_qubits, layers, angle_seed, entanglement)
    angles = spec.angles()
    ops = []
    for layer in range(layers):
        for q in range(n_qubits):
            ops.append(GateOp("RX", q, angle=float(angles[layer, q, 0])))
            ops.append(GateOp("RY", q, angle=float(angles[layer, q, 1])))
        for c, t in _cnot_pairs(n_qubits, entanglement):
            ops.append(GateOp("CNOT", t, control=c))
    return tuple(ops)


@dataclass(frozen=True)
class ObservableSet:
    singles: tuple[int, ...] = (0, 1, 2, 3)
    pairs: tuple[tuple[int, int], ...] = ((0, 1), (1, 2), (2, 3), (3, 0))

    def __post_init__(self):
        object.__setattr__(self, "singles", tuple(int(q) for q in self.singles))
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        for a, b in pairs:
            if a == b:
                raise DuplicateQubitError(f"ZZ pair uses qubit {a} twice")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def default_for(cls, n_qubits: int) -> "ObservableSet":
        """All single-qubit Z terms plus nearest-neighbour ring ZZ terms."""
        if n_qubits == 1:
            pairs = ()
        elif n_qubits == 2:
            pairs = ((0, 1),)
        else:
            pairs = tuple((q, (q + 1) % n_qubits) for q in range(n_qubits))
        return cls(tuple(range(n_qubits)), pairs)

    def __len__(self):
        return len(self.singles) + len(self.pairs)

    def max_qubit(self) -> int:
        return max([*self.singles, *(q for p in self.pairs for q in p)], default=-1)

    def to_dict(self) -> dict:
        return {"singles": list(self.singles), "pairs": [list(p) for p in self.pairs]}

    @classmethod
    def from_dict(cls, d: dict) -> "ObservableSet":
        return cls(tuple(d["singles"]), tuple(tuple(p) for p in d["pairs"]))


def amplitude_encode(values, n_qubits: int) -> StateVector:
    """Write ``values`` into the amplitudes of an ``n_qubits`` register.

    The vector is L2-normalised and zero-padded to ``2**n_qubits`` entries.
    Pre-scaling by a power of two (exact in floating point) keeps the result
    bit-identical under dyadic rescaling of the input and avoids overflow.
    """
    if n_qubits < 1:
        raise ConfigError("n_qubits must be positive")
    v = np.asarray(values)
    v = v.astype(np.complex128 if np.iscomplexobj(v) else np.float64).reshape(-1)
    dim = 2 ** n_qubits
    if v.size < 1:
        raise NormalizationError("cannot encode an empty vector")
    if v.size > dim:
        raise CapacityError(f"{v.size} values exceed the {dim} amplitudes of {n_qubits} qubits")
    if not np.all(np.isfinite(v)):
        raise NormalizationError("values must be finite")
    peak = float(np.max(np.abs(v)))
    if peak == 0.0:
        raise NormalizationError("cannot normalise an all-zero vector")
    _, exp = math.frexp(peak)
    v = v * 2.0 ** -exp
    v = v / np.sqrt(np.sum(np.abs(v) ** 2))
    amps = np.zeros(dim, dtype=np.complex128)
    amps[: v.size] = v
    return StateVector(n_qubits, amps)


def _check_qubit(q, n):
    if not 0 <= q < n:
        raise QubitIndexError(f"qubit {q} out of range for {n}-qubit state")


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    raise ConfigError(f"{kind} is not a rotation gate")


def _apply_inplace(psi: np.ndarray, gate: GateOp, n: int) -> np.ndarray:
    # psi has shape (2,) * n
    if gate.kind == "CNOT":
        sl = [slice(None)] * n
        sl[gate.control] = 1
        sl = tuple(sl)
        axis = gate.target - (gate.target > gate.control)
        psi = psi.copy()
        psi[sl] = np.flip(psi[sl], axis=axis)
        return psi
    u = rotation_matrix(gate.kind, gate.angle)
    return np.moveaxis(np.tensordot(u, psi, axes=([1], [gate.target])), 0, gate.target)


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    n = state.n_qubits
    for q in gate.qubits():
        _check_qubit(q, n)
    psi = _apply_inplace(state.amplitudes.reshape((2,) * n), gate, n)
    return StateVector(n, psi.reshape(-1))


def run_circuit(state: StateVector, spec: CircuitSpec) -> StateVector:
    n = state.n_qubits
    if spec.n_qubits != n:
        raise DimensionError(f"circuit has {spec.n_qubits} qubits, state has {n}")
    psi = state.amplitudes.reshape((2,) * n)
    for gate in spec.gates():
        psi = _apply_inplace(psi, gate, n)
    return StateVector(n, psi.reshape(-1))


def _bits(n: int, q: int) -> np.ndarray:
    return (np.arange(2 ** n) >> (n - 1 - q)) & 1


def expectation_z(state: StateVector, qubit: int) -> float:
    n = state.n_qubits
    _check_qubit(qubit, n)
    signs = 1 - 2 * _bits(n, qubit)
    return float(np.clip(np.sum(state.probabilities() * signs), -1.0, 1.0))


def expectation_zz(state: StateVector, q1: int, q2: int) -> float:
    n = state.n_qubits
    if q1 == q2:
        raise DuplicateQubitError(f"ZZ correlator needs two distinct qubits, got {q1} twice")
    _check_qubit(q1, n)
    _check_qubit(q2, n)
    signs = 1 - 2 * (_bits(n, q1) ^ _bits(n, q2))
    return float(np.clip(np.sum(state.probabilities() * signs), -1.0, 1.0))


def measure_observables(state: StateVector, obs: ObservableSet) -> np.ndarray:
    feats = [expectation_z(state, q) for q in obs.singles]
    feats += [expectation_zz(state, a, b) for a, b in obs.pairs]
    return np.array(feats, dtype=np.float64)


def extract_quantum_features(
    values, spec: CircuitSpec | None = None, obs: ObservableSet | None = None
) -> np.ndarray:
    """Encode ``values``, run the circuit and return the observable expectations."""
    spec = spec or CircuitSpec()
    obs = obs or ObservableSet()
    if obs.max_qubit() >= spec.n_qubits:
        raise QubitIndexError(f"observable qubit {obs.max_qubit()} outside {spec.n_qubits}-qubit circuit")
    state = amplitude_encode(values, spec.n_qubits)
    return measure_observables(run_circuit(state, spec), obs)


def extract_quantum_features_batch(X, spec=None, obs=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    spec = spec or CircuitSpec()
    obs = obs or ObservableSet()
    out = np.empty((X.shape[0], len(obs)))
    for i, row in enumerate(X):
        out[i] = extract_quantum_features(row, spec, obs)
    return out
