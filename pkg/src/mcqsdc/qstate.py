"""Exact dense statevector simulation for registers of up to eight qubits.

Qubit 0 is the most significant bit of every basis label, so the amplitude of
``|b0 b1 ... b(n-1)>`` lives at index ``int("b0b1...", 2)``. States are
immutable from the caller's point of view: every operation returns a new
:class:`StateVector`.

Measurements are described by a :class:`MeasurementSpec`, an ordered product of
factors, each measuring a disjoint qubit subset in the Z, X, Bell or GHZ basis.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _backend

MAX_QUBITS = 8
NORM_TOL = 1e-10
UNITARY_TOL = 1e-12
ZERO_PROB = 1e-9

_S = 1 / math.sqrt(2)


class QStateError(ValueError):
    """Malformed register, gate target or measurement request."""


class Op(enum.Enum):
    """The single-qubit operator alphabet: Paulis {I, Z, X, iY} and Hadamard."""

    I = "I"
    Z = "Z"
    X = "X"
    IY = "iY"
    H = "H"

    @property
    def matrix(self) -> np.ndarray:
        return _MATRICES[self]

    @property
    def is_pauli(self) -> bool:
        return self is not Op.H

    def __str__(self) -> str:
        return self.value


# iY sends |0> -> -|1> and |1> -> |0>; the columns are the images of |0>, |1>.
_MATRICES = {
    Op.I: np.array([[1, 0], [0, 1]], dtype=complex),
    Op.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    Op.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Op.IY: np.array([[0, 1], [-1, 0]], dtype=complex),
    Op.H: np.array([[1, 1], [1, -1]], dtype=complex) * _S,
}
_ADJOINTS = {op: np.ascontiguousarray(m.conj().T) for op, m in _MATRICES.items()}
for _m in list(_MATRICES.values()) + list(_ADJOINTS.values()):
    _m.setflags(write=False)

PAULIS = (Op.I, Op.Z, Op.X, Op.IY)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized amplitudes of an ``num_qubits`` register."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise QStateError(f"register size must be in 1..{MAX_QUBITS}, got {self.num_qubits}")
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise QStateError("amplitude vector length must be 2**num_qubits")
        self.amplitudes.setflags(write=False)

    @classmethod
    def _wrap(cls, num_qubits: int, amps: np.ndarray) -> "StateVector":
        # trusted internal constructor; callers guarantee normalization
        state = object.__new__(cls)
        object.__setattr__(state, "num_qubits", num_qubits)
        object.__setattr__(state, "amplitudes", amps)
        amps.setflags(write=False)
        return state

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        """Computational basis state ``|bits>``."""
        return make_state(len(bits), [(bits, 1)])

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def amplitude(self, bits: str) -> complex:
        return complex(self.amplitudes[int(bits, 2)])

    def inner(self, other: "StateVector") -> complex:
        """``<self|other>``."""
        _same_size(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def __neg__(self) -> "StateVector":
        return StateVector._wrap(self.num_qubits, -self.amplitudes)

    def __repr__(self) -> str:
        terms = []
        for i, a in enumerate(self.amplitudes):
            if abs(a) > 1e-12:
                terms.append(f"({a.real:+.4f}{a.imag:+.4f}j)|{i:0{self.num_qubits}b}>")
        return "StateVector(" + " ".join(terms) + ")"


def _same_size(a: StateVector, b: StateVector) -> None:
    if a.num_qubits != b.num_qubits:
        raise QStateError(f"register sizes differ: {a.num_qubits} vs {b.num_qubits}")


def make_state(num_qubits: int, assignments: Iterable[tuple[str, complex]]) -> StateVector:
    """Build a normalized state from ``(basis string, amplitude)`` pairs.

    >>> make_state(2, [("00", 1), ("11", -1)]).amplitude("11")
    (-0.7071067811865475+0j)
    """
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise QStateError(f"register size must be in 1..{MAX_QUBITS}, got {num_qubits}")
    amps = np.zeros(2**num_qubits, dtype=complex)
    seen = set()
    for bits, value in assignments:
        if len(bits) != num_qubits or set(bits) - {"0", "1"}:
            raise QStateError(f"basis string {bits!r} is not a {num_qubits}-bit label")
        if bits in seen:
            raise QStateError(f"duplicate basis string {bits!r}")
        seen.add(bits)
        amps[int(bits, 2)] = value
    norm = np.linalg.norm(amps)
    if norm < NORM_TOL:
        raise QStateError("cannot normalize an all-zero amplitude list")
    return StateVector._wrap(num_qubits, amps / norm)


def from_amplitudes(amplitudes: Sequence[complex]) -> StateVector:
    amps = np.array(amplitudes, dtype=complex)
    n = int(round(math.log2(len(amps)))) if len(amps) else 0
    if len(amps) != 2**n:
        raise QStateError("amplitude count must be a power of two")
    norm = np.linalg.norm(amps)
    if norm < NORM_TOL:
        raise QStateError("cannot normalize an all-zero amplitude list")
    return StateVector(n, amps / norm)


def _check_qubit(state: StateVector, qubit: int) -> None:
    if not 0 <= qubit < state.num_qubits:
        raise QStateError(f"qubit {qubit} out of range for a {state.num_qubits}-qubit register")


def apply_matrix(state: StateVector, matrix: np.ndarray, qubits: Sequence[int]) -> StateVector:
    """Apply a unitary on ``qubits`` (first listed qubit is the matrix's MSB)."""
    targets = tuple(int(q) for q in qubits)
    for q in targets:
        _check_qubit(state, q)
    if len(set(targets)) != len(targets):
        raise QStateError("repeated target qubit")
    amps = _backend.apply_matrix(state.amplitudes, state.num_qubits, targets, matrix)
    return StateVector._wrap(state.num_qubits, amps)


def apply_1q(state: StateVector, op: Op, qubit: int, *, adjoint: bool = False) -> StateVector:
    """Apply ``op`` (or its adjoint) to one qubit."""
    _check_qubit(state, qubit)
    matrix = _ADJOINTS[op] if adjoint else _MATRICES[op]
    amps = _backend.apply_matrix(state.amplitudes, state.num_qubits, (qubit,), matrix)
    return StateVector._wrap(state.num_qubits, amps)


def apply_sequence(state: StateVector, ops: Iterable[tuple[Op, int]]) -> StateVector:
    for op, qubit in ops:
        state = apply_1q(state, op, qubit)
    return state


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product; ``a``'s qubits come first."""
    n = a.num_qubits + b.num_qubits
    if n > MAX_QUBITS:
        raise QStateError(f"combined register of {n} qubits exceeds the {MAX_QUBITS}-qubit cap")
    return StateVector._wrap(n, np.kron(a.amplitudes, b.amplitudes))


def drop_qubits(state: StateVector, qubits: Sequence[int], tol: float = 1e-9) -> StateVector:
    """Remove qubits that are in a product state with the rest of the register.

    Raises QStateError if the dropped qubits are entangled with the remainder.
    """
    drop = sorted(set(qubits))
    for q in drop:
        _check_qubit(state, q)
    keep = [q for q in range(state.num_qubits) if q not in drop]
    if not keep:
        raise QStateError("cannot drop every qubit")
    tensor_ = state.amplitudes.reshape((2,) * state.num_qubits)
    mat = np.moveaxis(tensor_, keep + drop, range(state.num_qubits)).reshape(2 ** len(keep), -1)
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    if len(s) > 1 and s[1] > tol:
        raise QStateError("dropped qubits are entangled with the kept register")
    kept = u[:, 0] * s[0]
    # fix the arbitrary SVD phase so the result is reproducible
    pivot = kept[np.argmax(np.abs(kept) > 1e-12)]
    kept = kept * (abs(pivot) / pivot)
    return StateVector._wrap(len(keep), np.ascontiguousarray(kept / np.linalg.norm(kept)))


def equal_up_to_global_phase(a: StateVector, b: StateVector, tol: float = 1e-10) -> bool:
    _same_size(a, b)
    return abs(a.inner(b)) >= 1 - tol


# --------------------------------------------------------------------------
# measurement bases
# --------------------------------------------------------------------------

class Basis(enum.Enum):
    Z = "Z"
    X = "X"
    BELL = "Bell"
    GHZ = "GHZ"

    @property
    def width(self) -> int:
        return _BASIS_WIDTH[self]

    @property
    def labels(self) -> tuple:
        return _BASIS_LABELS[self]

    @property
    def vectors(self) -> np.ndarray:
        """Basis vectors as matrix columns, in label order."""
        return _BASIS_VECTORS[self]


BELL_LABELS = ("phi+", "phi-", "psi+", "psi-")
GHZ_LABELS = (1, 2, 3, 4, 5, 6, 7, 8)

# (|a> + sign |b>) / sqrt2 for the eight GHZ states, in the published order
GHZ_TERMS = (
    ("000", "111", 1), ("000", "111", -1),
    ("100", "011", 1), ("100", "011", -1),
    ("010", "101", 1), ("010", "101", -1),
    ("110", "001", 1), ("110", "001", -1),
)


def _columns(n: int, terms) -> np.ndarray:
    vecs = np.zeros((2**n, len(terms)), dtype=complex)
    for col, (a, b, sign) in enumerate(terms):
        vecs[int(a, 2), col] = _S
        vecs[int(b, 2), col] = sign * _S
    return vecs


_BASIS_WIDTH = {Basis.Z: 1, Basis.X: 1, Basis.BELL: 2, Basis.GHZ: 3}
_BASIS_LABELS = {
    Basis.Z: (0, 1),
    Basis.X: ("+", "-"),
    Basis.BELL: BELL_LABELS,
    Basis.GHZ: GHZ_LABELS,
}
_BASIS_VECTORS = {
    Basis.Z: np.eye(2, dtype=complex),
    Basis.X: np.array([[1, 1], [1, -1]], dtype=complex) * _S,
    Basis.BELL: _columns(2, [("00", "11", 1), ("00", "11", -1), ("01", "10", 1), ("01", "10", -1)]),
    Basis.GHZ: _columns(3, GHZ_TERMS),
}
_BASIS_ADJOINT = {b: np.ascontiguousarray(v.conj().T) for b, v in _BASIS_VECTORS.items()}
for _v in list(_BASIS_VECTORS.values()) + list(_BASIS_ADJOINT.values()):
    _v.setflags(write=False)


@dataclass(frozen=True)
class Factor:
    qubits: tuple[int, ...]
    basis: Basis

    def __post_init__(self) -> None:
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != self.basis.width:
            raise QStateError(
                f"{self.basis.value} factor needs {self.basis.width} qubit(s), got {len(self.qubits)}"
            )


_SPEC_CACHE: dict = {}


@dataclass(frozen=True)
class MeasurementSpec:
    """Ordered product of basis factors over disjoint qubit subsets."""

    factors: tuple[Factor, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise QStateError("measurement spec needs at least one factor")
        seen: set[int] = set()
        for f in self.factors:
            if not isinstance(f, Factor):
                raise QStateError(f"malformed factor {f!r}")
            if seen & set(f.qubits):
                raise QStateError("measurement factors overlap")
            seen.update(f.qubits)
        # derived lookups, computed once per spec
        object.__setattr__(self, "_qubits", tuple(q for f in self.factors for q in f.qubits))
        labels = []
        for joint in range(1 << len(self._qubits)):
            out, shift = [], len(self._qubits)
            for f in self.factors:
                shift -= f.basis.width
                out.append(f.basis.labels[(joint >> shift) & ((1 << f.basis.width) - 1)])
            labels.append(tuple(out))
        object.__setattr__(self, "_labels", tuple(labels))

    @classmethod
    def of(cls, *parts: tuple[Sequence[int] | int, Basis]) -> "MeasurementSpec":
        """Shorthand: ``MeasurementSpec.of(([0, 1], Basis.BELL), (2, Basis.X))``."""
        key = tuple(((q,) if isinstance(q, int) else tuple(q), b) for q, b in parts)
        spec = _SPEC_CACHE.get(key)
        if spec is None:
            spec = cls(tuple(Factor(qs, basis) for qs, basis in key))
            if len(_SPEC_CACHE) < 4096:
                _SPEC_CACHE[key] = spec
        return spec

    @property
    def qubits(self) -> tuple[int, ...]:
        return self._qubits

    def labels_of(self, joint: int) -> tuple:
        return self._labels[joint]

    def index_of(self, labels: Sequence) -> int:
        if len(labels) != len(self.factors):
            raise QStateError("label count does not match factor count")
        joint = 0
        for f, lab in zip(self.factors, labels):
            joint = (joint << f.basis.width) | f.basis.labels.index(lab)
        return joint


@dataclass(frozen=True)
class Outcome:
    labels: tuple
    probability: float


def _check_spec(state: StateVector, spec: MeasurementSpec) -> None:
    if not isinstance(spec, MeasurementSpec):
        raise QStateError("malformed measurement spec")
    for q in spec.qubits:
        _check_qubit(state, q)


def _rotate_in(state: StateVector, spec: MeasurementSpec) -> np.ndarray:
    amps = state.amplitudes
    for f in spec.factors:
        if f.basis is not Basis.Z:
            amps = _backend.apply_matrix(amps, state.num_qubits, f.qubits, _BASIS_ADJOINT[f.basis])
    return amps


def _rotate_out(amps: np.ndarray, num_qubits: int, spec: MeasurementSpec) -> np.ndarray:
    for f in spec.factors:
        if f.basis is not Basis.Z:
            amps = _backend.apply_matrix(amps, num_qubits, f.qubits, _BASIS_VECTORS[f.basis])
    return amps


def probabilities(state: StateVector, spec: MeasurementSpec) -> np.ndarray:
    """Born probabilities indexed by joint outcome (see ``MeasurementSpec.labels_of``)."""
    _check_spec(state, spec)
    return _backend.marginal_probabilities(_rotate_in(state, spec), state.num_qubits, spec.qubits)


def outcome_distribution(state: StateVector, spec: MeasurementSpec) -> list[Outcome]:
    probs = probabilities(state, spec)
    return [Outcome(spec.labels_of(j), float(p)) for j, p in enumerate(probs)]


def _sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    values = probs.tolist()
    u = rng.random() * sum(values)
    acc = 0.0
    for j, p in enumerate(values):
        acc += p
        if u < acc:
            return j
    return int(np.flatnonzero(probs > 0)[-1])


def collapse(state: StateVector, spec: MeasurementSpec, labels: Sequence) -> StateVector:
    """Post-measurement state for a given outcome (must have nonzero probability)."""
    _check_spec(state, spec)
    joint = spec.index_of(labels)
    rotated = _rotate_in(state, spec)
    kept = _backend.project(rotated, state.num_qubits, spec.qubits, joint)
    norm = np.linalg.norm(kept)
    if norm**2 < ZERO_PROB:
        raise QStateError(f"outcome {tuple(labels)} has zero probability")
    amps = _rotate_out(kept / norm, state.num_qubits, spec)
    return StateVector._wrap(state.num_qubits, amps)


def measure(state: StateVector, spec: MeasurementSpec,
            rng: np.random.Generator) -> tuple[Outcome, StateVector]:
    """Sample an outcome by the Born rule and return it with the collapsed state."""
    _check_spec(state, spec)
    rotated = _rotate_in(state, spec)
    probs = _backend.marginal_probabilities(rotated, state.num_qubits, spec.qubits)
    joint = _sample(probs, rng)
    kept = _backend.project(rotated, state.num_qubits, spec.qubits, joint)
    amps = _rotate_out(kept / math.sqrt(probs[joint]), state.num_qubits, spec)
    return Outcome(spec.labels_of(joint), float(probs[joint])), StateVector._wrap(state.num_qubits, amps)


def gram_matrix(spec: MeasurementSpec) -> np.ndarray:
    """Gram matrix of the full product basis a spec induces on its own qubits."""
    full = np.ones((1, 1), dtype=complex)
    for f in spec.factors:
        full = np.kron(full, f.basis.vectors)
    return full.conj().T @ full
