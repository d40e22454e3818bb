"""Classical algebra of three-photon GHZ dense coding.

Photons A, B, C are qubits 0, 1, 2. The eight GHZ states ``|Psi_k>`` are indexed
1..8 and carry the 3-bit messages 000..111 in order. A two-photon Pauli pair
``U_k`` applied to photons A and B of ``|Psi_1>`` produces ``|Psi_k>`` up to a
global phase.

The index calculus here is phase-blind. Pauli frames act on GHZ indices
through a 64 x 8 table that is computed once from the statevector simulator,
never typed in by hand.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .qstate import (
    GHZ_TERMS,
    PAULIS,
    Basis,
    MeasurementSpec,
    Op,
    StateVector,
    apply_1q,
    make_state,
    probabilities,
    ZERO_PROB,
)

A, B, C = 0, 1, 2
MESSAGES = tuple(format(k, "03b") for k in range(8))

# Pauli <-> (x, z) bits; composition up to phase is XOR.
_BITS = {Op.I: (0, 0), Op.Z: (0, 1), Op.X: (1, 0), Op.IY: (1, 1)}
_FROM_BITS = {v: k for k, v in _BITS.items()}
_PRODUCT = {
    (p, q): _FROM_BITS[(_BITS[p][0] ^ _BITS[q][0], _BITS[p][1] ^ _BITS[q][1])]
    for p in _BITS for q in _BITS
}
_CONJ = {p: _FROM_BITS[(z, x)] for p, (x, z) in _BITS.items()}


class DecodeError(ValueError):
    """Published frames admit no unique message: the transcript is corrupt."""


def pauli_product(p: Op, q: Op) -> Op:
    """``p . q`` up to global phase."""
    return _PRODUCT[(p, q)]


def hadamard_conjugate(p: Op) -> Op:
    """``H p H`` up to global phase (X and Z swap, iY stays)."""
    return _CONJ[p]


@lru_cache(maxsize=None)
def ghz_state(k: int) -> StateVector:
    """``|Psi_k>`` with the exact phase convention of the GHZ table."""
    if not 1 <= k <= 8:
        raise ValueError(f"GHZ index must be in 1..8, got {k}")
    a, b, sign = GHZ_TERMS[k - 1]
    return make_state(3, [(a, 1), (b, sign)])


def message_of(k: int) -> str:
    if not 1 <= k <= 8:
        raise ValueError(f"GHZ index must be in 1..8, got {k}")
    return MESSAGES[k - 1]


def index_of(msg: str) -> int:
    try:
        return MESSAGES.index(msg) + 1
    except ValueError:
        raise ValueError(f"not a 3-bit message: {msg!r}") from None


@dataclass(frozen=True)
class TwoQubitEncoding:
    """Pauli pair applied to photons A (``first``) and B (``second``)."""

    first: Op
    second: Op

    def apply(self, state: StateVector, qubits: tuple[int, int] = (A, B)) -> StateVector:
        state = apply_1q(state, self.first, qubits[0])
        return apply_1q(state, self.second, qubits[1])

    def __str__(self) -> str:
        return f"{self.first}x{self.second}"


ENCODINGS = {
    1: TwoQubitEncoding(Op.Z, Op.Z),
    2: TwoQubitEncoding(Op.I, Op.Z),
    3: TwoQubitEncoding(Op.IY, Op.Z),
    4: TwoQubitEncoding(Op.X, Op.Z),
    5: TwoQubitEncoding(Op.I, Op.X),
    6: TwoQubitEncoding(Op.Z, Op.X),
    7: TwoQubitEncoding(Op.X, Op.X),
    8: TwoQubitEncoding(Op.IY, Op.X),
}


def encode(msg: str) -> TwoQubitEncoding:
    return ENCODINGS[index_of(msg)]


@dataclass(frozen=True)
class PauliFrame:
    """Per-photon Pauli record (A, B, C) accumulated from published operations."""

    a: Op = Op.I
    b: Op = Op.I
    c: Op = Op.I

    def __post_init__(self) -> None:
        for p in (self.a, self.b, self.c):
            if p not in _BITS:
                raise ValueError(f"PauliFrame entries must be Paulis, got {p}")

    def compose(self, other: "PauliFrame") -> "PauliFrame":
        """Frame equal to applying ``other`` first, then ``self``."""
        return PauliFrame(
            pauli_product(self.a, other.a),
            pauli_product(self.b, other.b),
            pauli_product(self.c, other.c),
        )

    @property
    def code(self) -> int:
        return 16 * PAULIS.index(self.a) + 4 * PAULIS.index(self.b) + PAULIS.index(self.c)

    @classmethod
    def from_encoding(cls, enc: TwoQubitEncoding) -> "PauliFrame":
        return cls(enc.first, enc.second, Op.I)

    def apply(self, state: StateVector) -> StateVector:
        for qubit, p in ((A, self.a), (B, self.b), (C, self.c)):
            if p is not Op.I:
                state = apply_1q(state, p, qubit)
        return state


IDENTITY_FRAME = PauliFrame()
ALL_FRAMES = tuple(PauliFrame(a, b, c) for a in PAULIS for b in PAULIS for c in PAULIS)
_GHZ_SPEC = MeasurementSpec.of(([A, B, C], Basis.GHZ))


def ghz_index_of(state: StateVector) -> int:
    """Index of the GHZ basis state equal (up to phase) to a 3-qubit state."""
    probs = probabilities(state, _GHZ_SPEC)
    k = int(np.argmax(probs))
    if probs[k] < 1 - 1e-9:
        raise ValueError("state is not a GHZ basis state")
    return k + 1


@lru_cache(maxsize=None)
def _action_table() -> np.ndarray:
    table = np.zeros((64, 9), dtype=np.int8)
    for frame in ALL_FRAMES:
        for k in range(1, 9):
            table[frame.code, k] = ghz_index_of(frame.apply(ghz_state(k)))
    table.setflags(write=False)
    return table


def action_table() -> np.ndarray:
    """64 x 9 int table; row = frame code, column = start index (column 0 unused)."""
    return _action_table()


def pauli_action(frame: PauliFrame, k: int) -> int:
    if not 1 <= k <= 8:
        raise ValueError(f"GHZ index must be in 1..8, got {k}")
    return int(_action_table()[frame.code, k])


def table1_result(first: Op, second: Op) -> int:
    """GHZ index reached from ``|Psi_1>`` by ``first (x) second (x) I``."""
    return pauli_action(PauliFrame(first, second, Op.I), 1)


# The published transformation table: both operation pairs per GHZ index.
TABLE1_LISTED = {
    1: ((Op.Z, Op.Z), (Op.I, Op.I)),
    2: ((Op.I, Op.Z), (Op.Z, Op.I)),
    3: ((Op.IY, Op.Z), (Op.X, Op.I)),
    4: ((Op.X, Op.Z), (Op.IY, Op.I)),
    5: ((Op.I, Op.X), (Op.Z, Op.IY)),
    6: ((Op.Z, Op.X), (Op.I, Op.IY)),
    7: ((Op.X, Op.X), (Op.IY, Op.IY)),
    8: ((Op.IY, Op.X), (Op.X, Op.IY)),
}


def combine(frames: Iterable[PauliFrame]) -> PauliFrame:
    total = IDENTITY_FRAME
    for f in frames:
        if not isinstance(f, PauliFrame):
            raise ValueError(f"not a Pauli frame: {f!r}")
        total = f.compose(total)
    return total


def decode(measured: int, published_frames: Sequence[PauliFrame]) -> str:
    """Recover the message from a GHZ outcome and every published Pauli frame.

    The frames are everything applied to the block besides the sender's
    encoding. The result is the unique message whose encoding, followed by the
    frames, carries ``|Psi_1>`` to ``|Psi_measured>``.
    """
    if not 1 <= measured <= 8:
        raise DecodeError(f"GHZ outcome must be in 1..8, got {measured}")
    try:
        if len(published_frames) == 1 and isinstance(published_frames[0], PauliFrame):
            frame = published_frames[0]
        else:
            frame = combine(published_frames)
    except (KeyError, ValueError) as exc:
        raise DecodeError(f"unusable frame in publication: {exc}") from None
    hits = _decode_hits(measured, frame)
    if len(hits) != 1:
        raise DecodeError(f"{len(hits)} messages match outcome {measured} under frame {frame}")
    return hits[0]


@lru_cache(maxsize=None)
def _decode_hits(measured: int, frame: PauliFrame) -> tuple[str, ...]:
    table = _action_table()
    return tuple(
        msg for msg in MESSAGES
        if table[frame.compose(PauliFrame.from_encoding(encode(msg))).code, 1] == measured
    )


# --------------------------------------------------------------------------
# correlation supports of the GHZ basis
# --------------------------------------------------------------------------

PARTITIONS = ("AB|C", "A|BC", "Z")

_PARTITION_SPECS = {
    "AB|C": MeasurementSpec.of(([A, B], Basis.BELL), (C, Basis.X)),
    "A|BC": MeasurementSpec.of((A, Basis.X), ([B, C], Basis.BELL)),
    "Z": MeasurementSpec.of((A, Basis.Z), (B, Basis.Z), (C, Basis.Z)),
}


def partition_spec(partition: str) -> MeasurementSpec:
    try:
        return _PARTITION_SPECS[partition]
    except KeyError:
        raise ValueError(f"partition must be one of {PARTITIONS}, got {partition!r}") from None


@lru_cache(maxsize=None)
def eq1_correlation_table(k: int, partition: str) -> frozenset:
    """Outcome label tuples with nonzero probability for ``|Psi_k>``.

    ``"AB|C"`` gives (Bell, X) pairs, ``"A|BC"`` gives (X, Bell) pairs and
    ``"Z"`` gives 3-bit strings.
    """
    spec = partition_spec(partition)
    probs = probabilities(ghz_state(k), spec)
    support = [spec.labels_of(j) for j, p in enumerate(probs) if p > ZERO_PROB]
    if partition == "Z":
        return frozenset("".join(str(b) for b in labels) for labels in support)
    return frozenset(support)


# --------------------------------------------------------------------------
# controller composites on photon C
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Composite:
    """A controller's operation on one C photon: optional Hadamard, then a Pauli."""

    hadamard: bool
    pauli: Op

    def __post_init__(self) -> None:
        if self.pauli not in _BITS:
            raise ValueError(f"composite Pauli must be one of {PAULIS}, got {self.pauli}")

    @property
    def ops(self) -> tuple[Op, ...]:
        return (Op.H, self.pauli) if self.hadamard else (self.pauli,)

    @cached_property
    def label(self) -> str:
        return f"H.{self.pauli}" if self.hadamard else str(self.pauli)

    def apply(self, state: StateVector, qubit: int = C) -> StateVector:
        for op in self.ops:
            state = apply_1q(state, op, qubit)
        return state

    def undo(self, state: StateVector, qubit: int = C) -> StateVector:
        """Apply the exact inverse (adjoints in reverse order)."""
        for op in reversed(self.ops):
            state = apply_1q(state, op, qubit, adjoint=True)
        return state


PAULI_COMPOSITES = tuple(Composite(False, p) for p in PAULIS)
COMPOSITES = PAULI_COMPOSITES + tuple(Composite(True, p) for p in PAULIS)


def composite_choices(hadamard_enabled: bool) -> tuple[Composite, ...]:
    return COMPOSITES if hadamard_enabled else PAULI_COMPOSITES


def hadamard_parity(chain: Iterable[Composite]) -> int:
    return sum(c.hadamard for c in chain) % 2


def residual_pauli(chain: Sequence[Composite]) -> tuple[int, Op]:
    """H-parity and the Pauli left on C once the receiver applies ``H**parity``.

    For a chain applied in order, the product ``C_n ... C_1`` equals
    ``Q H**p`` up to phase. After the receiver's ``H**p`` the photon carries
    the Pauli ``H**p Q H**p``, which is returned with ``p``.
    """
    q, p = Op.I, 0
    for comp in chain:
        if comp.hadamard:
            q, p = hadamard_conjugate(q), p ^ 1
        q = pauli_product(comp.pauli, q)
    return p, (hadamard_conjugate(q) if p else q)
