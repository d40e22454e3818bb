"""Seeded execution of the controlled (CQSDC) and multiparty-controlled
(MCQSDC) GHZ direct-communication protocols.

A run owns ``num_triples`` GHZ blocks. Photons travel as sequences A, B, C
whose holder is tracked explicitly; every operation and measurement asserts
that its actor holds the photon. Four eavesdropping checks guard the four
transmissions (A/B to the sender, the C chain to the receiver, then B and A
to the receiver). Each check consumes its own disjoint sample of triples.
The remaining triples carry 3 message bits each.

Randomness comes from four independent streams spawned from the seed: party
choices, measurement outcomes, channel noise and the adversary. Attacks and
noise therefore never shift the parties' random choices.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Sequence

import numpy as np

from . import codec
from .adversary import AttackStrategy, make_attacker
from .codec import Composite, PauliFrame, composite_choices, hadamard_parity, residual_pauli
from .qstate import (
    PAULIS,
    ZERO_PROB,
    Basis,
    MeasurementSpec,
    Op,
    StateVector,
    apply_1q,
    drop_qubits,
    measure,
    probabilities,
    tensor,
)
from .report import CheckRecord, RunReport
from .transcript import Transcript

ROLES = ("A", "B", "C")
CONTROLLER_NAMES = ("Bob", "Charlie", "Dick", "Emma", "Fred", "Gina", "Hugo", "Iris")
_NOISE_PAULIS = (Op.X, Op.IY, Op.Z)
_GHZ = MeasurementSpec.of(([0, 1, 2], Basis.GHZ))


class ProtocolError(RuntimeError):
    """Engine misuse: a party acted on a photon it does not hold, or similar."""


class AnnouncementOrderError(ProtocolError):
    """A publication happened before the announcement it must follow."""


class ConfigError(ValueError):
    """Infeasible or malformed run configuration."""


class Role(enum.Enum):
    SENDER = "sender"
    CONTROLLER = "controller"
    RECEIVER = "receiver"


@dataclass(frozen=True)
class PartyId:
    role: Role
    name: str
    index: int = 0


@dataclass(frozen=True)
class ProtocolConfig:
    num_triples: int = 256
    check_fraction: float = 0.1
    min_check_samples: int = 32
    error_threshold: float = 0.0
    noise_p: float = 0.0
    seed: int = 0
    num_controllers: int = 1
    hadamard_enabled: bool = True

    def __post_init__(self) -> None:
        if self.num_triples < 0:
            raise ConfigError("num_triples must be non-negative")
        if not 0 < self.check_fraction <= 1:
            raise ConfigError("check_fraction must be in (0, 1]")
        if self.min_check_samples < 1:
            raise ConfigError("min_check_samples must be at least 1")
        if not 0 <= self.error_threshold <= 1:
            raise ConfigError("error_threshold must be in [0, 1]")
        if not 0 <= self.noise_p <= 1:
            raise ConfigError("noise_p must be in [0, 1]")
        if not 1 <= self.num_controllers <= len(CONTROLLER_NAMES):
            raise ConfigError(f"num_controllers must be in 1..{len(CONTROLLER_NAMES)}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def samples_per_check(self) -> int:
        return max(self.min_check_samples, math.ceil(self.check_fraction * self.num_triples - 1e-9))

    @property
    def message_triples(self) -> int:
        free = self.num_triples - 4 * self.samples_per_check
        if free < 0:
            raise ConfigError(
                f"four checks of {self.samples_per_check} samples need more than "
                f"{self.num_triples} triples"
            )
        return free

    @property
    def message_bits(self) -> int:
        return 3 * self.message_triples

    def to_dict(self) -> dict[str, Any]:
        return {
            "num_triples": self.num_triples,
            "check_fraction": self.check_fraction,
            "min_check_samples": self.min_check_samples,
            "error_threshold": self.error_threshold,
            "noise_p": self.noise_p,
            "seed": self.seed,
            "num_controllers": self.num_controllers,
            "hadamard_enabled": self.hadamard_enabled,
        }


@dataclass(frozen=True)
class ControllerOpRecord:
    """A controller's secret composite on one C photon (Hadamard first, then Pauli)."""

    controller: int
    triple: int
    composite: Composite

    @property
    def hadamard(self) -> bool:
        return self.composite.hadamard

    @property
    def pauli(self) -> Op:
        return self.composite.pauli


@dataclass
class TripleBlock:
    triple_id: int
    state: StateVector
    qubits: dict[str, int] = field(default_factory=lambda: {"A": 0, "B": 1, "C": 2})
    consumed: bool = False
    eve_qubits: list[int] = field(default_factory=list)

    def qubit(self, role: str) -> int:
        return self.qubits[role]


@dataclass
class CheckPlan:
    name: str
    purpose: str
    samples: list[int]
    threshold: float
    bases: dict[int, tuple[str, ...]] = field(default_factory=dict)
    outcomes: dict[int, tuple] = field(default_factory=dict)
    errors: int = 0
    flagged: set[int] = field(default_factory=set)
    receiver_published: bool = False

    @property
    def error_rate(self) -> float:
        return self.errors / len(self.samples) if self.samples else 0.0

    @property
    def passed(self) -> bool:
        return self.error_rate <= self.threshold

    def record(self) -> CheckRecord:
        return CheckRecord(self.name, self.purpose, len(self.samples), self.errors,
                           self.threshold, self.passed)


class _Abort(Exception):
    def __init__(self, step: str) -> None:
        super().__init__(step)
        self.step = step


@dataclass
class DecodeResult:
    message: str
    outcome: int
    shortcut_agrees: bool


def _entropy(probs: Sequence[float]) -> float:
    return float(-sum(p * math.log2(p) for p in probs if p > 0))


# --------------------------------------------------------------------------
# receiver-side decoding
# --------------------------------------------------------------------------

def full_inverse_state(state: StateVector, chain: Sequence[Composite]) -> StateVector:
    """Undo every controller composite on C, outermost first."""
    for comp in reversed(chain):
        state = comp.undo(state, 2)
    return state


def message_distribution_full(state: StateVector, bob_b: Op,
                              chain: Sequence[Composite]) -> dict[str, float]:
    probs = probabilities(full_inverse_state(state, chain), _GHZ)
    frame = [PauliFrame(Op.I, bob_b, Op.I)]
    out: dict[str, float] = {}
    for k, p in enumerate(probs, 1):
        if p > ZERO_PROB:
            msg = codec.decode(k, frame)
            out[msg] = out.get(msg, 0.0) + float(p)
    return out


def message_distribution_shortcut(state: StateVector, bob_b: Op,
                                  chain: Sequence[Composite]) -> dict[str, float]:
    """Odd H count: Hadamard on C, GHZ-measure, then correct with the residual Pauli."""
    parity, residual = residual_pauli(chain)
    if parity:
        state = apply_1q(state, Op.H, 2)
    probs = probabilities(state, _GHZ)
    frame = [PauliFrame(Op.I, bob_b, residual)]
    out: dict[str, float] = {}
    for k, p in enumerate(probs, 1):
        if p > ZERO_PROB:
            msg = codec.decode(k, frame)
            out[msg] = out.get(msg, 0.0) + float(p)
    return out


def _same_distribution(a: dict[str, float], b: dict[str, float]) -> bool:
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= 1e-9 for k in keys)


def receiver_decode(block: TripleBlock, bob_b: Op, chain: Sequence[Composite],
                    rng: np.random.Generator) -> DecodeResult:
    """Decode one block once every controller has published.

    The receiver undoes the full published composite on C, GHZ-measures and
    corrects for Bob's B Pauli. The H-parity shortcut is evaluated on the same
    pre-measurement state and must induce the same message distribution.
    """
    if any(c is None for c in chain) or bob_b is None:
        raise ProtocolError("decode needs every controller's publication")
    state = block.state
    agrees = _same_distribution(message_distribution_full(state, bob_b, chain),
                                message_distribution_shortcut(state, bob_b, chain))
    outcome, post = measure(full_inverse_state(state, chain), _GHZ, rng)
    block.state = post
    (k,) = outcome.labels
    return DecodeResult(codec.decode(k, [PauliFrame(Op.I, bob_b, Op.I)]), k, agrees)


def known_suffix(chain: Sequence[Composite | None]) -> list[Composite]:
    """Outermost run of published composites, in chain order."""
    suffix: list[Composite] = []
    for comp in reversed(chain):
        if comp is None:
            break
        suffix.append(comp)
    return suffix[::-1]


@lru_cache(maxsize=65536)
def message_posterior(outcome: int, bob_b: Op | None, chain: tuple[Composite | None, ...],
                      hadamard_enabled: bool) -> tuple[float, ...]:
    """Exact posterior over the 8 messages given the receiver's GHZ outcome.

    ``None`` entries (Bob's B Pauli or a controller composite) are unknown and
    enumerated uniformly over what the protocol allows; the receiver is assumed
    to have undone the known outermost composites before measuring.
    """
    suffix = known_suffix(chain)
    b_choices = PAULIS if bob_b is None else (bob_b,)
    slots = [composite_choices(hadamard_enabled) if c is None else (c,) for c in chain]
    weights = np.zeros(8)
    for m, msg in enumerate(codec.MESSAGES):
        enc = codec.encode(msg)
        for b in b_choices:
            base = apply_1q(codec.ghz_state(1), b, 1)
            base = enc.apply(base)
            for combo in _product(slots):
                state = base
                for comp in combo:
                    state = comp.apply(state, 2)
                state = full_inverse_state(state, suffix)
                weights[m] += probabilities(state, _GHZ)[outcome - 1]
    total = weights.sum()
    return tuple(float(w / total) for w in weights)


def _product(slots):
    if not slots:
        yield ()
        return
    for head in slots[0]:
        for tail in _product(slots[1:]):
            yield (head,) + tail


def unauthorized_decode_posterior(block: TripleBlock, bob_b: Op | None,
                                  chain: Sequence[Composite | None], hadamard_enabled: bool,
                                  rng: np.random.Generator) -> tuple[int, tuple[float, ...]]:
    """Receiver measures without full permission; returns (GHZ outcome, posterior)."""
    state = full_inverse_state(block.state, known_suffix(chain))
    outcome, post = measure(state, _GHZ, rng)
    block.state = post
    (k,) = outcome.labels
    return k, message_posterior(k, bob_b, tuple(chain), hadamard_enabled)


# --------------------------------------------------------------------------
# the run
# --------------------------------------------------------------------------

class _View:
    """Adversary's handle on one transmission."""

    def __init__(self, run: "ProtocolRun", hop: str, roles: tuple[str, ...], triples: list[int]):
        self._run = run
        self.hop = hop
        self.roles = roles
        self.triples = triples
        self._in_flight = set(triples)
        self.hadamard_enabled = run.hadamard_enabled

    def public_events(self):
        return self._run.transcript.public_events()

    def _block(self, tid: int) -> TripleBlock:
        if tid not in self._in_flight:
            raise ProtocolError(f"triple {tid} is not in transit on {self.hop}")
        return self._run.blocks[tid]

    def _own(self, block: TripleBlock, qubit: int) -> None:
        in_transit = {block.qubits[r] for r in self.roles}
        if qubit not in in_transit and qubit not in block.eve_qubits:
            raise ProtocolError(f"qubit {qubit} of triple {block.triple_id} is not reachable")

    def qubit_of(self, tid: int, role: str) -> int:
        if role not in self.roles:
            raise ProtocolError(f"photon {role} is not in transit on {self.hop}")
        return self._block(tid).qubits[role]

    def measure(self, tid: int, role: str, basis: Basis, rng: np.random.Generator):
        q = self.qubit_of(tid, role)
        (label,) = self.measure_qubits(tid, (q,), basis, rng)
        return label

    def measure_qubits(self, tid: int, qubits, basis: Basis, rng: np.random.Generator):
        block = self._block(tid)
        for q in qubits:
            self._own(block, q)
        outcome, block.state = measure(block.state, MeasurementSpec.of((tuple(qubits), basis)), rng)
        return outcome.labels

    def attach(self, tid: int, ancilla: StateVector) -> list[int]:
        block = self._block(tid)
        start = block.state.num_qubits
        block.state = tensor(block.state, ancilla)
        new = list(range(start, start + ancilla.num_qubits))
        block.eve_qubits.extend(new)
        return new

    def reroute(self, tid: int, role: str, qubit: int) -> None:
        block = self._block(tid)
        self._own(block, qubit)
        old = self.qubit_of(tid, role)
        if old != qubit:
            # Eve keeps the photon she swapped out and gives up the one she sends on
            if qubit in block.eve_qubits:
                block.eve_qubits.remove(qubit)
            block.eve_qubits.append(old)
        block.qubits[role] = qubit

    def apply_composite(self, tid: int, qubit: int, comp: Composite) -> None:
        block = self._block(tid)
        self._own(block, qubit)
        block.state = comp.apply(block.state, qubit)

    def detach(self, tid: int, qubits) -> None:
        block = self._block(tid)
        if any(q not in block.eve_qubits for q in qubits):
            raise ProtocolError("only Eve's ancillas can be detached")
        if any(q in block.qubits.values() for q in qubits):
            raise ProtocolError("cannot detach a protocol photon")
        if sorted(qubits) != list(range(block.state.num_qubits - len(qubits), block.state.num_qubits)):
            raise ProtocolError("ancillas must be detached from the end of the register")
        block.state = drop_qubits(block.state, qubits)
        block.eve_qubits = [q for q in block.eve_qubits if q not in qubits]


class ProtocolRun:
    """One seeded execution. Use :func:`run_cqsdc` / :func:`run_mcqsdc`."""

    def __init__(self, config: ProtocolConfig, variant: str, message: str,
                 attack: AttackStrategy | None = None,
                 permissions: Sequence[bool] | None = None) -> None:
        if variant not in ("cqsdc", "mcqsdc"):
            raise ConfigError(f"unknown protocol {variant!r}")
        if variant == "cqsdc":
            config = replace(config, num_controllers=1, hadamard_enabled=False)
        self.config = config
        self.variant = variant
        n = config.num_controllers
        if set(message) - {"0", "1"}:
            raise ConfigError("message must be a bit string")
        if len(message) != config.message_bits:
            raise ConfigError(
                f"message has {len(message)} bits but the run carries {config.message_bits} "
                f"({config.message_triples} message triples)"
            )
        if permissions is None:
            permissions = (True,) * n
        permissions = tuple(bool(p) for p in permissions)
        if len(permissions) != n:
            raise ConfigError(f"need {n} permission flags, got {len(permissions)}")
        self.permissions = permissions
        self.message = message
        self.attack = attack or AttackStrategy()
        self.hadamard_enabled = config.hadamard_enabled

        streams = np.random.SeedSequence(config.seed).spawn(4)
        self.party_rng, self.nature_rng, self.channel_rng, adversary_rng = (
            np.random.default_rng(s) for s in streams
        )
        self.attacker = make_attacker(self.attack, adversary_rng, n)

        self.sender = PartyId(Role.SENDER, "Alice")
        self.controllers = [PartyId(Role.CONTROLLER, CONTROLLER_NAMES[j], j + 1) for j in range(n)]
        self.receiver = PartyId(Role.RECEIVER, "Charlie" if variant == "cqsdc" else "Zach")
        self.bob = self.controllers[0]

        self.transcript = Transcript()
        self.blocks: list[TripleBlock] = []
        self.available: list[int] = []
        self.holder: dict[str, PartyId | None] = {}
        self.bob_b: dict[int, Op] = {}
        self.chain: dict[int, list[Composite]] = {}
        self.alice_u: dict[int, int] = {}
        self.published: dict[tuple[str, int], Any] = {}
        self.plans: list[CheckPlan] = []
        self.delivered: str | None = None
        self.posteriors: list[tuple[float, ...]] | None = None
        self.decode_disagreements = 0
        self.aborted_at: str | None = None

    # ---------------------------------------------------------------- steps
    @property
    def _steps(self) -> dict[str, str]:
        if self.variant == "cqsdc":
            return {"prep": "S1", "ab": "S2", "chain": "S3", "c": "S4",
                    "encode": "S5", "b": "S5-B", "a": "S5-A", "release": "S6"}
        return {"prep": "S1", "ab": "S2", "chain": "S3'", "c": "S5'",
                "encode": "S6'", "b": "S6'-B", "a": "S6'-A", "release": "S7'"}

    def run(self) -> RunReport:
        start = time.perf_counter()
        try:
            self.prepare()
            self.check_ab()
            self.distribute_c()
            self.check_c()
            b_samples, a_samples = self.encode()
            self.send_b()
            self.check_b(b_samples)
            self.send_a()
            self.check_a(a_samples)
            self.release()
        except _Abort as abort:
            self.aborted_at = abort.step
            self.transcript.log("abort", self.sender.name, abort.step, {"reason": "error rate above threshold"})
        return self._report(time.perf_counter() - start)

    # -- bookkeeping ---------------------------------------------------------
    def _log(self, kind: str, actor: PartyId, step: str, payload: dict | None = None,
             public: bool = True) -> None:
        self.transcript.log(kind, actor.name, step, payload, public=public)

    def _require_holder(self, party: PartyId, role: str) -> None:
        if self.holder.get(role) != party:
            held = self.holder.get(role)
            raise ProtocolError(
                f"{party.name} cannot act on photon {role}: held by {held.name if held else 'the channel'}"
            )

    def _sample(self, size: int) -> list[int]:
        picks = self.party_rng.choice(len(self.available), size=size, replace=False)
        chosen = sorted(self.available[i] for i in picks)
        taken = set(chosen)
        self.available = [t for t in self.available if t not in taken]
        return chosen

    def _apply(self, party: PartyId, role: str, tid: int, comp_or_op) -> None:
        self._require_holder(party, role)
        block = self.blocks[tid]
        q = block.qubit(role)
        if isinstance(comp_or_op, Composite):
            block.state = comp_or_op.apply(block.state, q)
        else:
            block.state = apply_1q(block.state, comp_or_op, q)

    def _measure(self, party: PartyId, tid: int, factors: Sequence[tuple[str, Basis]]) -> tuple:
        block = self.blocks[tid]
        parts = []
        for roles, basis in factors:
            for r in roles:
                self._require_holder(party, r)
            parts.append(([block.qubit(r) for r in roles], basis))
        outcome, block.state = measure(block.state, MeasurementSpec.of(*parts), self.nature_rng)
        return outcome.labels

    def _active(self) -> list[int]:
        return [b.triple_id for b in self.blocks if not b.consumed]

    def _transmit(self, roles: tuple[str, ...], src: PartyId, dst: PartyId, hop: str, step: str) -> None:
        for r in roles:
            self._require_holder(src, r)
            self.holder[r] = None
        tids = self._active()
        p = self.config.noise_p
        if p > 0:
            for tid in tids:
                block = self.blocks[tid]
                for r in roles:
                    if self.channel_rng.random() < p:
                        flip = _NOISE_PAULIS[self.channel_rng.integers(3)]
                        block.state = apply_1q(block.state, flip, block.qubit(r))
        self.attacker.on_transit(_View(self, hop, roles, tids))
        for r in roles:
            self.holder[r] = dst
        self._log("transmit", src, step, {"sequences": list(roles), "to": dst.name, "hop": hop,
                                          "photons": len(tids)})

    def _publish(self, key: str, party: PartyId, step: str, tids: Sequence[int], values: list) -> None:
        for tid, v in zip(tids, values):
            self.published[(key, tid)] = v
        self._log("announce", party, step, {"what": key, "triples": list(tids),
                                            "values": [_wire(v) for v in values]})

    def _published(self, key: str, tid: int):
        try:
            return self.published[(key, tid)]
        except KeyError:
            raise ProtocolError(f"{key} for triple {tid} used before publication") from None

    def _publish_controller_ops(self, plan: CheckPlan | None, step: str, tids: Sequence[int],
                                parties: Sequence[PartyId] | None = None) -> None:
        if plan is not None and plan.purpose == "c-hop" and not plan.receiver_published:
            raise AnnouncementOrderError(
                "controllers may publish C-check operations only after the receiver's outcomes"
            )
        for party in parties or self.controllers:
            j = party.index - 1
            if party == self.bob:
                self._publish("bob_b", party, step, tids, [self.bob_b[t] for t in tids])
            self._publish(f"c{party.index}", party, step, tids, [self.chain[t][j] for t in tids])

    def _published_chain(self, tid: int) -> list[Composite]:
        return [self._published(f"c{c.index}", tid) for c in self.controllers]

    def _expected(self, tid: int, with_encoding: bool, compensate: bool) -> StateVector:
        """Sender's reconstruction of a sample from published operations."""
        state = apply_1q(codec.ghz_state(1), self._published("bob_b", tid), 1)
        chain = self._published_chain(tid)
        for comp in chain:
            state = comp.apply(state, 2)
        if with_encoding:
            state = codec.ENCODINGS[self.alice_u[tid]].apply(state)
        if compensate and hadamard_parity(chain):
            state = apply_1q(state, Op.H, 2)
        return state

    def _judge(self, plan: CheckPlan, tid: int, factors, labels: tuple, expected: StateVector) -> None:
        spec = MeasurementSpec.of(*[([ROLES.index(r) for r in roles], basis) for roles, basis in factors])
        p = probabilities(expected, spec)[spec.index_of(labels)]
        if p <= ZERO_PROB:
            plan.errors += 1
            plan.flagged.add(tid)

    def _close(self, plan: CheckPlan, step: str) -> None:
        for tid in plan.samples:
            self.blocks[tid].consumed = True
        self.plans.append(plan)
        self._log("verdict", self.sender, step, {
            "check": plan.name, "samples": len(plan.samples), "errors": plan.errors,
            "threshold": plan.threshold, "passed": plan.passed,
        })
        if not plan.passed:
            raise _Abort(plan.name)

    def _new_plan(self, key: str, purpose: str) -> CheckPlan:
        plan = CheckPlan(self._steps[key], purpose, self._sample(self.config.samples_per_check),
                         self.config.error_threshold)
        self._log("announce", self.sender, plan.name, {"what": "positions", "triples": plan.samples})
        return plan

    # -- S1 ------------------------------------------------------------------
    def prepare(self) -> None:
        step = self._steps["prep"]
        n = self.config.num_triples
        psi1 = codec.ghz_state(1)
        self.blocks = [TripleBlock(t, psi1) for t in range(n)]
        self.available = list(range(n))
        self.holder = {r: self.bob for r in ROLES}
        self._log("prepare", self.bob, step, {"triples": n, "state": "Psi1"}, public=False)
        draws = self.party_rng.integers(4, size=n)
        for tid in range(n):
            self.bob_b[tid] = PAULIS[draws[tid]]
            self._apply(self.bob, "B", tid, self.bob_b[tid])
        self._log("operate", self.bob, step, {"sequence": "B", "ops": [str(PAULIS[d]) for d in draws]},
                  public=False)
        self._transmit(("A", "B"), self.bob, self.sender, "ab-hop", step)

    # -- S2 ------------------------------------------------------------------
    def check_ab(self) -> None:
        plan = self._new_plan("ab", "ab-hop")
        step = plan.name
        self._publish("bob_b", self.bob, step, plan.samples, [self.bob_b[t] for t in plan.samples])
        coins = self.party_rng.integers(2, size=len(plan.samples))
        bases = ["Z" if c == 0 else "Bell" for c in coins]
        self._log("announce", self.sender, step, {"what": "bases", "triples": plan.samples, "values": bases})
        bob_out = []
        for tid, coin in zip(plan.samples, coins):
            ab = [("A", Basis.Z), ("B", Basis.Z)] if coin == 0 else [(("A", "B"), Basis.BELL)]
            c = [("C", Basis.Z if coin == 0 else Basis.X)]
            ab = [((r,), b) if isinstance(r, str) else (r, b) for r, b in ab]
            c = [(("C",), b) for _, b in c]
            alice_labels = self._measure(self.sender, tid, ab)
            bob_labels = self._measure(self.bob, tid, c)
            plan.bases[tid] = tuple(b.value for _, b in ab + c)
            plan.outcomes[tid] = alice_labels + bob_labels
            bob_out.append(bob_labels[0])
        self._log("announce", self.bob, step, {"what": "outcomes", "triples": plan.samples,
                                              "values": [_wire(v) for v in bob_out]})
        for tid, coin in zip(plan.samples, coins):
            factors = ([(("A",), Basis.Z), (("B",), Basis.Z), (("C",), Basis.Z)] if coin == 0
                       else [(("A", "B"), Basis.BELL), (("C",), Basis.X)])
            expected = apply_1q(codec.ghz_state(1), self._published("bob_b", tid), 1)
            self._judge(plan, tid, factors, plan.outcomes[tid], expected)
        self._close(plan, step)

    # -- S3 / S3'-S4' --------------------------------------------------------
    def distribute_c(self) -> None:
        step = self._steps["chain"]
        tids = self._active()
        for t in tids:
            self.chain[t] = []
        for j, party in enumerate(self.controllers):
            if self.hadamard_enabled:
                hs = self.party_rng.integers(2, size=len(tids))
            else:
                hs = np.zeros(len(tids), dtype=int)
            ps = self.party_rng.integers(4, size=len(tids))
            for tid, h, p in zip(tids, hs, ps):
                comp = Composite(bool(h), PAULIS[p])
                self.chain[tid].append(comp)
                self._apply(party, "C", tid, comp)
            self._log("operate", party, step, {"sequence": "C", "ops": [
                Composite(bool(h), PAULIS[p]).label for h, p in zip(hs, ps)]}, public=False)
            nxt = self.controllers[j + 1] if j + 1 < len(self.controllers) else self.receiver
            self._transmit(("C",), party, nxt, f"c-hop:{j + 1}", step)

    # -- S4 / S5' ------------------------------------------------------------
    def check_c(self) -> None:
        plan = self._new_plan("c", "c-hop")
        step = plan.name
        n = len(plan.samples)
        coins = self.party_rng.integers(2, size=n)
        c_bases = [Basis.Z if c == 0 else Basis.X for c in coins]
        chooser = self.sender if self.variant == "cqsdc" else self.receiver
        announced = (["Z" if c == 0 else "Bell" for c in coins] if self.variant == "cqsdc"
                     else [b.value for b in c_bases])
        self._log("announce", chooser, step, {"what": "bases", "triples": plan.samples, "values": announced})
        recv_out = []
        for tid, b in zip(plan.samples, c_bases):
            (label,) = self._measure(self.receiver, tid, [(("C",), b)])
            plan.outcomes[tid] = (label,)
            recv_out.append(label)
        self._log("announce", self.receiver, step, {"what": "outcomes", "triples": plan.samples,
                                                    "values": [_wire(v) for v in recv_out]})
        plan.receiver_published = True
        if len(self.controllers) > 1:
            first = self.party_rng.integers(len(self.controllers), size=n)
            self._log("announce", self.sender, step, {"what": "first-controller", "triples": plan.samples,
                                                      "values": [self.controllers[f].name for f in first]})
        self._publish_controller_ops(plan, step, plan.samples)
        for tid, b in zip(plan.samples, c_bases):
            odd = hadamard_parity(self._published_chain(tid))
            alice_z = (b is Basis.Z) != bool(odd)
            ab = [(("A",), Basis.Z), (("B",), Basis.Z)] if alice_z else [(("A", "B"), Basis.BELL)]
            labels = self._measure(self.sender, tid, ab)
            plan.outcomes[tid] = labels + plan.outcomes[tid]
            plan.bases[tid] = tuple(bb.value for _, bb in ab) + (b.value,)
            self._judge(plan, tid, ab + [(("C",), b)], plan.outcomes[tid],
                        self._expected(tid, with_encoding=False, compensate=False))
        self._close(plan, step)

    # -- S5 / S6' ------------------------------------------------------------
    def encode(self) -> tuple[list[int], list[int]]:
        step = self._steps["encode"]
        n = self.config.samples_per_check
        b_samples = self._sample(n)
        a_samples = self._sample(n)
        decoys = self.party_rng.integers(1, 9, size=2 * n)
        for tid, k in zip(b_samples + a_samples, decoys):
            self.alice_u[tid] = int(k)
        message_tids = list(self.available)
        bits = self.message
        for i, tid in enumerate(message_tids):
            self.alice_u[tid] = codec.index_of(bits[3 * i:3 * i + 3])
        for tid in b_samples + a_samples + message_tids:
            enc = codec.ENCODINGS[self.alice_u[tid]]
            self._apply(self.sender, "A", tid, enc.first)
            self._apply(self.sender, "B", tid, enc.second)
        self._log("operate", self.sender, step, {"sequence": "AB", "encoded": len(message_tids),
                                                 "decoys": 2 * n}, public=False)
        return b_samples, a_samples

    def send_b(self) -> None:
        self._transmit(("B",), self.sender, self.receiver, "b-hop", self._steps["encode"])

    def send_a(self) -> None:
        self._transmit(("A",), self.sender, self.receiver, "a-hop", self._steps["encode"])

    def _compensate(self, tid: int) -> bool:
        """Receiver undoes an odd Hadamard count on C before a check measurement."""
        if self.variant == "mcqsdc" and hadamard_parity(self._published_chain(tid)):
            self._apply(self.receiver, "C", tid, Op.H)
            return True
        return False

    def check_b(self, samples: list[int]) -> None:
        step = self._steps["b"]
        plan = CheckPlan(step, "b-hop", samples, self.config.error_threshold)
        coins = self.party_rng.integers(2, size=len(samples))
        alice_out = []
        for tid, coin in zip(samples, coins):
            (label,) = self._measure(self.sender, tid, [(("A",), Basis.Z if coin == 0 else Basis.X)])
            alice_out.append(label)
        self._log("announce", self.sender, step, {"what": "positions+bases", "triples": samples,
                                                  "values": ["Z" if c == 0 else "X" for c in coins]})
        if self.variant == "mcqsdc":
            self._publish_controller_ops(plan, step, samples)
        recv_out = []
        for tid, coin, a_label in zip(samples, coins, alice_out):
            if self.variant == "mcqsdc":
                self._compensate(tid)
            bc = ([(("B",), Basis.Z), (("C",), Basis.Z)] if coin == 0 else [(("B", "C"), Basis.BELL)])
            labels = self._measure(self.receiver, tid, bc)
            recv_out.append(labels)
            a_factor = [(("A",), Basis.Z if coin == 0 else Basis.X)]
            plan.bases[tid] = tuple(b.value for _, b in a_factor + bc)
            plan.outcomes[tid] = (a_label,) + labels
        self._log("announce", self.receiver, step, {"what": "outcomes", "triples": samples,
                                                    "values": [[_wire(x) for x in v] for v in recv_out]})
        plan.receiver_published = True
        if self.variant == "cqsdc":
            self._publish_controller_ops(plan, step, samples)
        for tid, coin in zip(samples, coins):
            factors = ([(("A",), Basis.Z), (("B",), Basis.Z), (("C",), Basis.Z)] if coin == 0
                       else [(("A",), Basis.X), (("B", "C"), Basis.BELL)])
            self._judge(plan, tid, factors, plan.outcomes[tid],
                        self._expected(tid, with_encoding=True, compensate=True))
        self._close(plan, step)

    def check_a(self, samples: list[int]) -> None:
        step = self._steps["a"]
        plan = CheckPlan(step, "a-hop", samples, self.config.error_threshold)
        self._log("announce", self.sender, step, {"what": "positions", "triples": samples})
        if self.variant == "mcqsdc":
            self._publish_controller_ops(plan, step, samples)
        recv_out = []
        for tid in samples:
            if self.variant == "mcqsdc":
                self._compensate(tid)
            labels = self._measure(self.receiver, tid, [(("A", "B", "C"), Basis.GHZ)])
            plan.bases[tid] = ("GHZ",)
            plan.outcomes[tid] = labels
            recv_out.append(labels[0])
        self._log("announce", self.receiver, step, {"what": "outcomes", "triples": samples,
                                                    "values": recv_out})
        plan.receiver_published = True
        if self.variant == "cqsdc":
            self._publish_controller_ops(plan, step, samples)
        for tid in samples:
            self._judge(plan, tid, [(("A", "B", "C"), Basis.GHZ)], plan.outcomes[tid],
                        self._expected(tid, with_encoding=True, compensate=True))
        self._close(plan, step)

    # -- S6 / S7' ------------------------------------------------------------
    def release(self) -> None:
        step = self._steps["release"]
        tids = list(self.available)
        self._require_holder(self.receiver, "C")
        granted = [c for c, ok in zip(self.controllers, self.permissions) if ok]
        self._log("permission", self.sender, step, {
            "granted": [c.name for c in granted],
            "withheld": [c.name for c, ok in zip(self.controllers, self.permissions) if not ok],
        })
        self._publish_controller_ops(None, step, tids, granted)
        for r in ROLES:
            self._require_holder(self.receiver, r)
        if all(self.permissions):
            bits = []
            for tid in tids:
                result = receiver_decode(self.blocks[tid], self._published("bob_b", tid),
                                         self._published_chain(tid), self.nature_rng)
                self.decode_disagreements += not result.shortcut_agrees
                bits.append(result.message)
                self.blocks[tid].consumed = True
            self.delivered = "".join(bits)
            self._log("decode", self.receiver, step, {"bits": len(self.delivered),
                                                      "path_disagreements": self.decode_disagreements},
                      public=False)
        else:
            self.posteriors = []
            for tid in tids:
                bob_b = self.published.get(("bob_b", tid))
                chain = [self.published.get((f"c{c.index}", tid)) for c in self.controllers]
                _, post = unauthorized_decode_posterior(self.blocks[tid], bob_b, chain,
                                                        self.hadamard_enabled, self.nature_rng)
                self.posteriors.append(post)
                self.blocks[tid].consumed = True
            self._log("decode", self.receiver, step, {"posteriors": len(self.posteriors)}, public=False)

    # -- report --------------------------------------------------------------
    def _eve_summary(self) -> dict[str, Any] | None:
        summary = self.attacker.summary()
        if summary is None:
            return None
        entries = self.attacker.record.entries
        if "controller" in summary:
            j = summary["controller"] - 1
            hits = sum(e["guess"] == self.chain[e["triple"]][j].label for e in entries)
            summary["identifications"] = hits
            summary["identification_rate"] = hits / len(entries) if entries else 0.0
            summary["bell_outcomes"] = _count([e["bell"] for e in entries])
            summary["joint"] = _count([f'{self.chain[e["triple"]][j].label}|{e["bell"]}' for e in entries])
        return summary

    def _posterior_summary(self) -> dict[str, Any] | None:
        if self.posteriors is None:
            return None
        true_msgs = [codec.message_of(self.alice_u[t]) for t in self._message_tids()]
        entropies = [_entropy(p) for p in self.posteriors]
        maxima = [max(p) for p in self.posteriors]
        guesses = [codec.MESSAGES[int(np.argmax(p))] for p in self.posteriors]
        return {
            "triples": len(self.posteriors),
            "mean_entropy_bits": float(np.mean(entropies)) if entropies else 0.0,
            "min_entropy_bits": min(entropies) if entropies else 0.0,
            "max_probability": max(maxima) if maxima else 0.0,
            "map_correct": sum(g == t for g, t in zip(guesses, true_msgs)),
            "posteriors": [[round(x, 12) for x in p] for p in self.posteriors],
        }

    def _message_tids(self) -> list[int]:
        used = {t for plan in self.plans for t in plan.samples}
        return sorted(t for t in self.alice_u if t not in used)

    def _report(self, wall: float) -> RunReport:
        config = self.config.to_dict()
        config["protocol"] = self.variant
        config["permissions"] = list(self.permissions)
        return RunReport(
            protocol=self.variant,
            config=config,
            seed=self.config.seed,
            attack=self.attack.to_dict(),
            sent=self.message,
            delivered=self.delivered,
            aborted_at=self.aborted_at,
            checks=[p.record() for p in self.plans],
            eve=self._eve_summary(),
            receiver_posterior=self._posterior_summary(),
            decode_disagreements=self.decode_disagreements,
            transcript_digest=self.transcript.digest(),
            wall_time=wall,
            transcript=self.transcript,
        )


def _count(items) -> dict[str, int]:
    out: dict[str, int] = {}
    for x in items:
        out[x] = out.get(x, 0) + 1
    return dict(sorted(out.items()))


def _wire(v):
    if isinstance(v, Op):
        return str(v)
    if isinstance(v, Composite):
        return v.label
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def random_message(config: ProtocolConfig, protocol: str = "cqsdc") -> str:
    """Message of the right length for ``config``, drawn from a stream of its own."""
    if protocol == "cqsdc":
        config = replace(config, num_controllers=1, hadamard_enabled=False)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x6D7367]))
    return "".join(str(b) for b in rng.integers(2, size=config.message_bits))


def run_cqsdc(config: ProtocolConfig, message: str, attack: AttackStrategy | None = None) -> RunReport:
    """Single-controller run: Alice sends, Bob controls, Charlie receives."""
    return ProtocolRun(config, "cqsdc", message, attack).run()


def run_mcqsdc(config: ProtocolConfig, permissions: Sequence[bool] | None, message: str,
               attack: AttackStrategy | None = None) -> RunReport:
    """Multi-controller run; ``permissions[j]`` says whether controller j publishes at release."""
    return ProtocolRun(config, "mcqsdc", message, attack, permissions).run()
