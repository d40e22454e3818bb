"""Eavesdropping strategies that interpose on photon transmissions.

An attacker sees a transmission through a ``TransitView`` (built by the
protocol engine). The view only exposes the photons currently in flight and
the public part of the transcript. Eve's own measurement randomness comes from
her private generator, so a run with the null strategy consumes exactly the
same protocol randomness as a run with no adversary at all.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Protocol

import numpy as np

from .codec import Composite, composite_choices
from .qstate import BELL_LABELS, Basis, MeasurementSpec, make_state, probabilities

PHI_PLUS = make_state(2, [("00", 1), ("11", 1)])


class AttackError(ValueError):
    """Attack configuration incompatible with the protocol run."""


class AttackKind(str, enum.Enum):
    NONE = "none"
    INTERCEPT_Z = "intercept-z"
    INTERCEPT_RANDOM = "intercept-random"
    EPR_PROBE = "epr-probe"


_HOP_RE = re.compile(r"^(ab-hop|b-hop|a-hop|c-hop(?::(\d+))?)$")
_CONTROLLER_RE = re.compile(r"^controller:(\d+)$")

DEFAULT_TARGET = {
    AttackKind.NONE: None,
    AttackKind.INTERCEPT_Z: "c-hop",
    AttackKind.INTERCEPT_RANDOM: "c-hop",
    AttackKind.EPR_PROBE: "controller:2",
}


def normalize_hop(target: str) -> str:
    """Canonical hop name; bare ``c-hop`` means the hop leaving controller 1."""
    m = _HOP_RE.match(target)
    if not m:
        raise AttackError(f"unknown transmission {target!r}")
    if target == "c-hop":
        return "c-hop:1"
    return target


@dataclass(frozen=True)
class AttackStrategy:
    kind: AttackKind = AttackKind.NONE
    target: str | None = None

    def __post_init__(self) -> None:
        kind = AttackKind(self.kind)
        object.__setattr__(self, "kind", kind)
        target = self.target if self.target is not None else DEFAULT_TARGET[kind]
        if kind is AttackKind.NONE:
            target = None
        elif kind is AttackKind.EPR_PROBE:
            if not _CONTROLLER_RE.match(target or ""):
                raise AttackError(f"epr-probe targets a controller edge 'controller:<j>', got {target!r}")
        else:
            target = normalize_hop(target)
        object.__setattr__(self, "target", target)

    @property
    def probe_controller(self) -> int:
        return int(_CONTROLLER_RE.match(self.target).group(1))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "target": self.target}


NO_ATTACK = AttackStrategy()


class TransitView(Protocol):
    hop: str
    roles: tuple[str, ...]
    triples: list[int]
    hadamard_enabled: bool

    def public_events(self) -> list: ...
    def measure(self, tid: int, role: str, basis: Basis, rng: np.random.Generator) -> Any: ...
    def attach(self, tid: int, ancilla) -> list[int]: ...
    def reroute(self, tid: int, role: str, qubit: int) -> None: ...
    def qubit_of(self, tid: int, role: str) -> int: ...
    def measure_qubits(self, tid: int, qubits, basis: Basis, rng: np.random.Generator) -> Any: ...
    def apply_composite(self, tid: int, qubit: int, comp: Composite) -> None: ...
    def detach(self, tid: int, qubits) -> None: ...


@dataclass
class EveRecord:
    """Everything Eve measured or inferred during one run."""

    entries: list[dict[str, Any]] = field(default_factory=list)

    def add(self, **entry: Any) -> None:
        self.entries.append(entry)


class Attacker:
    """Null strategy; subclasses override :meth:`on_transit`."""

    strategy = NO_ATTACK

    def __init__(self) -> None:
        self.record = EveRecord()

    def on_transit(self, view: TransitView) -> None:
        return None

    def summary(self) -> dict[str, Any] | None:
        return None


def intercept_resend(view: TransitView, tid: int, role: str, basis: Basis,
                     rng: np.random.Generator):
    """Measure one photon in flight and forward the eigenstate it collapsed to."""
    return view.measure(tid, role, basis, rng)


class InterceptResend(Attacker):
    def __init__(self, strategy: AttackStrategy, rng: np.random.Generator) -> None:
        super().__init__()
        self.strategy = strategy
        self.rng = rng
        self.random_basis = strategy.kind is AttackKind.INTERCEPT_RANDOM

    def on_transit(self, view: TransitView) -> None:
        if view.hop != self.strategy.target:
            return
        for tid in view.triples:
            for role in view.roles:
                if self.random_basis:
                    basis = Basis.X if self.rng.integers(2) else Basis.Z
                else:
                    basis = Basis.Z
                label = intercept_resend(view, tid, role, basis, self.rng)
                self.record.add(triple=tid, photon=role, basis=basis.value, outcome=label)

    def summary(self) -> dict[str, Any]:
        return {"intercepted": len(self.record.entries)}


@lru_cache(maxsize=None)
def bell_likelihoods(comp: Composite) -> tuple[float, ...]:
    """Bell-outcome probabilities after ``comp`` acts on the first half of |phi+>."""
    spec = MeasurementSpec.of(([0, 1], Basis.BELL))
    return tuple(float(p) for p in probabilities(comp.apply(PHI_PLUS, 0), spec))


@lru_cache(maxsize=None)
def eve_posterior(bell: str, hadamard_enabled: bool) -> tuple[tuple[Composite, float], ...]:
    """Posterior over the probed controller's composite given Eve's Bell outcome.

    Uniform prior over the composites the protocol allows.
    """
    j = BELL_LABELS.index(bell)
    choices = composite_choices(hadamard_enabled)
    weights = np.array([bell_likelihoods(c)[j] for c in choices])
    weights = weights / weights.sum()
    return tuple(zip(choices, (float(w) for w in weights)))


def best_guess(bell: str, hadamard_enabled: bool) -> tuple[Composite, float]:
    """Maximum-posterior composite; ties go to the earliest canonical choice."""
    post = eve_posterior(bell, hadamard_enabled)
    best = max(range(len(post)), key=lambda i: (post[i][1], -i))
    return post[best]


class EprProbe(Attacker):
    """Swap a controller's incoming C photon for half of an EPR pair.

    The controller unknowingly operates on Eve's fake photon. On the outgoing
    hop Eve Bell-measures the fake against the partner she kept, guesses the
    controller's composite, applies that guess to the true photon she held
    back and forwards it.
    """

    def __init__(self, strategy: AttackStrategy, rng: np.random.Generator,
                 num_controllers: int) -> None:
        super().__init__()
        j = strategy.probe_controller
        if not 2 <= j <= num_controllers:
            raise AttackError(
                f"controller:{j} is not on the C-sequence chain "
                f"(needs an incoming hop; valid: 2..{num_controllers})"
            )
        self.strategy = strategy
        self.rng = rng
        self.controller = j
        self.in_hop = f"c-hop:{j - 1}"
        self.out_hop = f"c-hop:{j}"
        self._held: dict[int, tuple[int, int, int]] = {}

    def on_transit(self, view: TransitView) -> None:
        if view.hop == self.in_hop:
            for tid in view.triples:
                true_c = view.qubit_of(tid, "C")
                fake, kept = view.attach(tid, PHI_PLUS)
                view.reroute(tid, "C", fake)
                self._held[tid] = (true_c, fake, kept)
        elif view.hop == self.out_hop:
            for tid in view.triples:
                true_c, fake, kept = self._held.pop(tid)
                (bell,) = view.measure_qubits(tid, (fake, kept), Basis.BELL, self.rng)
                guess, confidence = best_guess(bell, view.hadamard_enabled)
                view.apply_composite(tid, true_c, guess)
                view.reroute(tid, "C", true_c)
                view.detach(tid, (fake, kept))
                self.record.add(triple=tid, bell=bell, guess=guess.label,
                                posterior_max=confidence)

    def summary(self) -> dict[str, Any]:
        return {"controller": self.controller, "probes": len(self.record.entries)}


def make_attacker(strategy: AttackStrategy | None, rng: np.random.Generator,
                  num_controllers: int) -> Attacker:
    strategy = strategy or NO_ATTACK
    if strategy.kind is AttackKind.NONE:
        return Attacker()
    if strategy.kind is AttackKind.EPR_PROBE:
        return EprProbe(strategy, rng, num_controllers)
    hop = strategy.target
    if hop.startswith("c-hop:") and not 1 <= int(hop.split(":")[1]) <= num_controllers:
        raise AttackError(f"{hop} is not a hop of a {num_controllers}-controller chain")
    return InterceptResend(strategy, rng)

