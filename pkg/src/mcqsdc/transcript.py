"""Append-only protocol transcript with a stable JSON-lines form."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    actor: str
    step: str
    public: bool
    triple: int | None = None
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "kind": self.kind,
            "actor": self.actor,
            "step": self.step,
            "public": self.public,
            "triple": self.triple,
            "payload": self.payload,
        }


class Transcript:
    """Ordered log of transmissions, operations, announcements and verdicts.

    Private events (secret operations, unannounced measurement results) are
    logged too so that custody and ordering can be audited; adversaries only
    ever see :meth:`public_events`.
    """

    def __init__(self) -> None:
        self._events: list[Event] = []

    def log(self, kind: str, actor: str, step: str, payload: dict[str, Any] | None = None,
            *, public: bool = True, triple: int | None = None) -> Event:
        event = Event(len(self._events), kind, actor, step, public, triple, payload or {})
        self._events.append(event)
        return event

    def __iter__(self) -> Iterator[Event]:
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def __getitem__(self, i: int) -> Event:
        return self._events[i]

    def public_events(self) -> list[Event]:
        return [e for e in self._events if e.public]

    def find(self, predicate: Callable[[Event], bool]) -> list[Event]:
        return [e for e in self._events if predicate(e)]

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps(e.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"
            for e in self._events
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        t = cls()
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                t._events.append(Event(d["seq"], d["kind"], d["actor"], d["step"],
                                       d["public"], d["triple"], d["payload"]))
        return t
