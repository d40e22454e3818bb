"""Run reports and their machine-readable forms."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any

from .transcript import Transcript

REPORT_VERSION = 1


@dataclass
class CheckRecord:
    name: str
    purpose: str
    samples: int
    errors: int
    threshold: float
    passed: bool

    @property
    def error_rate(self) -> float:
        return self.errors / self.samples if self.samples else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "purpose": self.purpose,
            "samples": self.samples,
            "errors": self.errors,
            "error_rate": self.error_rate,
            "threshold": self.threshold,
            "passed": self.passed,
        }


@dataclass
class RunReport:
    protocol: str
    config: dict[str, Any]
    seed: int
    attack: dict[str, Any]
    sent: str
    delivered: str | None
    aborted_at: str | None
    checks: list[CheckRecord]
    eve: dict[str, Any] | None = None
    receiver_posterior: dict[str, Any] | None = None
    decode_disagreements: int = 0
    transcript_digest: str = ""
    wall_time: float = 0.0
    sweep: dict[str, Any] | None = None
    transcript: Transcript | None = field(default=None, repr=False, compare=False)

    @property
    def aborted(self) -> bool:
        return self.aborted_at is not None

    @property
    def success(self) -> bool:
        return not self.aborted and self.delivered == self.sent

    @property
    def bit_errors(self) -> int | None:
        if self.delivered is None:
            return None
        return sum(a != b for a, b in zip(self.sent, self.delivered))

    def check(self, name: str) -> CheckRecord:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self, include_timing: bool = False) -> dict[str, Any]:
        out = {
            "version": REPORT_VERSION,
            "protocol": self.protocol,
            "config": self.config,
            "seed": self.seed,
            "attack": self.attack,
            "sent": self.sent,
            "delivered": self.delivered,
            "success": self.success,
            "aborted_at": self.aborted_at,
            "bit_errors": self.bit_errors,
            "checks": [c.to_dict() for c in self.checks],
            "eve": self.eve,
            "receiver_posterior": self.receiver_posterior,
            "decode_disagreements": self.decode_disagreements,
            "transcript_sha256": self.transcript_digest,
        }
        if self.sweep is not None:
            out["sweep"] = self.sweep
        if include_timing:
            out["wall_time_s"] = self.wall_time
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    def csv_row(self) -> dict[str, Any]:
        row = {
            "protocol": self.protocol,
            "seed": self.seed,
            "attack": self.attack.get("kind"),
            "target": self.attack.get("target"),
            "success": int(self.success),
            "aborted_at": self.aborted_at or "",
            "message_bits": len(self.sent),
            "bit_errors": "" if self.bit_errors is None else self.bit_errors,
        }
        for c in self.checks:
            row[f"{c.name}_samples"] = c.samples
            row[f"{c.name}_errors"] = c.errors
        return row


def rows_to_csv(rows: list[dict[str, Any]]) -> str:
    if not rows:
        return ""
    fields: list[str] = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
