"""Exact oracles and Monte Carlo aggregation.

The oracles enumerate every branch of a single triple's history (Bob's B
Pauli, controller composites, decoy encodings, check coins, channel noise and
Eve's bases and outcomes) with exact amplitudes, so they never sample.
Triples are independent, which makes per-sample detection probabilities
sufficient to get exact abort probabilities for a whole run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from . import codec
from .adversary import AttackKind, AttackStrategy, best_guess, bell_likelihoods
from .codec import Composite, composite_choices, hadamard_parity
from .qstate import (
    BELL_LABELS,
    PAULIS,
    ZERO_PROB,
    Basis,
    MeasurementSpec,
    Op,
    apply_1q,
)
from .report import RunReport, rows_to_csv

Z95 = 1.959963984540054
CHECK_PURPOSES = ("ab-hop", "c-hop", "b-hop", "a-hop")
_NOISE = (Op.X, Op.IY, Op.Z)
_ROLE_QUBIT = {"A": 0, "B": 1, "C": 2}


class OracleError(ValueError):
    """Attack and check combination the oracle does not cover."""


# --------------------------------------------------------------------------
# per-sample detection probability
# --------------------------------------------------------------------------

_I2 = np.eye(2, dtype=complex)
_H2 = Op.H.matrix


def _on(qubit: int, m: np.ndarray) -> np.ndarray:
    """``m`` on one qubit of the 3-photon register (qubit 0 is the MSB)."""
    mats = [_I2, _I2, _I2]
    mats[qubit] = m
    return np.kron(np.kron(mats[0], mats[1]), mats[2])


def _conj(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    return u @ rho @ u.conj().T


_PAULI_ON = {(q, p): _on(q, p.matrix) for q in range(3) for p in PAULIS}
_H_ON_C = _on(2, _H2)


def _composite_matrix(comp: Composite) -> np.ndarray:
    m = comp.pauli.matrix @ (_H2 if comp.hadamard else _I2)
    return _on(2, m)


def _measure_and_resend(rho: np.ndarray, qubit: int, bases) -> np.ndarray:
    """Average over Eve's basis of the dephasing her measurement causes."""
    out = np.zeros_like(rho)
    for basis in bases:
        vecs = basis.vectors
        for j in range(2):
            proj = _on(qubit, np.outer(vecs[:, j], vecs[:, j].conj()))
            out += proj @ rho @ proj / len(bases)
    return out


def _noise(rho: np.ndarray, qubit: int, p: float) -> np.ndarray:
    out = (1 - p) * rho
    for flip in _NOISE:
        out = out + (p / 3) * _conj(rho, _PAULI_ON[(qubit, flip)])
    return out


# Context: everything the judging party reconstructs from publications
# (Bob's B Pauli, the controllers' composites, Alice's decoy index). Each
# context carries the unnormalized density matrix of the actual photons.
_Ctx = tuple


def _hop(states: dict, hop: str, roles, attack: AttackStrategy, noise_p: float) -> dict:
    intercept = (attack.kind in (AttackKind.INTERCEPT_Z, AttackKind.INTERCEPT_RANDOM)
                 and attack.target == hop)
    bases = (Basis.Z, Basis.X) if attack.kind is AttackKind.INTERCEPT_RANDOM else (Basis.Z,)
    if not intercept and noise_p <= 0:
        return states
    out = {}
    for ctx, rho in states.items():
        for role in roles:
            q = _ROLE_QUBIT[role]
            if noise_p > 0:
                rho = _noise(rho, q, noise_p)
            if intercept:
                rho = _measure_and_resend(rho, q, bases)
        out[ctx] = rho
    return out


def _expected(bob_b: Op, chain: tuple, u: int | None) -> np.ndarray:
    state = apply_1q(codec.ghz_state(1), bob_b, 1)
    for comp in chain:
        state = comp.apply(state, 2)
    if u is not None:
        state = codec.ENCODINGS[u].apply(state)
    return state.amplitudes


def _basis_matrix(spec: MeasurementSpec) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for f in spec.factors:
        m = np.kron(m, f.basis.vectors)
    return m


_SPECS = {
    "zzz": MeasurementSpec.of((0, Basis.Z), (1, Basis.Z), (2, Basis.Z)),
    "bell_x": MeasurementSpec.of(([0, 1], Basis.BELL), (2, Basis.X)),
    "bell_z": MeasurementSpec.of(([0, 1], Basis.BELL), (2, Basis.Z)),
    "zzx": MeasurementSpec.of((0, Basis.Z), (1, Basis.Z), (2, Basis.X)),
    "x_bell": MeasurementSpec.of((0, Basis.X), ([1, 2], Basis.BELL)),
    "ghz": MeasurementSpec.of(([0, 1, 2], Basis.GHZ)),
}
_BASES = {k: _basis_matrix(v) for k, v in _SPECS.items()}


def _mismatch(rho: np.ndarray, expected: np.ndarray, spec_key: str) -> float:
    """Weight of outcomes the expected pure state forbids."""
    m = _BASES[spec_key]
    p_actual = np.real(np.einsum("ij,jk,ki->i", m.conj().T, rho, m))
    p_expected = np.abs(m.conj().T @ expected) ** 2
    return float(p_actual[p_expected <= ZERO_PROB].sum())


def _detect(ctx: _Ctx, rho: np.ndarray, purpose: str, protocol: str) -> float:
    bob_b, chain, u = ctx
    if purpose == "ab-hop":
        expected = _expected(bob_b, (), None)
        return 0.5 * (_mismatch(rho, expected, "zzz") + _mismatch(rho, expected, "bell_x"))
    odd = hadamard_parity(chain)
    if purpose == "c-hop":
        expected = _expected(bob_b, chain, None)
        # receiver's coin picks Z or X on C; Alice pairs by H parity
        z_side = "zzz" if not odd else "bell_z"
        x_side = "bell_x" if not odd else "zzx"
        return 0.5 * (_mismatch(rho, expected, z_side) + _mismatch(rho, expected, x_side))
    expected = _expected(bob_b, chain, u)
    if odd and protocol == "mcqsdc":
        rho = _conj(rho, _H_ON_C)
        expected = _H_ON_C @ expected
    if purpose == "b-hop":
        return 0.5 * (_mismatch(rho, expected, "zzz") + _mismatch(rho, expected, "x_bell"))
    return _mismatch(rho, expected, "ghz")


def detection_probability_oracle(attack: AttackStrategy | None, check: str, *,
                                 protocol: str = "cqsdc", num_controllers: int = 1,
                                 hadamard_enabled: bool | None = None,
                                 noise_p: float = 0.0) -> float:
    """Exact probability that one sample of ``check`` reveals a mismatch.

    ``check`` names the transmission a check guards: ``ab-hop``, ``c-hop``,
    ``b-hop`` or ``a-hop``. The work grows as ``8**num_controllers`` with
    Hadamards enabled.
    """
    attack = attack or AttackStrategy()
    if check not in CHECK_PURPOSES:
        raise OracleError(f"check must be one of {CHECK_PURPOSES}, got {check!r}")
    if protocol == "cqsdc":
        num_controllers, hadamard_enabled = 1, False
    elif protocol != "mcqsdc":
        raise OracleError(f"unknown protocol {protocol!r}")
    if hadamard_enabled is None:
        hadamard_enabled = True
    probe = None
    if attack.kind is AttackKind.EPR_PROBE:
        probe = attack.probe_controller
        if not 2 <= probe <= num_controllers:
            raise OracleError(f"controller:{probe} has no incoming hop in a {num_controllers}-controller chain")
        if noise_p > 0:
            raise OracleError("the EPR-probe oracle assumes a noiseless channel")
    elif attack.target and attack.target.startswith("c-hop:"):
        if int(attack.target.split(":")[1]) > num_controllers:
            raise OracleError(f"{attack.target} is not a hop of this chain")

    psi1 = codec.ghz_state(1).amplitudes
    rho1 = np.outer(psi1, psi1.conj())
    states = {(b, (), None): 0.25 * _conj(rho1, _PAULI_ON[(1, b)]) for b in PAULIS}
    states = _hop(states, "ab-hop", ("A", "B"), attack, noise_p)
    if check == "ab-hop":
        return _collect(states, check, protocol)

    choices = composite_choices(hadamard_enabled)
    weight = 1 / len(choices)
    for j in range(1, num_controllers + 1):
        nxt = {}
        for (b, chain, u), rho in states.items():
            for comp in choices:
                if j == probe:
                    # the controller's composite lands on Eve's fake photon;
                    # the true C photon gets her max-posterior guess instead
                    new = np.zeros_like(rho)
                    for bell, lik in zip(BELL_LABELS, bell_likelihoods(comp)):
                        if lik > ZERO_PROB:
                            guess, _ = best_guess(bell, hadamard_enabled)
                            new += lik * _conj(rho, _composite_matrix(guess))
                else:
                    new = _conj(rho, _composite_matrix(comp))
                nxt[(b, chain + (comp,), u)] = weight * new
        states = _hop(nxt, f"c-hop:{j}", ("C",), attack, noise_p)
    if check == "c-hop":
        return _collect(states, check, protocol)

    nxt = {}
    for (b, chain, _), rho in states.items():
        for k in range(1, 9):
            enc = codec.ENCODINGS[k]
            u = _PAULI_ON[(0, enc.first)] @ _PAULI_ON[(1, enc.second)]
            nxt[(b, chain, k)] = _conj(rho, u) / 8
    states = _hop(nxt, "b-hop", ("B",), attack, noise_p)
    if check == "b-hop":
        return _collect(states, check, protocol)
    states = _hop(states, "a-hop", ("A",), attack, noise_p)
    return _collect(states, check, protocol)


def _collect(states: dict, check: str, protocol: str) -> float:
    p = sum(_detect(ctx, rho, check, protocol) for ctx, rho in states.items())
    if p <= ZERO_PROB:
        return 0.0
    return float(min(p, 1.0))


def check_pass_probability(p: float, samples: int, threshold: float) -> float:
    """P(errors / samples <= threshold) when each sample errs independently with ``p``."""
    allowed = math.floor(threshold * samples + 1e-9)
    return float(sum(math.comb(samples, k) * p**k * (1 - p) ** (samples - k)
                     for k in range(min(allowed, samples) + 1)))


def abort_probability_oracle(per_sample: dict[str, float], samples: int,
                             threshold: float = 0.0) -> dict[str, float]:
    """Exact abort probability of a run, overall and per check step.

    ``per_sample`` maps check purposes to per-sample detection probabilities.
    Checks run in protocol order on disjoint triples, hence independently.
    """
    out: dict[str, float] = {}
    survive = 1.0
    for purpose in CHECK_PURPOSES:
        passed = check_pass_probability(per_sample.get(purpose, 0.0), samples, threshold)
        out[purpose] = survive * (1 - passed)
        survive *= passed
    out["total"] = 1 - survive
    return out


# --------------------------------------------------------------------------
# Eve's information under the EPR probe
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EveInformation:
    identification_probability: float
    mutual_information_bits: float
    prior_entropy_bits: float

    def to_dict(self) -> dict[str, float]:
        return {
            "identification_probability": self.identification_probability,
            "mutual_information_bits": self.mutual_information_bits,
            "prior_entropy_bits": self.prior_entropy_bits,
        }


def _h(ps: Iterable[float]) -> float:
    return float(0.0 - sum(p * math.log2(p) for p in ps if p > 0))


def eve_information(hadamard_enabled: bool,
                    prior: Sequence[float] | dict[Composite, float] | None = None) -> EveInformation:
    """Exact identification probability and I(composite; Bell outcome).

    ``prior`` weights the controller's composites (``composite_choices``
    order, or a mapping); uniform by default. Identification is Eve's
    max-posterior guess under that prior.
    """
    choices = composite_choices(hadamard_enabled)
    if prior is None:
        weights = np.full(len(choices), 1 / len(choices))
    elif isinstance(prior, dict):
        weights = np.array([prior.get(c, 0.0) for c in choices], dtype=float)
    else:
        weights = np.array(prior, dtype=float)
    if weights.shape != (len(choices),) or weights.min() < 0 or weights.sum() <= 0:
        raise ValueError(f"prior needs {len(choices)} non-negative weights")
    weights = weights / weights.sum()
    joint = np.array([[w * lik for lik in bell_likelihoods(c)] for c, w in zip(choices, weights)])
    joint[joint < ZERO_PROB * 1e-3] = 0.0
    ident = float(joint.max(axis=0).sum())
    mi = _h(weights) + _h(joint.sum(axis=0)) - _h(joint.ravel())
    return EveInformation(min(ident, 1.0), max(mi, 0.0), _h(weights))


def empirical_mutual_information(joint_counts: dict[str, int]) -> float:
    """Plug-in estimate from ``{"<composite>|<bell>": count}`` tallies."""
    total = sum(joint_counts.values())
    if not total:
        return 0.0
    rows: dict[str, int] = {}
    cols: dict[str, int] = {}
    for key, n in joint_counts.items():
        a, b = key.split("|")
        rows[a] = rows.get(a, 0) + n
        cols[b] = cols.get(b, 0) + n
    return max(0.0, _h(n / total for n in rows.values()) + _h(n / total for n in cols.values())
               - _h(n / total for n in joint_counts.values()))


# --------------------------------------------------------------------------
# statistics and aggregation
# --------------------------------------------------------------------------

def wilson(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def within_sigma(observed: float, expected: float, n: int, k: float = 4.0) -> bool:
    """|observed - expected| <= k * sqrt(expected (1 - expected) / n)."""
    return abs(observed - expected) <= k * math.sqrt(expected * (1 - expected) / n) + 1e-15


@dataclass
class Rate:
    hits: int
    trials: int
    low: float
    high: float

    @property
    def rate(self) -> float:
        return self.hits / self.trials if self.trials else 0.0

    @classmethod
    def of(cls, hits: int, trials: int, degenerate: bool = False) -> "Rate":
        if degenerate:
            point = hits / trials if trials else 0.0
            return cls(hits, trials, point, point)
        lo, hi = wilson(hits, trials)
        return cls(hits, trials, lo, hi)

    def to_dict(self) -> dict[str, Any]:
        return {"hits": self.hits, "trials": self.trials, "rate": self.rate,
                "ci95": [self.low, self.high]}


@dataclass
class SweepPoint:
    value: Any
    runs: int
    aborts: Rate
    successes: Rate
    checks: dict[str, Rate] = field(default_factory=dict)
    eve_identification: Rate | None = None
    mean_posterior_entropy: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "runs": self.runs,
            "abort": self.aborts.to_dict(),
            "success": self.successes.to_dict(),
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
            "eve_identification": self.eve_identification.to_dict() if self.eve_identification else None,
            "mean_posterior_entropy_bits": self.mean_posterior_entropy,
        }

    def csv_row(self, axis: str | None) -> dict[str, Any]:
        row: dict[str, Any] = {"axis": axis or "", "value": "" if self.value is None else self.value,
                               "runs": self.runs,
                               "abort_rate": self.aborts.rate, "abort_lo": self.aborts.low,
                               "abort_hi": self.aborts.high,
                               "success_rate": self.successes.rate}
        for name, r in self.checks.items():
            row[f"{name}_samples"] = r.trials
            row[f"{name}_errors"] = r.hits
            row[f"{name}_rate"] = r.rate
            row[f"{name}_lo"] = r.low
            row[f"{name}_hi"] = r.high
        if self.eve_identification is not None:
            row["eve_identification"] = self.eve_identification.rate
        if self.mean_posterior_entropy is not None:
            row["mean_posterior_entropy_bits"] = self.mean_posterior_entropy
        return row


@dataclass
class SweepResult:
    axis: str | None
    points: list[SweepPoint]
    confidence: float = 0.95

    def to_dict(self) -> dict[str, Any]:
        return {"axis": self.axis, "confidence": self.confidence,
                "points": [p.to_dict() for p in self.points]}

    def to_csv(self) -> str:
        return rows_to_csv([p.csv_row(self.axis) for p in self.points])


def _axis_of(report: RunReport) -> tuple[str | None, Any]:
    if report.sweep is None:
        return None, None
    return report.sweep.get("axis"), report.sweep.get("value")


def aggregate(reports: Sequence[RunReport]) -> SweepResult:
    """Group reports by sweep point and summarize with 95% Wilson intervals.

    Run-level rates from a single report have no spread to estimate and
    collapse to the point; per-sample check rates always use Wilson.
    """
    if not reports:
        raise ValueError("aggregate needs at least one report")
    axes = {_axis_of(r)[0] for r in reports}
    if len(axes) != 1:
        raise ValueError(f"reports mix sweep axes: {sorted(map(str, axes))}")
    (axis,) = axes
    groups: dict[Any, list[RunReport]] = {}
    for r in reports:
        groups.setdefault(_key(_axis_of(r)[1]), []).append(r)
    points = []
    for key, group in groups.items():
        n = len(group)
        single = n == 1
        checks: dict[str, list[int]] = {}
        for r in group:
            for c in r.checks:
                tally = checks.setdefault(c.name, [0, 0])
                tally[0] += c.errors
                tally[1] += c.samples
        ident = None
        probes = [r.eve for r in group if r.eve and "identifications" in r.eve]
        if probes:
            ident = Rate.of(sum(e["identifications"] for e in probes),
                            sum(e["probes"] for e in probes))
        entropies = [r.receiver_posterior["mean_entropy_bits"] for r in group if r.receiver_posterior]
        points.append(SweepPoint(
            value=_axis_of(group[0])[1],
            runs=n,
            aborts=Rate.of(sum(r.aborted for r in group), n, degenerate=single),
            successes=Rate.of(sum(r.success for r in group), n, degenerate=single),
            checks={name: Rate.of(e, s) for name, (e, s) in checks.items()},
            eve_identification=ident,
            mean_posterior_entropy=float(np.mean(entropies)) if entropies else None,
        ))
    return SweepResult(axis, points)


def _key(value: Any) -> Any:
    return tuple(value) if isinstance(value, list) else value
