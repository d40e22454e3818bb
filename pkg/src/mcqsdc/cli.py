"""Command-line front end: ``mcqsdc run | sweep | attack-eval``.

Exit codes: 0 success, 1 usage or configuration error, 2 protocol abort (or a
delivered message that differs from the one sent).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Any, Sequence

import numpy as np

from . import analysis
from .adversary import AttackError, AttackKind, AttackStrategy
from .protocol import ConfigError, ProtocolConfig, ProtocolRun, random_message
from .report import RunReport, rows_to_csv, write_atomic

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2
OUT_DIR_ENV = "MCQSDC_OUT_DIR"

# config key -> (flag dest, parser); flags and JSON config share these names
FIELDS: dict[str, Any] = {
    "protocol": str,
    "triples": int,
    "controllers": int,
    "check_fraction": float,
    "min_samples": int,
    "threshold": float,
    "noise": float,
    "hadamard": str,
    "attack": str,
    "target": str,
    "permissions": str,
    "seed": int,
    "message": str,
    "runs": int,
    "out": str,
    "format": str,
}
DEFAULTS: dict[str, Any] = {
    "protocol": "cqsdc",
    "triples": 256,
    "controllers": None,
    "check_fraction": 0.1,
    "min_samples": 32,
    "threshold": 0.0,
    "noise": 0.0,
    "hadamard": "on",
    "attack": "none",
    "target": None,
    "permissions": None,
    "seed": None,
    "message": None,
    "runs": 1,
    "out": None,
    "format": "json",
}
SWEEP_AXES = {
    "triples": "num_triples",
    "controllers": "num_controllers",
    "check_fraction": "check_fraction",
    "min_samples": "min_check_samples",
    "threshold": "error_threshold",
    "noise": "noise_p",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default; 2 means abort here
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    add = p.add_argument
    add("--config", help="JSON file with keys mirroring the flags; flags win")
    add("--protocol", choices=("cqsdc", "mcqsdc"))
    add("--triples", type=int, help="GHZ triples per run (default 256)")
    add("--controllers", type=int, help="controllers in MCQSDC (default 3)")
    add("--check-fraction", dest="check_fraction", type=float, help="fraction of triples per check")
    add("--min-samples", dest="min_samples", type=int, help="minimum samples per check (default 32)")
    add("--threshold", type=float, help="tolerated check error rate (default 0)")
    add("--noise", type=float, help="per-photon per-hop Pauli flip probability")
    add("--hadamard", choices=("on", "off"), help="controllers' Hadamard choice in MCQSDC")
    add("--attack", choices=[k.value for k in AttackKind])
    add("--target", help="ab-hop, c-hop[:j], b-hop, a-hop, or controller:j for epr-probe")
    add("--permissions", help="comma list of 1/0 per controller, e.g. 1,0,1")
    add("--seed", type=int, help="base seed (random and recorded when omitted)")
    add("--message", help="bit string to send (random when omitted)")
    add("--runs", type=int, help="independent runs")
    add("--out", help=f"report path (default: ${OUT_DIR_ENV} or the current directory)")
    add("--format", choices=("json", "csv"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcqsdc", description="Seeded CQSDC / MCQSDC protocol simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="execute one or more protocol runs")
    _add_common(run)
    sweep = sub.add_parser("sweep", help="aggregate runs over a list of values of one config field")
    _add_common(sweep)
    sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sweep.add_argument("--points", required=True, help="comma-separated values, e.g. 0,0.01,0.02")
    ev = sub.add_parser("attack-eval", help="oracle and empirical leakage / detection for an attack")
    _add_common(ev)
    return parser


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def load_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    out = {}
    for key, value in data.items():
        name = key.replace("-", "_")
        if name not in FIELDS:
            raise UsageError(f"unknown config key {key!r}")
        if name == "permissions" and isinstance(value, list):
            value = ",".join("1" if v else "0" for v in value)
        if name == "hadamard" and isinstance(value, bool):
            value = "on" if value else "off"
        kind = FIELDS[name]
        ok = (value is None or (kind is int and isinstance(value, int) and not isinstance(value, bool))
              or (kind is float and isinstance(value, (int, float)) and not isinstance(value, bool))
              or (kind is str and isinstance(value, str)))
        if not ok:
            raise UsageError(f"config key {key!r} must be {kind.__name__}, got {value!r}")
        out[name] = value
    return out


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the config file, then explicit flags."""
    opts = dict(DEFAULTS)
    explicit: dict[str, Any] = load_config_file(args.config) if args.config else {}
    for key in FIELDS:
        value = getattr(args, key, None)
        if value is not None:
            explicit[key] = value
    opts.update(explicit)
    if (args.command == "attack-eval" and opts["attack"] == AttackKind.EPR_PROBE.value
            and "protocol" not in explicit):
        # the probe needs a controller with an incoming hop
        opts["protocol"] = "mcqsdc"
    if opts["controllers"] is None:
        opts["controllers"] = 3 if opts["protocol"] == "mcqsdc" else 1
    if opts["seed"] is None:
        opts["seed"] = int(np.random.SeedSequence().entropy % 2**63)
    if opts["runs"] is None or int(opts["runs"]) < 1:
        raise UsageError("--runs must be at least 1")
    return opts


def _parse_permissions(text: str | None, n: int) -> tuple[bool, ...] | None:
    if text is None:
        return None
    flags = []
    for item in str(text).split(","):
        item = item.strip().lower()
        if item in ("1", "true", "yes", "y"):
            flags.append(True)
        elif item in ("0", "false", "no", "n"):
            flags.append(False)
        else:
            raise UsageError(f"bad permission flag {item!r}")
    if len(flags) != n:
        raise UsageError(f"--permissions lists {len(flags)} flags for {n} controllers")
    return tuple(flags)


def protocol_config(opts: dict[str, Any], seed: int) -> ProtocolConfig:
    try:
        return ProtocolConfig(
            num_triples=int(opts["triples"]),
            check_fraction=float(opts["check_fraction"]),
            min_check_samples=int(opts["min_samples"]),
            error_threshold=float(opts["threshold"]),
            noise_p=float(opts["noise"]),
            seed=seed,
            num_controllers=int(opts["controllers"]),
            hadamard_enabled=opts["hadamard"] == "on" and opts["protocol"] == "mcqsdc",
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def attack_strategy(opts: dict[str, Any]) -> AttackStrategy:
    try:
        return AttackStrategy(AttackKind(opts["attack"]), opts["target"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def trial_seed(base: int, point: int, trial: int) -> int:
    """Per-trial seed: independent of how trials are scheduled."""
    return int(np.random.SeedSequence([base, point, trial]).generate_state(1, np.uint64)[0] >> 1)


def execute(opts: dict[str, Any], seed: int, sweep: dict[str, Any] | None = None) -> RunReport:
    config = protocol_config(opts, seed)
    protocol = opts["protocol"]
    try:
        message = opts["message"] if opts["message"] is not None else random_message(config, protocol)
        perms = _parse_permissions(opts["permissions"], config.num_controllers if protocol == "mcqsdc" else 1)
        report = ProtocolRun(config, protocol, message, attack_strategy(opts), perms).run()
    except (ConfigError, AttackError) as exc:
        raise UsageError(str(exc)) from None
    report.sweep = sweep
    return report


def _clean(report: RunReport) -> bool:
    """Not aborted, and either delivered intact or legitimately withheld."""
    if report.aborted:
        return False
    return report.delivered is None or report.delivered == report.sent


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

def _out_path(opts: dict[str, Any], stem: str) -> str:
    if opts["out"]:
        return opts["out"]
    directory = os.environ.get(OUT_DIR_ENV) or "."
    return os.path.join(directory, f"{stem}.{opts['format']}")


def _resolved_echo(opts: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in sorted(opts.items()) if k not in ("out",)}


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _summary_line(r: RunReport) -> str:
    checks = " ".join(f"{c.name}:{c.errors}/{c.samples}" for c in r.checks)
    if r.aborted:
        status = f"ABORT at {r.aborted_at}"
    elif r.delivered is None:
        status = "withheld (posterior only)"
    else:
        status = "delivered" if r.delivered == r.sent else f"delivered with {r.bit_errors} bit errors"
    return f"seed={r.seed} {status} [{checks}]"


def cmd_run(opts: dict[str, Any]) -> int:
    base = int(opts["seed"])
    runs = int(opts["runs"])
    seeds = [base] if runs == 1 else [trial_seed(base, 0, t) for t in range(runs)]
    reports = [execute(opts, s) for s in seeds]
    stem = f"run-{opts['protocol']}-seed{base}"
    if opts["format"] == "csv":
        text = rows_to_csv([r.csv_row() for r in reports])
    elif runs == 1:
        text = reports[0].to_json()
    else:
        text = _dump({
            "version": 1,
            "options": _resolved_echo(opts),
            "runs": [r.to_dict() for r in reports],
            "aggregate": analysis.aggregate(reports).to_dict(),
        })
    path = _out_path(opts, stem)
    write_atomic(path, text)
    for r in reports[:10]:
        print(_summary_line(r))
    if runs > 10:
        print(f"... {runs - 10} more runs")
    print(f"report: {path}")
    return EXIT_OK if all(_clean(r) for r in reports) else EXIT_ABORT


def _parse_points(text: str, axis: str) -> list:
    kind = int if FIELDS[axis] is int else float
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise UsageError("--points is empty")
    try:
        return [kind(t) for t in items]
    except ValueError:
        raise UsageError(f"--points for {axis} must be {kind.__name__} values") from None


def cmd_sweep(opts: dict[str, Any], axis: str, points_text: str) -> int:
    points = _parse_points(points_text, axis)
    base = int(opts["seed"])
    runs = int(opts["runs"])
    reports = []
    for i, value in enumerate(points):
        point_opts = dict(opts, **{axis: value})
        if axis == "controllers" and opts["permissions"] is not None:
            raise UsageError("--permissions cannot be combined with a controllers sweep")
        for t in range(runs):
            reports.append(execute(point_opts, trial_seed(base, i, t),
                                   {"axis": SWEEP_AXES[axis], "value": value}))
    result = analysis.aggregate(reports)
    if opts["format"] == "csv":
        text = result.to_csv()
    else:
        text = _dump({"version": 1, "options": _resolved_echo(opts), "sweep": result.to_dict()})
    path = _out_path(opts, f"sweep-{axis}-seed{base}")
    write_atomic(path, text)
    for p in result.points:
        print(f"{axis}={p.value}: runs={p.runs} abort={p.aborts.rate:.4f} "
              f"[{p.aborts.low:.4f}, {p.aborts.high:.4f}] success={p.successes.rate:.4f}")
    print(f"report: {path}")
    return EXIT_OK


def cmd_attack_eval(opts: dict[str, Any]) -> int:
    strategy = attack_strategy(opts)
    protocol = opts["protocol"]
    n = int(opts["controllers"]) if protocol == "mcqsdc" else 1
    hadamard = opts["hadamard"] == "on" and protocol == "mcqsdc"
    oracle_kw = dict(protocol=protocol, num_controllers=n, hadamard_enabled=hadamard,
                     noise_p=float(opts["noise"]))
    if protocol == "mcqsdc" and hadamard and n > 3:
        raise UsageError("the exact oracle enumerates 8**n composites; use at most 3 controllers")
    try:
        detection = {c: analysis.detection_probability_oracle(strategy, c, **oracle_kw)
                     for c in analysis.CHECK_PURPOSES}
    except analysis.OracleError as exc:
        raise UsageError(str(exc)) from None
    config = protocol_config(opts, 0)
    abort = analysis.abort_probability_oracle(detection, config.samples_per_check, config.error_threshold)

    leakage: dict[str, Any]
    if strategy.kind is AttackKind.EPR_PROBE:
        on, off = analysis.eve_information(True), analysis.eve_information(False)
        current = on if hadamard else off
        leakage = {
            "oracle": current.to_dict(),
            "hadamard_on": on.to_dict(),
            "hadamard_off": off.to_dict(),
            "hadamard_reduces_identification": on.identification_probability < off.identification_probability,
        }
    elif strategy.kind is AttackKind.NONE:
        leakage = {"oracle": {"identification_probability": 0.0, "mutual_information_bits": 0.0,
                              "prior_entropy_bits": 0.0}}
    else:
        # intercept-resend learns no controller operation
        leakage = {"oracle": {"identification_probability": 0.0, "mutual_information_bits": 0.0,
                              "prior_entropy_bits": 0.0},
                   "note": "intercept-resend measures photons; it does not learn controller operations"}

    base = int(opts["seed"])
    runs = int(opts["runs"])
    run_opts = dict(opts, protocol=protocol, controllers=n, threshold=1.0)
    reports = [execute(run_opts, trial_seed(base, 0, t)) for t in range(runs)]
    empirical: dict[str, Any] = {}
    for purpose in analysis.CHECK_PURPOSES:
        errors = sum(c.errors for r in reports for c in r.checks if c.purpose == purpose)
        samples = sum(c.samples for r in reports for c in r.checks if c.purpose == purpose)
        rate = analysis.Rate.of(errors, samples)
        empirical[purpose] = dict(rate.to_dict(), oracle=detection[purpose],
                                  within_4sigma=analysis.within_sigma(rate.rate, detection[purpose], samples))
    eve = [r.eve for r in reports if r.eve and "identifications" in r.eve]
    if eve:
        hits = sum(e["identifications"] for e in eve)
        probes = sum(e["probes"] for e in eve)
        joint: dict[str, int] = {}
        for e in eve:
            for k, v in e["joint"].items():
                joint[k] = joint.get(k, 0) + v
        ident = analysis.Rate.of(hits, probes)
        leakage["empirical"] = {
            "identification": ident.to_dict(),
            "mutual_information_bits": analysis.empirical_mutual_information(joint),
            "within_4sigma": analysis.within_sigma(ident.rate, leakage["oracle"]["identification_probability"],
                                                   probes),
        }
    else:
        leakage["empirical"] = {"identification": analysis.Rate.of(0, 0).to_dict(),
                                "mutual_information_bits": 0.0}

    doc = {
        "version": 1,
        "options": _resolved_echo(dict(opts, protocol=protocol, controllers=n)),
        "attack": strategy.to_dict(),
        "detection": {"per_sample_oracle": detection, "samples_per_check": config.samples_per_check,
                      "abort_probability_oracle": abort, "empirical_per_sample": empirical,
                      "note": "empirical rates use threshold 1 so every check runs"},
        "leakage": leakage,
    }
    path = _out_path(opts, f"attack-eval-{strategy.kind.value}-h{opts['hadamard']}-seed{base}")
    if opts["format"] == "csv":
        rows = [{"check": k, "oracle": detection[k], "empirical": v["rate"], "samples": v["trials"]}
                for k, v in empirical.items()]
        write_atomic(path, rows_to_csv(rows))
    else:
        write_atomic(path, _dump(doc))
    o = leakage["oracle"]
    print(f"attack={strategy.kind.value} target={strategy.target} hadamard={'on' if hadamard else 'off'}")
    print(f"identification probability (oracle): {o['identification_probability']:.6f}")
    print(f"mutual information bits (oracle):    {o['mutual_information_bits']:.6f}")
    if "hadamard_on" in leakage:
        print(f"identification with H on / off:      {leakage['hadamard_on']['identification_probability']:.6f}"
              f" / {leakage['hadamard_off']['identification_probability']:.6f}")
    emp = leakage["empirical"]["identification"]
    if emp["trials"]:
        print(f"identification (empirical):          {emp['rate']:.6f} over {emp['trials']} probes")
    for purpose, e in empirical.items():
        print(f"detection {purpose:7s} oracle {e['oracle']:.6f} empirical {e['rate']:.6f} "
              f"({e['hits']}/{e['trials']})")
    print(f"abort probability per run (oracle):  {abort['total']:.6f}")
    print(f"report: {path}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = resolve(args)
        if args.command == "run":
            return cmd_run(opts)
        if args.command == "sweep":
            return cmd_sweep(opts, args.axis, args.points)
        return cmd_attack_eval(opts)
    except UsageError as exc:
        print(f"mcqsdc: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"mcqsdc: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
