"""Compiled vs numpy kernels, per call and per protocol run.

    python benchmarks/bench_kernels.py [--repeat 2000] [--runs 20]

Kernel timings call both modules directly. Run timings re-import the package
in a subprocess with and without MCQSDC_PURE_PYTHON so each sees one backend.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mcqsdc import _kernels_py

try:
    from mcqsdc import _kernels_c
except ImportError:
    _kernels_c = None

H2 = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT = np.eye(4, dtype=complex)[[0, 1, 3, 2]]

RUN_SNIPPET = """
import time
from mcqsdc import BACKEND
from mcqsdc.protocol import ProtocolConfig, random_message, run_mcqsdc
cfg = ProtocolConfig(num_triples=256, num_controllers=3, seed=0)
msg = random_message(cfg, "mcqsdc")
run_mcqsdc(cfg, None, msg)
t = time.perf_counter()
for s in range({runs}):
    run_mcqsdc(cfg, None, msg)
print(BACKEND, (time.perf_counter() - t) / {runs})
"""


def bench_kernels(repeat: int) -> list[tuple]:
    rows = []
    rng = np.random.default_rng(0)
    for n in range(3, 9):
        amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
        amps /= np.linalg.norm(amps)
        cases = {
            "apply 1q": lambda m, a=amps, n=n: m.apply_matrix(a, n, (n - 1,), H2),
            "apply 2q": lambda m, a=amps, n=n: m.apply_matrix(a, n, (0, n - 1), CNOT),
            "marginal": lambda m, a=amps, n=n: m.marginal_probabilities(a, n, (0, 1, 2)),
            "project": lambda m, a=amps, n=n: m.project(a, n, (1,), 1),
        }
        for name, fn in cases.items():
            py = min(timeit.repeat(lambda: fn(_kernels_py), number=repeat, repeat=3)) / repeat
            cy = (min(timeit.repeat(lambda: fn(_kernels_c), number=repeat, repeat=3)) / repeat
                  if _kernels_c else float("nan"))
            rows.append((n, name, py, cy))
    return rows


def bench_runs(runs: int) -> dict[str, float]:
    out = {}
    for pure in ("", "1"):
        env = dict(os.environ)
        env.pop("MCQSDC_PURE_PYTHON", None)
        if pure:
            env["MCQSDC_PURE_PYTHON"] = pure
        proc = subprocess.run([sys.executable, "-c", RUN_SNIPPET.format(runs=runs)],
                              env=env, capture_output=True, text=True, check=True)
        name, secs = proc.stdout.split()
        out[name] = float(secs)
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--runs", type=int, default=20)
    args = ap.parse_args()

    print(f"{'qubits':>6} {'kernel':10} {'numpy us':>10} {'cython us':>10} {'speedup':>8}")
    for n, name, py, cy in bench_kernels(args.repeat):
        print(f"{n:>6} {name:10} {py * 1e6:10.2f} {cy * 1e6:10.2f} {py / cy:8.1f}x")

    runs = bench_runs(args.runs)
    print("\nfull MCQSDC run (256 triples, 3 controllers, H on):")
    for name, secs in runs.items():
        print(f"  {name:7s} {secs * 1e3:8.2f} ms/run")
    if "cython" in runs and "python" in runs:
        print(f"  speedup {runs['python'] / runs['cython']:.2f}x")


if __name__ == "__main__":
    main()
