import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcqsdc import _backend, _kernels_py

_kernels_c = pytest.importorskip("mcqsdc._kernels_c")


@st.composite
def cases(draw):
    n = draw(st.integers(1, 8))
    k = draw(st.integers(1, min(3, n)))
    targets = tuple(draw(st.permutations(range(n)))[:k])
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    matrix = rng.normal(size=(2**k, 2**k)) + 1j * rng.normal(size=(2**k, 2**k))
    outcome = int(rng.integers(2**k))
    return n, targets, amps, matrix, outcome


@settings(max_examples=300, deadline=None)
@given(cases())
def test_backends_agree(case):
    n, targets, amps, matrix, outcome = case
    before = amps.copy()
    np.testing.assert_allclose(_kernels_c.apply_matrix(amps, n, targets, matrix),
                               _kernels_py.apply_matrix(amps, n, targets, matrix), atol=1e-12)
    np.testing.assert_allclose(_kernels_c.marginal_probabilities(amps, n, targets),
                               _kernels_py.marginal_probabilities(amps, n, targets), atol=1e-12)
    np.testing.assert_array_equal(_kernels_c.project(amps, n, targets, outcome),
                                  _kernels_py.project(amps, n, targets, outcome))
    assert np.array_equal(amps, before)


def test_non_contiguous_and_real_input():
    rng = np.random.default_rng(1)
    wide = rng.normal(size=16) + 0j
    view = wide[::2]
    m = np.array([[0, 1], [1, 0]], dtype=complex)
    np.testing.assert_allclose(_kernels_c.apply_matrix(view, 3, (1,), m),
                               _kernels_py.apply_matrix(view, 3, (1,), m))
    real = rng.normal(size=8)
    np.testing.assert_allclose(_kernels_c.marginal_probabilities(real, 3, (2, 0)),
                               _kernels_py.marginal_probabilities(real, 3, (2, 0)))


def test_compiled_backend_active_by_default():
    if os.environ.get("MCQSDC_PURE_PYTHON"):
        pytest.skip("fallback forced by the environment")
    assert _backend.NAME == "cython"
    assert _backend.kernels is _kernels_c


def test_pure_python_switch():
    env = dict(os.environ, MCQSDC_PURE_PYTHON="1")
    code = ("import mcqsdc; from mcqsdc import _backend, _kernels_py; "
            "assert _backend.kernels is _kernels_py; print(mcqsdc.BACKEND)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "python"


def test_fallback_run_matches_compiled():
    # whole-run equivalence: same seed, same report bytes under both backends
    code = ("from mcqsdc.protocol import *; c = ProtocolConfig(num_triples=64, min_check_samples=8, "
            "seed=4, num_controllers=2); r = run_mcqsdc(c, None, random_message(c, 'mcqsdc')); "
            "print(r.to_json())")
    runs = []
    for flag in ("", "1"):
        env = dict(os.environ)
        env.pop("MCQSDC_PURE_PYTHON", None)
        if flag:
            env["MCQSDC_PURE_PYTHON"] = flag
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
        assert out.returncode == 0, out.stderr
        runs.append(out.stdout)
    assert runs[0] == runs[1]
