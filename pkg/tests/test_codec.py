import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcqsdc import codec
from mcqsdc.codec import (
    ALL_FRAMES,
    MESSAGES,
    DecodeError,
    PauliFrame,
    decode,
    encode,
    eq1_correlation_table,
    ghz_state,
    pauli_action,
    table1_result,
)
from mcqsdc.qstate import Op, PAULIS

import oracles

NAME = {Op.I: "I", Op.Z: "Z", Op.X: "X", Op.IY: "iY"}


def brute_index(vec):
    """GHZ index of a 3-qubit vector by overlap with the oracle basis."""
    overlaps = [abs(np.vdot(oracles.ghz(k), vec)) for k in range(1, 9)]
    k = int(np.argmax(overlaps))
    assert overlaps[k] == pytest.approx(1.0, abs=1e-12)
    return k + 1


def brute_frame(frame, k):
    op = oracles.full_operator(3, {0: oracles.NAMED[NAME[frame.a]],
                                   1: oracles.NAMED[NAME[frame.b]],
                                   2: oracles.NAMED[NAME[frame.c]]})
    return brute_index(op @ oracles.ghz(k))


# =============================================================================
# GHZ basis
# =============================================================================

def test_ghz1():
    assert np.allclose(ghz_state(1).amplitudes, oracles.superpose(("000", 1), ("111", 1)))


def test_ghz8_phase_as_written():
    psi8 = ghz_state(8)
    assert psi8.amplitude("110") == pytest.approx(2**-0.5)
    assert psi8.amplitude("001") == pytest.approx(-(2**-0.5))


def test_ghz_orthonormal():
    for i, j in itertools.product(range(1, 9), repeat=2):
        assert abs(ghz_state(i).inner(ghz_state(j)) - (i == j)) < 1e-12


@pytest.mark.parametrize("k", [0, 9, -1])
def test_ghz_index_range(k):
    with pytest.raises(ValueError):
        ghz_state(k)


# =============================================================================
# Encoding and the transformation table
# =============================================================================

def test_encode_000():
    enc = encode("000")
    assert (enc.first, enc.second) == (Op.Z, Op.Z)
    assert np.allclose(enc.apply(ghz_state(1)).amplitudes, ghz_state(1).amplitudes)


def test_encode_010():
    enc = encode("010")
    assert (enc.first, enc.second) == (Op.IY, Op.Z)


def test_u3_exact_phase():
    out = encode("010").apply(ghz_state(1))
    assert np.allclose(out.amplitudes, -ghz_state(3).amplitudes)


@pytest.mark.parametrize("k", range(1, 9))
def test_uk_reaches_psik(k):
    msg = MESSAGES[k - 1]
    enc = encode(msg)
    op = oracles.full_operator(3, {0: oracles.NAMED[NAME[enc.first]],
                                   1: oracles.NAMED[NAME[enc.second]]})
    assert brute_index(op @ oracles.ghz(1)) == k


# Transcribed transformation table: row index -> both operation pairs.
TABLE1 = {
    1: [("Z", "Z"), ("I", "I")],
    2: [("I", "Z"), ("Z", "I")],
    3: [("iY", "Z"), ("X", "I")],
    4: [("X", "Z"), ("iY", "I")],
    5: [("I", "X"), ("Z", "iY")],
    6: [("Z", "X"), ("I", "iY")],
    7: [("X", "X"), ("iY", "iY")],
    8: [("iY", "X"), ("X", "iY")],
}
BY_NAME = {v: k for k, v in NAME.items()}


def test_table1_specific():
    assert table1_result(Op.X, Op.I) == 3
    assert table1_result(Op.I, Op.I) == 1


@pytest.mark.parametrize("row", range(1, 9))
def test_table1_rows(row):
    for first, second in TABLE1[row]:
        assert table1_result(BY_NAME[first], BY_NAME[second]) == row
        op = oracles.full_operator(3, {0: oracles.NAMED[first], 1: oracles.NAMED[second]})
        assert brute_index(op @ oracles.ghz(1)) == row


def test_table1_covers_all_16_pairs():
    listed = {pair for pairs in TABLE1.values() for pair in pairs}
    assert len(listed) == 16
    assert codec.TABLE1_LISTED == {
        row: tuple((BY_NAME[a], BY_NAME[b]) for a, b in pairs) for row, pairs in TABLE1.items()
    }


# =============================================================================
# Pauli action
# =============================================================================

def test_action_b_x():
    assert pauli_action(PauliFrame(Op.I, Op.X, Op.I), 1) == 5


def test_action_identity():
    for k in range(1, 9):
        assert pauli_action(PauliFrame(), k) == k


def test_action_c_x():
    assert pauli_action(PauliFrame(Op.I, Op.I, Op.X), 1) == 7
    vec = oracles.superpose(("001", 1), ("110", 1))
    assert brute_index(vec) == 7


def test_action_table_matches_brute_force():
    for frame in ALL_FRAMES:
        for k in range(1, 9):
            assert pauli_action(frame, k) == brute_frame(frame, k)


frames_st = st.sampled_from(ALL_FRAMES)


@given(frames_st, frames_st, st.integers(1, 8))
def test_group_action(f, g, k):
    assert pauli_action(f.compose(g), k) == pauli_action(f, pauli_action(g, k))


@given(frames_st, frames_st, frames_st)
def test_compose_associative(f, g, h):
    assert f.compose(g).compose(h) == f.compose(g.compose(h))


# =============================================================================
# Decode
# =============================================================================

def test_decode_noop_channel():
    assert decode(1, [PauliFrame()]) == "000"


def test_decode_round_trip_example():
    frame = PauliFrame(Op.I, Op.Z, Op.X)
    assert decode(pauli_action(frame, 6), [frame]) == "101"


def test_decode_exhaustive_bob_frames():
    failures = 0
    for msg in MESSAGES:
        k = codec.index_of(msg)
        for b, c in itertools.product(PAULIS, repeat=2):
            frame = PauliFrame(Op.I, b, c)
            # brute-force the measured index from the full statevector
            enc = encode(msg)
            op = oracles.full_operator(3, {0: oracles.NAMED[NAME[enc.first]],
                                           1: oracles.NAMED[NAME[pauli_product_name(enc.second, b)]],
                                           2: oracles.NAMED[NAME[c]]})
            measured = brute_index(op @ oracles.ghz(1))
            assert measured == pauli_action(frame, k)
            failures += decode(measured, [frame]) != msg
    assert failures == 0


def pauli_product_name(p, q):
    # brute-force phase-blind product via matrices
    prod = oracles.NAMED[NAME[p]] @ oracles.NAMED[NAME[q]]
    for cand in PAULIS:
        m = oracles.NAMED[NAME[cand]]
        if abs(abs(np.vdot(m.flatten(), prod.flatten())) - 2) < 1e-12:
            return cand
    raise AssertionError


def test_decode_multiple_frames_accumulate():
    f1 = PauliFrame(Op.I, Op.X, Op.I)
    f2 = PauliFrame(Op.I, Op.I, Op.IY)
    for msg in MESSAGES:
        measured = pauli_action(f2, pauli_action(f1, codec.index_of(msg)))
        assert decode(measured, [f1, f2]) == msg


def test_decode_bad_outcome():
    with pytest.raises(DecodeError):
        decode(0, [])


def test_decode_inconsistent_frame():
    class Bogus:
        a = b = c = Op.H
    with pytest.raises(DecodeError):
        decode(1, [Bogus()])


def test_frame_rejects_hadamard():
    with pytest.raises(ValueError):
        PauliFrame(Op.H, Op.I, Op.I)


# =============================================================================
# Correlation tables
# =============================================================================

def test_eq1_k4_ab_c():
    assert eq1_correlation_table(4, "AB|C") == {("psi+", "-"), ("psi-", "+")}


def test_eq1_k1_a_bc():
    assert eq1_correlation_table(1, "A|BC") == {("+", "phi+"), ("-", "phi-")}


def test_eq1_k1_z():
    assert eq1_correlation_table(1, "Z") == {"000", "111"}


@pytest.mark.parametrize("k", range(1, 9))
@pytest.mark.parametrize("partition, factors", [
    ("AB|C", [([0, 1], "Bell"), ([2], "X")]),
    ("A|BC", [([0], "X"), ([1, 2], "Bell")]),
])
def test_support_agreement(k, partition, factors):
    dist = oracles.distribution(oracles.ghz(k), factors)
    support = {labels for labels, p in dist.items() if p > 1e-9}
    assert eq1_correlation_table(k, partition) == support
    assert all(abs(dist[labels] - 0.5) < 1e-12 for labels in support)


def test_bad_partition():
    with pytest.raises(ValueError):
        eq1_correlation_table(1, "AC|B")


def test_hadamard_conjugation():
    for p in PAULIS:
        conj = oracles.H @ oracles.NAMED[NAME[p]] @ oracles.H
        expected = oracles.NAMED[NAME[codec.hadamard_conjugate(p)]]
        assert abs(abs(np.vdot(conj.flatten(), expected.flatten())) - 2) < 1e-12
