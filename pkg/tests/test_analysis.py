import math

import numpy as np
import pytest
from scipy.stats import binom
from statsmodels.stats.proportion import proportion_confint

from mcqsdc.adversary import AttackStrategy
from mcqsdc.analysis import (
    CHECK_PURPOSES,
    OracleError,
    Rate,
    abort_probability_oracle,
    aggregate,
    check_pass_probability,
    detection_probability_oracle,
    empirical_mutual_information,
    eve_information,
    wilson,
    within_sigma,
)
from mcqsdc.protocol import ProtocolConfig, ProtocolRun, random_message
from mcqsdc.report import CheckRecord, RunReport

import oracles

Z_ON_C = AttackStrategy("intercept-z", "c-hop")


# ---- detection oracle ------------------------------------------------------------

def test_z_intercept_on_c_is_one_quarter():
    want = oracles.z_intercept_on_c_detection()
    assert want == pytest.approx(0.25, abs=1e-12)
    assert detection_probability_oracle(Z_ON_C, "c-hop") == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("check", CHECK_PURPOSES)
@pytest.mark.parametrize("protocol, n", [("cqsdc", 1), ("mcqsdc", 2)])
def test_no_attack_never_detected(check, protocol, n):
    assert detection_probability_oracle(None, check, protocol=protocol, num_controllers=n) == 0.0


@pytest.mark.parametrize("check", CHECK_PURPOSES)
def test_attacks_downstream_of_a_check_are_invisible_to_it(check):
    late = AttackStrategy("intercept-random", "a-hop")
    expected = 0.0 if check != "a-hop" else None
    got = detection_probability_oracle(late, check)
    if expected is None:
        assert 0 < got < 1
    else:
        assert got == 0.0


def test_epr_oracle_values():
    on = {c: detection_probability_oracle(AttackStrategy("epr-probe"), c, protocol="mcqsdc",
                                          num_controllers=2) for c in CHECK_PURPOSES}
    assert on == pytest.approx({"ab-hop": 0.0, "c-hop": 0.25, "b-hop": 0.25, "a-hop": 0.25}, abs=1e-12)
    for c in CHECK_PURPOSES:
        assert detection_probability_oracle(AttackStrategy("epr-probe"), c, protocol="mcqsdc",
                                            num_controllers=2, hadamard_enabled=False) == 0.0


@pytest.mark.parametrize("kwargs", [
    dict(check="bogus"),
    dict(check="c-hop", protocol="bb84"),
    dict(check="c-hop", attack=AttackStrategy("epr-probe"), protocol="cqsdc"),
    dict(check="c-hop", attack=AttackStrategy("epr-probe", "controller:3"), protocol="mcqsdc",
         num_controllers=2),
    dict(check="c-hop", attack=AttackStrategy("epr-probe"), protocol="mcqsdc",
         num_controllers=2, noise_p=0.1),
    dict(check="c-hop", attack=AttackStrategy("intercept-z", "c-hop:2")),
])
def test_unsupported_combinations(kwargs):
    attack = kwargs.pop("attack", Z_ON_C)
    check = kwargs.pop("check")
    with pytest.raises(OracleError):
        detection_probability_oracle(attack, check, **kwargs)


def test_noise_only_detection_grows_with_p():
    vals = [detection_probability_oracle(None, "a-hop", noise_p=p) for p in (0.0, 0.01, 0.05, 0.1)]
    assert vals[0] == 0 and all(a < b for a, b in zip(vals, vals[1:]))


def _empirical(variant, attack, purpose, seed, **kw):
    cfg = ProtocolConfig(num_triples=2400, check_fraction=0.25, min_check_samples=8,
                         error_threshold=1.0, seed=seed, **kw)
    run = ProtocolRun(cfg, variant, random_message(cfg, variant), attack)
    rep = run.run()
    rec = next(c for c in rep.checks if c.purpose == purpose)
    return rec.errors, rec.samples


@pytest.mark.parametrize("variant, attack, purpose, kw", [
    ("cqsdc", AttackStrategy("intercept-random", "b-hop"), "b-hop", {}),
    ("cqsdc", AttackStrategy("intercept-z", "ab-hop"), "ab-hop", {}),
    ("cqsdc", AttackStrategy("intercept-random", "a-hop"), "a-hop", {}),
    ("cqsdc", None, "a-hop", dict(noise_p=0.04)),
    ("mcqsdc", AttackStrategy("intercept-random", "c-hop:2"), "c-hop", dict(num_controllers=2)),
    ("mcqsdc", AttackStrategy("epr-probe"), "b-hop", dict(num_controllers=2)),
    ("mcqsdc", AttackStrategy("intercept-z", "b-hop"), "a-hop", dict(num_controllers=2)),
], ids=lambda v: getattr(v, "target", None) or str(v))
def test_monte_carlo_agrees_with_oracle(variant, attack, purpose, kw):
    errors, samples = _empirical(variant, attack, purpose, seed=11, **kw)
    oracle = detection_probability_oracle(attack, purpose, protocol=variant,
                                          num_controllers=kw.get("num_controllers", 1),
                                          noise_p=kw.get("noise_p", 0.0))
    assert within_sigma(errors / samples, oracle, samples), (errors, samples, oracle)


# ---- abort oracle --------------------------------------------------------------------

@pytest.mark.parametrize("p, s", [(0.25, 32), (0.01, 100), (0.0, 50), (1.0, 3)])
def test_zero_threshold_abort_is_one_minus_pass_all(p, s):
    got = abort_probability_oracle({"c-hop": p}, s)
    assert got["total"] == pytest.approx(1 - (1 - p) ** s, abs=1e-12)
    assert got["c-hop"] == pytest.approx(got["total"], abs=1e-12)


@pytest.mark.parametrize("p, s, t", [(0.1, 40, 0.1), (0.3, 25, 0.2), (0.05, 64, 0.0)])
def test_pass_probability_matches_binomial_cdf(p, s, t):
    assert check_pass_probability(p, s, t) == pytest.approx(binom.cdf(math.floor(t * s), s, p), abs=1e-12)


def test_abort_steps_are_sequential():
    per = {"ab-hop": 0.1, "c-hop": 0.2, "b-hop": 0.0, "a-hop": 0.3}
    out = abort_probability_oracle(per, 10)
    survive = [(1 - per[k]) ** 10 for k in CHECK_PURPOSES]
    assert out["ab-hop"] == pytest.approx(1 - survive[0])
    assert out["c-hop"] == pytest.approx(survive[0] * (1 - survive[1]))
    assert out["b-hop"] == 0.0
    assert out["total"] == pytest.approx(1 - np.prod(survive))
    assert sum(out[k] for k in CHECK_PURPOSES) == pytest.approx(out["total"])


# ---- Eve's information -------------------------------------------------------------------

def test_hadamard_off_is_fully_resolved():
    info = eve_information(False)
    assert info.identification_probability == pytest.approx(1.0, abs=1e-12)
    assert info.mutual_information_bits == pytest.approx(2.0, abs=1e-12)


def test_hadamard_on_strictly_lower():
    on, off = eve_information(True), eve_information(False)
    assert on.identification_probability == pytest.approx(0.5, abs=1e-12)
    assert on.mutual_information_bits == pytest.approx(1.5, abs=1e-12)
    assert on.identification_probability < off.identification_probability
    assert on.mutual_information_bits < off.mutual_information_bits


@pytest.mark.parametrize("h", [False, True])
def test_degenerate_prior_leaks_nothing(h):
    prior = [1.0] + [0.0] * (7 if h else 3)
    info = eve_information(h, prior)
    assert info.mutual_information_bits == 0.0
    assert info.identification_probability == pytest.approx(1.0)


def _random_priors(k, count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield rng.dirichlet(np.full(k, rng.choice([0.3, 1.0, 4.0])))


@pytest.mark.parametrize("h", [False, True])
def test_matches_independent_oracle(h):
    for prior in _random_priors(8 if h else 4, 50, seed=int(h)):
        ident, mi = oracles.leakage(h, prior)
        info = eve_information(h, prior)
        assert info.identification_probability == pytest.approx(ident, abs=1e-12)
        assert info.mutual_information_bits == pytest.approx(mi, abs=1e-12)


@pytest.mark.parametrize("p_h", [0.0, 0.1, 0.5, 0.9, 1.0])
def test_leakage_monotone_for_uniform_pauli_priors(p_h):
    prior = [(1 - p_h) / 4] * 4 + [p_h / 4] * 4
    on, off = eve_information(True, prior), eve_information(False)
    assert on.mutual_information_bits <= off.mutual_information_bits + 1e-12
    assert on.identification_probability <= off.identification_probability + 1e-12


def test_leaked_fraction_never_exceeds_hadamard_off():
    # with H disabled Eve resolves the whole choice; with H on, at most that
    for q in _random_priors(4, 200, seed=7):
        off = eve_information(False, q)
        assert off.mutual_information_bits == pytest.approx(off.prior_entropy_bits, abs=1e-9)
        on = eve_information(True, np.concatenate([q, q]) / 2)
        assert on.mutual_information_bits <= on.prior_entropy_bits + 1e-12


def test_coin_hadamard_on_fixed_pauli_leaks_the_coin():
    # the absolute leakage is not monotone over all priors: I vs H.I is
    # perfectly distinguishable, so an always-I controller leaks one bit
    # once it adds a fair H coin
    on = eve_information(True, [1, 0, 0, 0, 1, 0, 0, 0])
    assert on.mutual_information_bits == pytest.approx(1.0)
    assert eve_information(False, [1, 0, 0, 0]).mutual_information_bits == 0.0


def test_bad_prior_rejected():
    with pytest.raises(ValueError):
        eve_information(True, [1, 0, 0, 0])
    with pytest.raises(ValueError):
        eve_information(False, [0.5, 0.5, 0.5, -0.5])


def test_empirical_mutual_information():
    assert empirical_mutual_information({}) == 0.0
    assert empirical_mutual_information({"I|phi+": 5, "Z|phi-": 5}) == pytest.approx(1.0)
    assert empirical_mutual_information({"I|phi+": 5, "I|phi-": 5}) == pytest.approx(0.0)


# ---- statistics -----------------------------------------------------------------------

@pytest.mark.parametrize("k, n", [(0, 10), (0, 10_000), (3, 17), (50, 100), (99, 100), (100, 100)])
def test_wilson_matches_statsmodels(k, n):
    assert wilson(k, n) == pytest.approx(proportion_confint(k, n, alpha=0.05, method="wilson"), abs=1e-12)


def test_within_sigma():
    assert within_sigma(0.25, 0.25, 100)
    assert within_sigma(0.25 + 4 * math.sqrt(0.1875 / 10_000) * 0.99, 0.25, 10_000)
    assert not within_sigma(0.25 + 4 * math.sqrt(0.1875 / 10_000) * 1.01, 0.25, 10_000)
    assert within_sigma(0.0, 0.0, 10)


def _report(aborted=False, sweep=None, errors=0):
    return RunReport(protocol="cqsdc", config={}, seed=0, attack={"kind": "none", "target": None},
                     sent="000", delivered=None if aborted else "000",
                     aborted_at="S4" if aborted else None,
                     checks=[CheckRecord("S2", "ab-hop", 8, errors, 0.0, errors == 0)], sweep=sweep)


def test_ten_thousand_clean_runs_bound_abort_rate():
    result = aggregate([_report()] * 10_000)
    (point,) = result.points
    assert point.aborts.rate == 0.0
    assert point.aborts.high < 4e-4
    assert point.successes.rate == 1.0
    assert point.checks["S2"].trials == 80_000


def test_single_report_degenerate():
    (point,) = aggregate([_report(aborted=True)]).points
    assert point.aborts.low == point.aborts.high == 1.0
    assert point.successes.low == point.successes.high == 0.0


def test_aggregate_rejects_empty_and_mixed():
    with pytest.raises(ValueError):
        aggregate([])
    with pytest.raises(ValueError, match="mix"):
        aggregate([_report(sweep={"axis": "noise", "value": 0.0}),
                   _report(sweep={"axis": "triples", "value": 64})])


def test_aggregate_groups_in_input_order():
    reports = [_report(sweep={"axis": "noise", "value": v}, errors=e)
               for v, e in [(0.02, 1), (0.0, 0), (0.02, 2), (0.01, 0)]]
    result = aggregate(reports)
    assert result.axis == "noise"
    assert [p.value for p in result.points] == [0.02, 0.0, 0.01]
    assert result.points[0].checks["S2"].hits == 3
    assert result.points[0].runs == 2
    rows = result.to_csv().splitlines()
    assert len(rows) == 4 and rows[0].startswith("axis,value,runs")


def test_rate_to_dict():
    r = Rate.of(2, 8)
    assert r.to_dict()["rate"] == 0.25
    assert r.low < 0.25 < r.high
