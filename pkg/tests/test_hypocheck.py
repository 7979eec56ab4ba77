from __future__ import annotations

import math

import pytest
from conftest import CERTIFIED, GOLDEN, UNCERTIFIED, pi_of

from sftcarpet.fixtures import NAMES
from sftcarpet.hypocheck import (
    check_condition_C,
    check_condition_Cprime,
    check_setting,
    classify,
    entropy_condition,
    gibbs_bounded,
    ratio_limit,
    tightness,
)
from sftcarpet.symdyn import FactorMap, preimage_count, validate_sft

EXPECTED = {
    "ex5_1": ("A", ("3.1(2)",)),
    "ex5_2": ("A", ("4.1", "4.1-irreducible")),
    "ex7_1": ("B", ("6.1",)),
    "ex7_2": ("B", ()),
    "ex7_3": ("B", ()),
    "ex7_4": ("B", ("6.2", "6.4", "6.5")),
    "ex7_5": ("B", ("6.4",)),
    "ex7_6": ("B", ("6.5",)),
    "ex7_7": ("B", ()),
    "ex7_8": ("B", ()),
}


@pytest.mark.parametrize("name", NAMES)
def test_classify_fixtures(name):
    setting, theorems = EXPECTED[name]
    rep = classify(pi_of(name))
    assert rep.setting == setting
    assert rep.applicable_theorems == theorems


def test_setting_examples():
    assert check_setting(pi_of("ex5_1")).setting == "A"
    assert check_setting(pi_of("ex7_1")).setting == "B"
    X = validate_sft([[1, 1, 1]] * 3)
    pi = FactorMap.onto_image(X, {"1": "a", "2": "a", "3": "b"}, distinguished="a")
    res = check_setting(pi)
    assert res.setting == "neither"
    assert "singleton clump" in res.failure


def test_ratio_limits():
    r = ratio_limit(pi_of("ex5_1"))
    assert r.value == pytest.approx(1.0) and r.certified
    r = ratio_limit(pi_of("ex5_2"))
    assert r.method == "perron-exact"
    assert r.value == pytest.approx(1 / r.lam, rel=1e-12)


def test_ratio_limit_golden_fiber():
    r = ratio_limit(pi_of("ex7_4"), symbol="2")
    assert r.value == pytest.approx(1 / GOLDEN, rel=1e-9)


def test_ratio_limit_methods_agree():
    pi = pi_of("ex5_2")
    exact = ratio_limit(pi)
    c = [preimage_count(pi, ["1"] + ["2"] * n + ["1"]) for n in (199, 200)]
    assert exact.value == pytest.approx(c[0] / c[1], abs=1e-8)


def test_entropy_condition():
    e = entropy_condition(pi_of("ex5_1"))
    assert e.limit == 0.0 and e.matches
    e = entropy_condition(pi_of("ex7_4"), symbol="2")
    assert e.limit == pytest.approx(math.log(GOLDEN), abs=1e-9) and e.matches


def test_entropy_condition_two_cycle():
    X = validate_sft([[0, 1, 0], [0, 0, 1], [1, 1, 0]])
    pi = FactorMap.onto_image(X, {"1": "1", "2": "2", "3": "2"})
    e = entropy_condition(pi)
    assert e.limit == 0.0 and e.matches


def test_condition_C():
    assert check_condition_C(pi_of("ex5_1")).parts == (True, True)
    assert check_condition_C(pi_of("ex5_2")).parts == (True, True)


def test_condition_C_fails_without_cycles():
    X = validate_sft([[1, 1, 0], [0, 0, 1], [1, 0, 0]])
    pi = FactorMap.onto_image(X, {"1": "1", "2": "2", "3": "2"})
    res = check_condition_C(pi)
    assert res.parts[0] is False
    assert res.witnesses[0]


def test_condition_Cprime():
    assert check_condition_Cprime(pi_of("ex7_1")).parts == (True, True, True)
    res = check_condition_Cprime(pi_of("ex7_2"))
    assert res.parts[1] is False and "ratio" in res.witnesses[1]


def test_condition_Cprime_singleton_fibers():
    X = validate_sft([[1, 1, 1]] * 3)
    pi = FactorMap.onto_image(X, {"1": "1", "2": "2", "3": "3"})
    assert check_condition_Cprime(pi).holds


@pytest.mark.parametrize("name", [n for n in NAMES if n != "ex5_1" and n != "ex5_2"])
def test_Cprime_depth_stable(name):
    a = check_condition_Cprime(pi_of(name), depth=12)
    b = check_condition_Cprime(pi_of(name), depth=16)
    assert a.parts == b.parts


def test_gibbs():
    g = gibbs_bounded(pi_of("ex5_1"))
    assert g.bounded is False
    X = validate_sft([[0, 1], [1, 1]])
    pi = FactorMap.onto_image(X, {"1": "1", "2": "2"})
    g = gibbs_bounded(pi)
    assert g.bounded is True and g.bound == 1


@pytest.mark.parametrize("name", ["ex5_1", "ex5_2"])
def test_gibbs_agrees_with_enumeration(name):
    pi = pi_of(name)
    c = [preimage_count(pi, ["1"] + ["2"] * n + ["1"]) if name == "ex5_2"
         else preimage_count(pi, ["0"] + ["1"] * n + ["0"]) for n in range(1, 31)]
    assert gibbs_bounded(pi).bounded is False
    assert c[29] > c[9]


def test_tightness():
    t = tightness(pi_of("ex7_4"), GOLDEN, "2")
    assert t.tight and t.guarantee
    assert 0 < t.k1 <= t.k2
    t = tightness(pi_of("ex7_5"), 3.0, "2")
    assert t.tight
    with pytest.raises(ValueError):
        tightness(pi_of("ex5_1"), 1.0)


def test_classify_notes():
    assert any("hypothesis I" in n for n in classify(pi_of("ex7_3")).notes)
    rep = classify(pi_of("ex7_7"))
    assert rep.applicable_theorems == ()
    assert any("no covered theorem" in n for n in rep.notes)


@pytest.mark.parametrize("name", CERTIFIED)
def test_report_consistency(name):
    rep = classify(pi_of(name))
    for thm in rep.applicable_theorems:
        assert rep.checks[thm][0] is True
    if rep.setting == "A":
        assert rep.condition_C.holds
        assert entropy_condition(pi_of(name)).matches


@pytest.mark.parametrize("name", UNCERTIFIED)
def test_none_records_failures(name):
    rep = classify(pi_of(name))
    assert not rep.applicable_theorems
    assert all(not ok and why for ok, why in rep.checks.values())
