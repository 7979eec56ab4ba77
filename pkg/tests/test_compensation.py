from __future__ import annotations

import math
from fractions import Fraction

import pytest
from conftest import CERTIFIED, GOLDEN, UNCERTIFIED, G_of, pi_of

from sftcarpet.compensation import (
    bowen_variation,
    build_G,
    dump,
    evaluate_G,
    telescoping_product,
    telescoping_sum,
    trailing_bounds,
    verify_compensation_periodic,
)
from sftcarpet.errors import NoApplicableTheorem
from sftcarpet.hypocheck import classify
from sftcarpet.symdyn import FactorMap, identity_map, preimage_count_adjusted, validate_sft

CASES = {"ex5_1": "thm31", "ex5_2": "thm41", "ex7_1": "thm61", "ex7_4": "thm62",
         "ex7_5": "thm64", "ex7_6": "thm65"}


@pytest.mark.parametrize("name", CERTIFIED)
def test_build_cases(name):
    assert G_of(name).case == CASES[name]


@pytest.mark.parametrize("name", UNCERTIFIED)
def test_build_refuses(name):
    with pytest.raises(NoApplicableTheorem):
        build_G(pi_of(name))


def test_carpet_values():
    G = G_of("ex5_1")
    # [1^n 0] carries log((n-1)/n); [0] and [1 0] carry 0
    assert evaluate_G(G, ["0"]).value == 0.0
    assert evaluate_G(G, ["1", "0"]).value == 0.0
    for n in range(2, 12):
        v = evaluate_G(G, ["1"] * n + ["0"])
        assert v.resolved
        assert v.value == pytest.approx(math.log((n - 1) / n), abs=1e-15)
    assert G.ratio((1, 1, 1)) == Fraction(2, 3)


def test_unresolved_prefix_interval():
    v = evaluate_G(G_of("ex5_1"), ["1", "1", "1"])
    assert not v.resolved and v.flag == "undetermined at this depth"
    assert v.lo <= math.log(3 / 4) and v.hi >= 0.0


def test_run_length_values_three_symbols():
    G = G_of("ex7_1")
    for k in range(1, 5):
        for l in range(0, 5):
            n = k + l
            w = ["2"] * k + ["3"] * l + ["1"]
            assert evaluate_G(G, w).value == pytest.approx(math.log(n / (n + 1)), abs=1e-15)


def test_golden_tail():
    G = G_of("ex7_4")
    v = evaluate_G(G, ["2"] * 30)
    assert abs(v.lo + math.log(GOLDEN)) < 1e-4 and abs(v.hi + math.log(GOLDEN)) < 1e-4
    assert G.tail_values["fiber shift"] == pytest.approx(-math.log(GOLDEN), abs=1e-12)


def test_nilpotent_fiber_is_locally_constant():
    X = validate_sft([[1, 1, 0], [0, 0, 1], [1, 0, 0]])
    pi = FactorMap.onto_image(X, {"1": "1", "2": "2", "3": "2"})
    assert "3.1(1)" in classify(pi).applicable_theorems
    G = build_G(pi)
    assert G.case == "locally-constant"
    v = evaluate_G(G, ["2", "2", "2", "2", "2"])
    assert v.lo == v.hi == 0.0
    assert all(value == 0.0 for w, value in dump(G, 8) if len(w.split()) > 3)


def test_telescoping():
    G = G_of("ex5_1")
    for k in range(1, 10):
        assert telescoping_sum(G, ["1"] * k) == pytest.approx(-math.log(k), abs=1e-14)
        direct, closed = telescoping_product(G, ["1"] * k)
        assert direct == closed == Fraction(1, k)
    G = G_of("ex7_1")
    for k in range(1, 5):
        for l in range(1, 5):
            u = ["2"] * k + ["3"] * l
            direct, closed = telescoping_product(G, u)
            assert direct == closed == Fraction(1, k + l + 1)


@pytest.mark.parametrize("name", CERTIFIED)
def test_telescoping_single_symbol(name):
    G = G_of(name)
    pi = pi_of(name)
    one = pi.distinguished
    for s in pi.codomain.alphabet:
        if s == one or not pi.codomain.allows([one, s, one]):
            continue
        cnt, _ = preimage_count_adjusted(pi, [one, s, one])
        assert telescoping_sum(G, [s]) == pytest.approx(-math.log(cnt), abs=1e-14)


@pytest.mark.parametrize("name", CERTIFIED)
def test_periodic_constancy(name):
    rep = verify_compensation_periodic(G_of(name), max_period=10)
    assert rep.checked > 0
    assert rep.failures == ()


def test_fixed_point_defect_golden():
    rep = verify_compensation_periodic(G_of("ex7_4"), max_period=4, n_fixed=500)
    assert all(abs(d) < 1e-3 for d in rep.fixed_point_defects.values())


def test_fixed_point_defect_polynomial_fiber():
    # |D_n| = n + 1 with a zero tail value: the defect is log(501)/500, above 1e-3
    rep = verify_compensation_periodic(G_of("ex5_1"), max_period=4, n_fixed=500)
    assert rep.fixed_point_defects["1"] == pytest.approx(math.log(501) / 500, rel=1e-12)


def test_bowen_unbounded_for_carpet():
    G = G_of("ex5_1")
    var = [bowen_variation(G, n=n) for n in (5, 10, 15, 20)]
    assert all(a < b for a, b in zip(var, var[1:]))
    assert var[-1] == pytest.approx(math.log(21), abs=1e-9)


def test_bowen_bounded_with_tightness():
    G = G_of("ex5_2")
    t = classify(pi_of("ex5_2")).tightness["2"]
    v10, v20 = bowen_variation(G, n=10), bowen_variation(G, n=20)
    assert v20 - v10 < 0.05
    assert v20 <= 2 * math.log(t.k2 / t.k1) + 1e-9


def test_bowen_tau_scaling():
    G = G_of("ex7_4")
    assert bowen_variation(G, n=8, tau=0.5) == pytest.approx(0.5 * bowen_variation(G, n=8))


def test_bowen_rejects_large_n():
    with pytest.raises(ValueError):
        bowen_variation(G_of("ex5_1"), n=21)


@pytest.mark.parametrize("name", CERTIFIED)
def test_bowen_monotone(name):
    G = G_of(name)
    var = [bowen_variation(G, n=n) for n in (2, 4, 6, 8)]
    assert all(a <= b + 1e-12 for a, b in zip(var, var[1:]))


def test_identity_map_gives_zero_potential():
    X = validate_sft([[1, 1], [1, 1]])
    G = build_G(identity_map(X))
    assert all(v == 0.0 for _, v in dump(G, 6))
    assert all(bowen_variation(G, n=n) == 0.0 for n in (1, 5, 10))


@pytest.mark.parametrize("name", CERTIFIED)
def test_cylinder_constancy(name):
    """A resolved prefix keeps its value under every allowed extension."""
    G, pi = G_of(name), pi_of(name)
    Y = pi.codomain
    one = pi.distinguished

    def grow(prefix, depth):
        v = evaluate_G(G, prefix)
        if v.resolved:
            for s in Y.alphabet:
                if Y.allows(prefix + [s]):
                    assert evaluate_G(G, prefix + [s]).value == v.value
            return
        if depth == 0:
            return
        for s in Y.alphabet:
            if Y.allows(prefix + [s]):
                grow(prefix + [s], depth - 1)

    for s in Y.alphabet:
        grow([s], 6 if len(Y.alphabet) > 2 else 10)
    assert evaluate_G(G, [one]).value == 0.0


def test_nonpositive_when_counts_increase():
    G = G_of("ex5_1")
    assert all(v <= 0.0 for _, v in dump(G, 10))


def _run_interval(name, n):
    G, pi = G_of(name), pi_of(name)
    s = [a for a in pi.codomain.alphabet if a != pi.distinguished][0]
    return G.tail_at((), pi.codomain.index[s]), evaluate_G(G, [s] * n)


@pytest.mark.parametrize("name", ["ex5_2", "ex7_4", "ex7_5"])
def test_continuity_proxy(name):
    tail, v = _run_interval(name, 64)
    assert max(abs(v.lo - tail), abs(v.hi - tail)) < 1e-6


def test_continuity_proxy_polynomial_rate():
    # log((n-1)/n) approaches the zero tail value only like 1/n
    tail, v = _run_interval("ex5_1", 64)
    assert v.hi == tail == 0.0
    assert v.lo == pytest.approx(math.log(63 / 64), abs=1e-15)


def test_trailing_bounds_ordered():
    G = G_of("ex7_4")
    table, defect = trailing_bounds(G, 6)
    assert defect >= 0.0
    for lo, hi in table.values():
        assert lo <= hi


def test_dump_rows():
    rows = dump(G_of("ex5_1"), 4)
    assert rows[0] == ("0", 0.0)
    assert ("1 1 1 0", pytest.approx(math.log(2 / 3))) in rows
