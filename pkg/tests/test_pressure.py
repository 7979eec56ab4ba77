from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import BETA, CERTIFIED, UNCERTIFIED, G_of, pi_of

from sftcarpet.errors import HypothesisNotCertified, SeriesDiverges
from sftcarpet.fixtures import NAMES
from sftcarpet.pressure import (
    cq_check,
    eigenfunction_series,
    entropy_from_pressure,
    equilibrium_cylinder_measures,
    induced_integral,
    induced_weights,
    partition_sum_bounds,
    potential_integral,
    pressure,
    pressure_root,
)
from sftcarpet.symdyn import (
    FactorMap,
    count_words,
    spectral_radius,
    topological_entropy,
    validate_sft,
)


@pytest.mark.parametrize("name", NAMES)
def test_zero_tau_gives_entropy(name):
    res = pressure(pi_of(name), 0.0)
    h = topological_entropy(pi_of(name).domain)
    assert abs(res.pressure - h) < 1e-9
    assert res.bracket[0] <= res.pressure <= res.bracket[1]
    assert res.lam == pytest.approx(math.exp(res.pressure))


@pytest.mark.parametrize("tau", [0.2, 0.5, 0.9])
def test_carpet_weights_are_powers(tau):
    sysm = induced_weights(pi_of("ex5_1"), G_of("ex5_1"), tau, K=40)
    W = sysm.loop_weights
    assert 1 not in W  # A_11 = 0: no length-one loop
    for n in range(1, 39):
        assert W[n + 1] == pytest.approx(n ** (1 - tau), rel=1e-12)


def test_three_symbol_weights():
    tau = 0.3
    sysm = induced_weights(pi_of("ex7_1"), G_of("ex7_1"), tau, K=30)
    W = sysm.loop_weights
    for n in range(1, 12):
        # words 2^n, 3^n and 2^k 3^l (k, l >= 1, k + l = n), each with count n + 1
        expect = (n + 1) * (n + 1) ** (1 - tau)
        assert W[n + 1] == pytest.approx(expect, rel=1e-12)


def test_zero_tau_weights_are_return_counts():
    sysm = induced_weights(pi_of("ex5_2"), None, 0.0, K=20)
    assert sysm.loop_weights[3] == sysm.loop_counts[3]


def test_carpet_lambda_bounds():
    res = pressure(pi_of("ex5_1"), BETA, G_of("ex5_1"))
    assert res.lam >= (2 / 3) ** BETA * 2
    assert res.lam <= spectral_radius(pi_of("ex5_1").domain.matrix)
    assert res.method == "induced-root"
    assert res.width < 1e-9


def test_horizon_change_within_bracket():
    for name in ("ex5_1", "ex5_2", "ex7_6"):
        a = pressure(pi_of(name), 0.6, G_of(name), K=200)
        b = pressure(pi_of(name), 0.6, G_of(name), K=400)
        assert a.bracket[0] - 1e-12 <= b.pressure <= a.bracket[1] + 1e-12


def test_input_validation():
    with pytest.raises(ValueError):
        induced_weights(pi_of("ex5_1"), G_of("ex5_1"), 0.5, K=5)
    with pytest.raises(ValueError):
        induced_weights(pi_of("ex5_1"), G_of("ex5_1"), 1.0)


@pytest.mark.parametrize("name", UNCERTIFIED)
def test_uncertified_refuses(name):
    with pytest.raises(HypothesisNotCertified):
        induced_weights(pi_of(name), None, 0.5)


@pytest.mark.parametrize("name", CERTIFIED)
@pytest.mark.parametrize("n", [10, 14])
def test_partition_bracket_contains_root(name, n):
    tau = 0.5
    res = pressure(pi_of(name), tau, G_of(name))
    lo, hi = partition_sum_bounds(pi_of(name), G_of(name), tau, n)
    assert lo <= res.bracket[0] and res.bracket[1] <= hi


def test_partition_bracket_depth_18():
    res = pressure(pi_of("ex5_1"), BETA, G_of("ex5_1"))
    lo, hi = partition_sum_bounds(pi_of("ex5_1"), G_of("ex5_1"), BETA, 18)
    assert lo <= res.pressure <= hi


def test_partition_carpet_lower_bound():
    lo, _ = partition_sum_bounds(pi_of("ex5_1"), G_of("ex5_1"), BETA, 15)
    assert lo >= math.log((2 / 3) ** BETA * 2) - 0.15


@pytest.mark.parametrize("name", ["ex5_1", "ex7_4"])
def test_partition_zero_potential_upper(name):
    X = pi_of(name).domain
    lo, hi = partition_sum_bounds(pi_of(name), None, 0.0, 12)
    assert hi == pytest.approx(math.log(count_words(X, 12)) / 12, abs=1e-12)
    assert lo <= hi


def test_partition_rejects_deep():
    with pytest.raises(ValueError):
        partition_sum_bounds(pi_of("ex5_1"), G_of("ex5_1"), 0.5, 19)


def test_full_shift_measure_of_maximal_entropy():
    X = validate_sft([[1, 1], [1, 1]])
    pi = FactorMap.onto_image(X, {"1": "1", "2": "2"})
    sysm = induced_weights(pi, None, 0.0)
    M = equilibrium_cylinder_measures(sysm, depth=6)
    for w, mass in M.items():
        assert mass == pytest.approx(2.0 ** -len(w), abs=1e-12)


@pytest.mark.parametrize("name,depth", [("ex5_1", 8), ("ex5_2", 8), ("ex7_4", 8),
                                        ("ex7_1", 5), ("ex7_5", 5), ("ex7_6", 5)])
def test_measure_additivity(name, depth):
    sysm = induced_weights(pi_of(name), G_of(name), BETA)
    M = equilibrium_cylinder_measures(sysm, depth=depth)
    alph = pi_of(name).domain.alphabet
    for k in range(1, depth + 1):
        assert sum(M.level(k).values()) == pytest.approx(1.0, abs=1e-10)
    for w, mass in M.items():
        assert mass > 0
        if len(w) < depth:
            assert sum(M.get(w + (a,), 0.0) for a in alph) == pytest.approx(mass, abs=1e-8)


def test_carpet_run_masses():
    sysm = induced_weights(pi_of("ex5_1"), G_of("ex5_1"), BETA)
    res = pressure_root(sysm)
    M = equilibrium_cylinder_measures(sysm, res.pressure, depth=8)
    ratios = []
    for k in range(1, 6):
        tot = sum(m for w, m in M.level(k + 2).items()
                  if w[0] == "1" and w[-1] == "1" and "1" not in w[1:-1])
        ratios.append(tot / (k ** (1 - BETA) * res.lam ** -(k + 1)))
    assert max(ratios) - min(ratios) < 1e-9 * max(ratios)


@pytest.mark.parametrize("name", ["ex5_1", "ex5_2", "ex7_4"])
def test_integral_bounds_contain_exact(name):
    sysm = induced_weights(pi_of(name), G_of(name), BETA)
    M = equilibrium_cylinder_measures(sysm, depth=8)
    mid, lo, hi = potential_integral(G_of(name), M, with_bounds=True)
    assert isinstance(mid, float)
    exact = induced_integral(sysm, M.pressure)
    assert lo - 1e-9 <= exact <= hi + 1e-9


def test_entropy_identity():
    sysm = induced_weights(pi_of("ex5_1"), G_of("ex5_1"), BETA)
    res = pressure_root(sysm)
    integral = induced_integral(sysm, res.pressure)
    h = entropy_from_pressure(res.pressure, BETA, integral)
    assert 0 < h <= topological_entropy(pi_of("ex5_1").domain) + 1e-12
    assert entropy_from_pressure(0.7, 0.0, 123.0) == 0.7


def test_eigenfunction_ratios():
    res = pressure(pi_of("ex5_1"), BETA, G_of("ex5_1"))
    pi, G = pi_of("ex5_1"), G_of("ex5_1")
    for k in range(2, 11):
        r = eigenfunction_series(pi, G, BETA, k + 1, res.lam) / eigenfunction_series(pi, G, BETA, k, res.lam)
        assert 1.0 <= r <= ((k + 1) / k) ** BETA
    a = eigenfunction_series(pi, G, BETA, 3, res.lam, terms=200)
    b = eigenfunction_series(pi, G, BETA, 3, res.lam, terms=400)
    assert abs(a - b) < 1e-12


def test_eigenfunction_zero_tau_constant():
    pi = pi_of("ex5_1")
    vals = [eigenfunction_series(pi, None, 0.0, k, 2.0) for k in range(1, 6)]
    assert max(vals) == pytest.approx(min(vals), rel=1e-14)


def test_eigenfunction_diverges():
    with pytest.raises(SeriesDiverges):
        eigenfunction_series(pi_of("ex5_1"), G_of("ex5_1"), BETA, 3, 1.0)


def test_cq():
    pi, G = pi_of("ex5_1"), G_of("ex5_1")
    res = pressure(pi, BETA, G)
    cq = cq_check(pi, G, BETA, res.pressure)
    assert cq.satisfied and cq.r >= 2
    assert cq.evidence["two_beta"] < 1
    bad = cq_check(pi, G, BETA, math.log(1.2))
    assert not bad.satisfied and "lambda > 3/2" in bad.failing
    assert cq_check(pi, None, 0.0, math.log(2)).satisfied


@pytest.mark.parametrize("name", CERTIFIED)
def test_convexity(name):
    taus = np.linspace(0.0, 0.95, 12)
    P = np.array([pressure(pi_of(name), t, G_of(name), K=200).pressure for t in taus])
    assert np.diff(P, 2).min() >= -1e-8
    assert np.all(np.diff(P) <= 1e-12)  # G <= 0 on these fixtures
