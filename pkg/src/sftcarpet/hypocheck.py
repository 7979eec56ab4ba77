"""Hypothesis checks deciding which compensation construction applies.

Every checker returns a small frozen record holding the verdict together with
a witness (an offending symbol, word or class) so that a negative answer can
be traced.  ``classify`` runs them all and collects the theorem cases whose
complete hypothesis list is certified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .symdyn import (
    FactorMap,
    ReturnWords,
    TransitionMatrix,
    _coreach_closure,
    _reach_closure,
    class_spectral_radius,
    communicating_classes,
    count_words,
    essential_symbols,
    fiber_indices,
    forward_infinite_symbols,
    is_irreducible,
    is_primitive,
    matrix_entropy,
    spectral_radius,
    topological_entropy,
)

RATIO_HORIZON = 200
CAUCHY_TAIL = 20
CAUCHY_TOL = 1e-9
ENTROPY_TOL = 1e-9
CPRIME_DEPTH = 12
FIBER_DEPTH = 24
WORD_LIMIT = 200000

THEOREMS = ("3.1(1)", "3.1(2)", "4.1", "4.1-irreducible", "6.1", "6.2", "6.4", "6.5")


@dataclass(frozen=True)
class SettingResult:
    setting: str
    diagnostics: tuple
    failure: str | None = None


@dataclass(frozen=True)
class RatioLimit:
    """Limit of c(n-1)/c(n) for the return counts over one fiber symbol.

    ``value`` is ``None`` when the limit could not be determined.
    """

    value: float | None
    certified: bool
    method: str
    horizon: int
    lam: float | None = None

    @property
    def determined(self) -> bool:
        return self.value is not None


@dataclass(frozen=True)
class EntropyCondition:
    limit: float
    matches: bool
    estimate: float
    depth: int
    method: str


@dataclass(frozen=True)
class ConditionResult:
    """Verdicts of the parts of a structural condition, with witnesses."""

    parts: tuple
    witnesses: tuple
    details: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return all(self.parts)


@dataclass(frozen=True)
class GibbsResult:
    bounded: bool
    certificate: str
    bound: int | None = None


@dataclass(frozen=True)
class TightnessResult:
    k1: float
    k2: float
    guarantee: bool
    tight: bool
    horizon: int


@dataclass(frozen=True)
class FiberHypothesis:
    """Uniform ratio hypothesis on the fiber words (I when target is 1, II otherwise)."""

    holds: bool
    target: float
    defects: tuple
    witness: tuple | None


@dataclass(frozen=True)
class HypothesisReport:
    setting: str
    setting_diagnostics: tuple
    b_entropy: float
    b_nilpotent: bool
    ratio: RatioLimit | None
    fiber_ratios: dict
    entropy: EntropyCondition | None
    condition_C: ConditionResult | None
    condition_Cprime: ConditionResult | None
    fiber_hypothesis: FiberHypothesis | None
    gibbs_bounded: GibbsResult | None
    tightness: dict
    checks: dict
    applicable_theorems: tuple
    notes: tuple = ()

    @property
    def gibbs(self) -> bool | None:
        return None if self.gibbs_bounded is None else self.gibbs_bounded.bounded


# -- fiber plumbing -----------------------------------------------------------


def _one(pi: FactorMap) -> int:
    return pi.fiber(pi.distinguished)[0]


def _fiber_symbol(pi: FactorMap, symbol) -> str:
    if symbol is not None:
        return str(symbol)
    others = pi.fiber_codomain_symbols
    if len(others) != 1:
        raise ValueError("a fiber symbol must be named when the codomain has 3 or more symbols")
    return others[0]


def b_matrix(pi: FactorMap) -> TransitionMatrix:
    """Transitions among all domain symbols outside the distinguished fiber."""
    return pi.domain.essential_matrix.submatrix(fiber_indices(pi, pi.fiber_codomain_symbols))


def bprime_matrix(pi: FactorMap) -> TransitionMatrix:
    idx = [pi.codomain.index[y] for y in pi.fiber_codomain_symbols]
    return pi.codomain.matrix.submatrix(idx)


def _return_restriction(pi: FactorMap, symbol: str):
    """Fiber block over ``symbol`` cut down to symbols on some 1 -> ... -> 1 path."""
    idx = list(fiber_indices(pi, [symbol]))
    a = pi.domain.essential_matrix
    one = _one(pi)
    sub = a.submatrix(idx)
    v1 = [k for k, c in enumerate(idx) if a[one, c]]
    v2 = [k for k, d in enumerate(idx) if a[d, one]]
    keep = sorted(_reach_closure(sub, v1) & _coreach_closure(sub, v2))
    return sub.submatrix(keep) if keep else None, [idx[k] for k in keep]


def _return_counts(pi: FactorMap, symbol: str, horizon: int) -> list:
    """Convention-adjusted counts c(1 s^n 1) for n = 1..horizon."""
    rw = ReturnWords(pi)
    t = pi.codomain.index[symbol]
    v_one = rw.start()
    v_free = None
    out = []
    for n in range(1, horizon + 1):
        v_one = rw.push(v_one, t)
        v_free = rw.start_at(t) if v_free is None else rw.push(v_free, t)
        c = rw.close(v_one)
        if not c and rw.three_or_more:
            c = rw.close(v_free)
        out.append(c or 1)
    return out


# -- setting ------------------------------------------------------------------


def check_setting(pi: FactorMap) -> SettingResult:
    """Decide between the two-symbol and the many-symbol setting.

    Examples
    --------
    A distinguished symbol with a two-point fiber fails the singleton test.

    >>> from sftcarpet.symdyn import validate_sft
    >>> x = validate_sft([[1, 1, 1], [1, 1, 1], [1, 1, 1]])
    >>> check_setting(FactorMap.onto_image(x, {"1": "1", "2": "1", "3": "2"}, distinguished="1")).setting
    'neither'
    """
    diag = []
    k = len(pi.codomain.alphabet)
    one = pi.distinguished
    tests = [
        ("codomain has at least two symbols", k >= 2),
        ("singleton clump", one is not None and len(pi.fiber(one)) == 1),
    ]
    ess = pi.domain.essential
    x_mix = bool(ess) and is_primitive(pi.domain.essential_matrix.submatrix(ess))
    tests.append(("domain mixing", x_mix))
    tests.append(("domain positive entropy", topological_entropy(pi.domain) > 0))
    tests.append(("codomain positive entropy", matrix_entropy(pi.codomain.matrix) > 0))
    if k >= 3:
        b = b_matrix(pi) if tests[1][1] else None
        tests.append(("fiber matrix has a cycle", b is not None and spectral_radius(b) > 0))
    for name, ok in tests:
        diag.append(f"{name}: {'yes' if ok else 'no'}")
        if not ok:
            return SettingResult("neither", tuple(diag), f"{name} fails")
    return SettingResult("A" if k == 2 else "B", tuple(diag))


# -- ratio and entropy ----------------------------------------------------------


def ratio_limit(pi: FactorMap, symbol=None, horizon: int = RATIO_HORIZON) -> RatioLimit:
    """Limit of c(1 s^{n-1} 1) / c(1 s^n 1) for a fiber symbol s.

    Exact when every dominant class of the return restriction is primitive
    (the counts then behave like C n^d lam^n); otherwise the exact integer
    sequence is inspected up to ``horizon``.
    """
    s = _fiber_symbol(pi, symbol)
    sub, _ = _return_restriction(pi, s)
    if sub is None or not communicating_classes(sub).classes:
        return RatioLimit(1.0, True, "perron-exact", 0, 0.0)
    cs = communicating_classes(sub)
    radii = [class_spectral_radius(sub.submatrix(c)) for c in cs.classes]
    lam = max(radii)
    dominant = [c for c, r in zip(cs.classes, radii) if abs(r - lam) <= 1e-12 * lam]
    if all(is_primitive(sub.submatrix(c)) for c in dominant):
        return RatioLimit(1.0 / lam, True, "perron-exact", 0, lam)
    counts = _return_counts(pi, s, horizon)
    ratios = [counts[i - 1] / counts[i] for i in range(1, horizon)]
    tail = ratios[-(CAUCHY_TAIL + 1):]
    if all(abs(a - b) < CAUCHY_TOL for a, b in zip(tail, tail[1:])):
        return RatioLimit(ratios[-1], True, "numeric-cauchy", horizon, lam)
    return RatioLimit(None, False, "numeric-cauchy", horizon, lam)


def entropy_condition(pi: FactorMap, symbol=None, depth: int = 64) -> EntropyCondition:
    """Growth rate of the fiber word counts against the fiber entropy.

    The limit of (1/n) log |pi^{-1}[s^n]| is the largest class spectral radius
    of the fiber block; the exact count at ``depth`` is kept as evidence.
    """
    if symbol is None and len(pi.fiber_codomain_symbols) != 1:
        b = b_matrix(pi)
    else:
        b = pi.domain.essential_matrix.submatrix(fiber_indices(pi, [_fiber_symbol(pi, symbol)]))
    h = matrix_entropy(b)
    ess = essential_symbols(b)
    if not ess:
        return EntropyCondition(0.0, h == 0.0, 0.0, depth, "nilpotent")
    core = b.submatrix(ess)
    from .symdyn import Sft

    n_words = count_words(Sft(tuple(str(i) for i in range(core.size)), core), depth)
    estimate = math.log(n_words) / depth
    method = "perron-exact" if is_irreducible(core) else "class-perron"
    limit = math.log(spectral_radius(core)) if spectral_radius(core) > 1 else 0.0
    return EntropyCondition(limit, abs(limit - h) <= ENTROPY_TOL, estimate, depth, method)


# -- structural conditions --------------------------------------------------------


def _two_sided_check(m: TransitionMatrix, labels) -> tuple:
    """Every symbol with an infinite forward path is reachable from a cycle."""
    cs = communicating_classes(m)
    cyc = [i for c in cs.classes for i in c]
    if not cyc:
        return False, f"no cycle: symbol {labels[0]} has no two-sided extension"
    fwd = forward_infinite_symbols(m)
    back = _reach_closure(m, cyc)
    bad = sorted(fwd - back)
    if bad:
        return False, f"symbol {labels[bad[0]]} has no left-infinite extension"
    return True, None


def check_condition_C(pi: FactorMap) -> ConditionResult:
    """Structural condition on the fiber over the non-distinguished symbol."""
    idx = fiber_indices(pi, pi.fiber_codomain_symbols)
    labels = [pi.domain.alphabet[i] for i in idx]
    b = pi.domain.essential_matrix.submatrix(idx)
    p1, w1 = _two_sided_check(b, labels)
    fwd = forward_infinite_symbols(b)
    to_one = _coreach_closure(pi.domain.essential_matrix, [_one(pi)])
    bad = [k for k in sorted(fwd) if idx[k] not in to_one]
    p2 = not bad
    w2 = None if p2 else f"symbol {labels[bad[0]]} never reaches the distinguished symbol"
    return ConditionResult((p1, p2), (w1, w2))


def _s_symbols(pi: FactorMap) -> list:
    ym = pi.codomain.matrix
    one = pi.codomain.index[pi.distinguished]
    return [pi.codomain.index[y] for y in pi.fiber_codomain_symbols if ym[pi.codomain.index[y], one]]


def fiber_ratio_table(pi: FactorMap, depth: int) -> dict:
    """Exact ratios c(1 w[1:] 1)/c(1 w 1) for fiber words w with w1 allowed, by length."""
    rw = ReturnWords(pi)
    ends = set(_s_symbols(pi))
    adjusted = {(): 1}
    table: dict = {}
    for word, _raw, adj in rw.fiber_words(depth, WORD_LIMIT):
        adjusted[word] = adj
        if word[-1] in ends:
            num = adjusted[word[1:]] if len(word) > 1 else 1
            table.setdefault(len(word), []).append((word, Fraction(num, adj)))
    return table


def check_condition_Cprime(pi: FactorMap, depth: int = CPRIME_DEPTH) -> ConditionResult:
    """Structural and arithmetic conditions for the many-symbol setting.

    Part (2) is certified only up to ``depth``; the defect records the largest
    log-spread of ratios within one length.
    """
    bp = bprime_matrix(pi)
    fiber = pi.fiber_codomain_symbols
    p1, w1 = _two_sided_check(bp, list(fiber))

    table = fiber_ratio_table(pi, depth)
    p2, w2, defect = True, None, 0.0
    for n in sorted(table):
        vals = table[n]
        lo = min(vals, key=lambda t: t[1])
        hi = max(vals, key=lambda t: t[1])
        if lo[1] != hi[1]:
            spread = math.log(hi[1] / lo[1])
            defect = max(defect, spread)
            if p2:
                p2 = False
                name = lambda w: "".join(pi.codomain.alphabet[t] for t in w)
                w2 = f"length {n}: ratio {lo[1]} at {name(lo[0])} but {hi[1]} at {name(hi[0])}"

    pos = {pi.codomain.index[y]: k for k, y in enumerate(fiber)}
    s_set = [pos[t] for t in _s_symbols(pi)]
    k = len(fiber)
    mat = [[bool(v) for v in row] for row in bp.entries]
    p3, w3, witness_k = False, "no common K up to the pigeonhole bound", None
    power = mat
    for kk in range(1, k * k + 1):
        power = [[any(power[i][l] and mat[l][j] for l in range(k)) for j in range(k)] for i in range(k)]
        if all(any(power[a][s] for s in s_set) for a in range(k)):
            p3, w3, witness_k = True, None, kk
            break
    return ConditionResult(
        (p1, p2, p3),
        (w1, w2, w3),
        {"depth": depth, "constancy_defect": defect, "K": witness_k},
    )


def fiber_hypothesis(pi: FactorMap, target: float, depth: int = FIBER_DEPTH) -> FiberHypothesis:
    """Uniform convergence of the fiber ratios to ``target``.

    With D(n) the largest |log ratio - log target| over fiber words of length n
    that continue forever in the fiber and may be followed by the
    distinguished symbol, the hypothesis is accepted when D decays:
    D(2N) <= 0.75 D(N) or D(2N) < 1e-6.
    """
    bp = bprime_matrix(pi)
    fiber = pi.fiber_codomain_symbols
    pos = {pi.codomain.index[y]: k for k, y in enumerate(fiber)}
    infinite = forward_infinite_symbols(bp)
    try:
        table = fiber_ratio_table(pi, 2 * depth)
    except OverflowError:
        return FiberHypothesis(False, target, (), ("word enumeration limit reached",))
    log_t = math.log(target)

    def defect(n):
        best, arg = 0.0, None
        for word, r in table.get(n, []):
            if pos[word[-1]] not in infinite:
                continue
            d = abs(math.log(r) - log_t)
            if d >= best:
                best, arg = d, word
        return best, arg

    d1, _ = defect(depth)
    d2, arg = defect(2 * depth)
    holds = d2 < 1e-6 or d2 <= 0.75 * d1
    witness = None
    if not holds and arg is not None:
        witness = tuple(pi.codomain.alphabet[t] for t in arg)
    return FiberHypothesis(holds, target, (d1, d2), witness)


# -- Gibbs and tightness ------------------------------------------------------------


def gibbs_bounded(pi: FactorMap, symbol=None, horizon: int = RATIO_HORIZON) -> GibbsResult:
    """Decide from the graph whether the return counts c(1 s^n 1) stay bounded."""
    s = _fiber_symbol(pi, symbol)
    sub, orig = _return_restriction(pi, s)
    labels = [pi.domain.alphabet[i] for i in orig]
    if sub is not None:
        cs = communicating_classes(sub)
        for c in cs.classes:
            cls = sub.submatrix(c)
            if any(len(succ) != 1 for succ in cls.successors):
                return GibbsResult(False, f"class {{{','.join(labels[i] for i in c)}}} carries two cycles")
        if cs.edges:
            a, b = min(cs.edges)
            ca = ",".join(labels[i] for i in cs.classes[a])
            cb = ",".join(labels[i] for i in cs.classes[b])
            return GibbsResult(False, f"a return path passes through cycles {{{ca}}} and {{{cb}}}")
    bound = max(_return_counts(pi, s, horizon))
    return GibbsResult(True, f"counts bounded by {bound} (max over n <= {horizon})", bound)


def tightness(pi: FactorMap, a: float, symbol=None, horizon: int = RATIO_HORIZON) -> TightnessResult:
    """Empirical bounds K1 <= a^n / c(1 s^n 1) <= K2 with a Perron-theory flag.

    The flag is raised when the dominant radius of the return restriction is
    ``a``, every class attaining it is primitive and no path joins two of them.
    """
    if not a > 1:
        raise ValueError("tightness needs a > 1")
    s = _fiber_symbol(pi, symbol)
    counts = _return_counts(pi, s, horizon)
    logs = [n * math.log(a) - math.log(c) for n, c in enumerate(counts, start=1)]
    sub, _ = _return_restriction(pi, s)
    guarantee = False
    if sub is not None:
        cs = communicating_classes(sub)
        radii = [class_spectral_radius(sub.submatrix(c)) for c in cs.classes]
        top = [k for k, r in enumerate(radii) if abs(r - a) <= 1e-9 * a]
        guarantee = (
            bool(radii)
            and abs(max(radii) - a) <= 1e-9 * a
            and all(is_primitive(sub.submatrix(cs.classes[k])) for k in top)
            and not any((p, q) in cs.edges for p in top for q in top if p != q)
        )
    quarter = logs[-(horizon // 4):]
    drift = quarter[-1] - quarter[0]
    tight = guarantee or abs(drift) < 1e-6
    return TightnessResult(math.exp(min(logs)), math.exp(max(logs)), guarantee, tight, horizon)


# -- aggregate ----------------------------------------------------------------------


def _close(x, y, tol=1e-9):
    return x is not None and y is not None and abs(x - y) <= tol * max(1.0, abs(y))


def classify(pi: FactorMap, cprime_depth: int = CPRIME_DEPTH) -> HypothesisReport:
    """Run every checker and list the theorem cases whose hypotheses hold.

    A case is listed only when its whole hypothesis list, including the
    uniqueness part, is certified by the checks recorded in ``checks``.
    """
    st = check_setting(pi)
    checks: dict = {t: (False, "setting") for t in THEOREMS}
    notes = []
    singleton = pi.distinguished is not None and len(pi.fiber(pi.distinguished)) == 1
    if not singleton or len(pi.codomain.alphabet) < 2:
        why = ("no singleton clump" if not singleton else "codomain has one symbol")
        return HypothesisReport(
            st.setting, st.diagnostics, float("nan"), False, None, {}, None, None, None, None,
            None, {}, checks, (), (f"{why}; no compensation construction applies",),
        )
    b = b_matrix(pi)
    hb = matrix_entropy(b)
    nilpotent = spectral_radius(b) == 0.0
    ratio = entropy = cond_c = cond_cp = fib = gibbs = None
    fiber_ratios: dict = {}
    tight: dict = {}

    if st.setting == "A":
        ratio = ratio_limit(pi)
        entropy = entropy_condition(pi)
        cond_c = check_condition_C(pi)
        gibbs = gibbs_bounded(pi)
        checks["3.1(1)"] = (nilpotent, "fiber matrix nilpotent" if nilpotent else "fiber matrix has a cycle")
        ok31 = (not nilpotent) and hb == 0.0 and _close(ratio.value, 1.0) and entropy.matches
        checks["3.1(2)"] = (ok31, _why(
            [("fiber entropy zero", hb == 0.0), ("ratio limit 1", _close(ratio.value, 1.0)),
             ("entropy limit", entropy.matches), ("fiber matrix has a cycle", not nilpotent)]))
        a = math.exp(hb)
        ok41 = hb > 0 and _close(ratio.value, 1.0 / a) and entropy.matches
        checks["4.1"] = (ok41, _why(
            [("fiber entropy positive", hb > 0), ("ratio limit 1/a", _close(ratio.value, 1.0 / a)),
             ("entropy limit", entropy.matches)]))
        irr = is_irreducible(b)
        checks["4.1-irreducible"] = (ok41 and irr, _why([("4.1", ok41), ("fiber matrix irreducible", irr)]))
        if hb > 0:
            tight[pi.fiber_codomain_symbols[0]] = tightness(pi, a)
    elif st.setting == "B":
        cond_cp = check_condition_Cprime(pi, cprime_depth)
        target = 1.0 if hb == 0.0 else 1.0 / math.exp(hb)
        fib = fiber_hypothesis(pi, target)
        ok61 = hb == 0.0 and fib.holds and cond_cp.holds
        checks["6.1"] = (ok61, _why(
            [("fiber entropy zero", hb == 0.0), ("hypothesis I", fib.holds and hb == 0.0),
             ("condition C'", cond_cp.holds)]))
        ok62 = hb > 0 and fib.holds and cond_cp.holds
        checks["6.2"] = (ok62, _why(
            [("fiber entropy positive", hb > 0), ("hypothesis II", fib.holds and hb > 0),
             ("condition C'", cond_cp.holds)]))
        for y in pi.fiber_codomain_symbols:
            fiber_ratios[y] = ratio_limit(pi, y)
        checks["6.4"] = _check_64(pi, fiber_ratios, tight)
        checks["6.5"] = _check_65(pi, b)
        if pi.distinguished is not None and "6.1" not in [t for t, (ok, _) in checks.items() if ok]:
            if fib.holds and hb == 0.0 and not cond_cp.holds:
                notes.append("hypothesis I holds but condition C' fails; uniqueness is not certified")
        if hb == 0.0 and not fib.holds:
            notes.append(
                "hypothesis I fails; a hand-repaired compensation function is outside automatic scope"
            )
    applicable = tuple(t for t in THEOREMS if checks[t][0])
    if not applicable:
        notes.append("no covered theorem applies: " + "; ".join(
            f"{t}: {checks[t][1]}" for t in THEOREMS))
    return HypothesisReport(
        st.setting, st.diagnostics, hb, nilpotent, ratio, fiber_ratios, entropy, cond_c, cond_cp,
        fib, gibbs, tight, checks, applicable, tuple(notes),
    )


def _why(items) -> str:
    bad = [name for name, ok in items if not ok]
    return "all hypotheses certified" if not bad else "fails: " + ", ".join(bad)


def _check_64(pi: FactorMap, fiber_ratios: dict, tight: dict) -> tuple:
    fiber = pi.fiber_codomain_symbols
    if len(fiber) != 2:
        return False, "fails: codomain must have exactly three symbols"
    ym = pi.codomain.matrix
    i2, i3 = (pi.codomain.index[y] for y in fiber)
    if ym[i2, i3] or ym[i3, i2]:
        return False, "fails: cross words between the two fiber symbols are allowed"
    for y in fiber:
        block = pi.domain.essential_matrix.submatrix(fiber_indices(pi, [y]))
        if spectral_radius(block) == 0.0:
            return False, f"fails: block over {y} is nilpotent"
        b_i = spectral_radius(block)
        r = fiber_ratios[y]
        if not _close(r.value, 1.0 / b_i):
            return False, f"fails: ratio limit over {y} differs from 1/b"
        if not b_i > 1:
            return False, f"fails: b = 1 over {y}, Bowen bound not available"
        t = tightness(pi, b_i, y)
        tight[y] = t
        if not t.guarantee:
            return False, f"fails: tightness over {y} not guaranteed"
    return True, "all hypotheses certified"


def _check_65(pi: FactorMap, b: TransitionMatrix) -> tuple:
    fiber = pi.fiber_codomain_symbols
    if len(fiber) != 2:
        return False, "fails: codomain must have exactly three symbols"
    if is_irreducible(b):
        return False, "fails: fiber matrix is irreducible"
    a = pi.domain.essential_matrix
    for y in fiber:
        idx = fiber_indices(pi, [y])
        block = a.submatrix(idx)
        zero_block = len(idx) == 1 and block[0, 0] == 0
        if zero_block:
            continue
        if not is_irreducible(block):
            return False, f"fails: block over {y} is not one irreducible component"
        if not is_primitive(block):
            return False, f"fails: block over {y} is not primitive"
    return True, "all hypotheses certified"
