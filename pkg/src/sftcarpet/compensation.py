"""Saturated compensation functions as evaluable cylinder potentials.

A potential ``G`` on the codomain depends on a point only through its prefix
up to and including the first distinguished symbol ``1``.  On the cylinder
``[w 1]`` (``w`` free of ``1``) it takes the value

    log c(1 w[1:] 1) - log c(1 w 1),

where ``c`` counts preimages under the empty-fiber conventions and the empty
return word counts 1.  It vanishes on ``[1]``.  Points that never reach ``1``
carry case-specific tail values.  Summing ``G`` along a return block ``1 w 1``
telescopes to ``-log c(1 w 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .errors import NoApplicableTheorem, NotAWord
from .hypocheck import HypothesisReport, bprime_matrix, classify
from .symdyn import (
    FactorMap,
    ReturnWords,
    TransitionMatrix,
    _step,
    fiber_indices,
    forward_infinite_symbols,
    preimage_vector,
    spectral_radius,
)

CASES = ("thm31", "thm41", "thm61", "thm62", "thm64", "thm65", "locally-constant")
_CASE_OF = {
    "3.1(1)": "locally-constant",
    "3.1(2)": "thm31",
    "4.1": "thm41",
    "6.1": "thm61",
    "6.2": "thm62",
    "6.4": "thm64",
    "6.5": "thm65",
}
MIXED_M = (64, 96)
MIXED_TOL = 1e-8
CONTINUATION_LIMIT = 200000


@dataclass(frozen=True)
class GValue:
    """Result of evaluating G on a finite prefix.

    ``value`` is set when the prefix decides the cylinder; otherwise
    ``lo``/``hi`` bracket every value on the cylinder that was explored.
    """

    value: float | None
    lo: float
    hi: float
    resolved: bool
    flag: str


@dataclass(frozen=True)
class CylinderPotential:
    """Compensation function G on the codomain of ``pi``.

    Attributes
    ----------
    case : construction used, one of ``CASES``
    tail_values : tail values keyed by a readable point descriptor
    grid_partition : descriptor of the grid partition, when G is a grid function
    """

    case: str
    pi: FactorMap = field(repr=False, compare=False)
    tail_values: dict = field(default_factory=dict)
    grid_partition: dict | None = None
    tail_constant: float | None = None
    fiber_tails: dict = field(default_factory=dict)
    mixed: tuple | None = None
    report: HypothesisReport | None = field(default=None, repr=False, compare=False)

    # -- exact ingredients ---------------------------------------------------

    @property
    def returns(self) -> ReturnWords:
        return self.pi.memo("return-words", lambda: ReturnWords(self.pi))

    def count(self, word: Sequence[int]) -> int:
        """Convention-adjusted c(1 w 1) for a tuple of codomain indices."""
        word = tuple(word)
        return self.pi.memo(("adj", word), lambda: self.returns.adjusted(word))

    def ratio(self, word: Sequence[int]) -> Fraction:
        """exp(G) on the resolved cylinder [w 1] as an exact fraction."""
        word = tuple(word)
        return Fraction(self.count(word[1:]), self.count(word))

    def log_value(self, word: Sequence[int]) -> float:
        word = tuple(word)
        return math.log(self.count(word[1:])) - math.log(self.count(word))

    # -- tails ---------------------------------------------------------------

    def mixed_tail(self, n: int) -> float:
        """Limit value at u^n v^inf for the reducible case (u -> v the cross edge)."""
        if self.mixed is None:
            raise ValueError("potential has no mixed tails")
        return self.pi.memo(("mixed", n), lambda: _mixed_limit(self, n)[0])

    def tail_at(self, head: Sequence[int], sym: int) -> float:
        """Value of G at the fiber point head . sym^inf (codomain indices)."""
        head = list(head)
        while head and head[-1] == sym:
            head.pop()
        if self.tail_constant is not None:
            return self.tail_constant
        if self.case == "thm64":
            if head:
                raise ValueError("not a point of the fiber shift")
            return self.fiber_tails[sym]
        if not head:
            return self.fiber_tails[sym]
        u, v = self.mixed
        if sym == v and all(t == u for t in head):
            return self.mixed_tail(len(head))
        raise ValueError("not a point of the fiber shift")


def _mixed_limit(G: CylinderPotential, n: int) -> tuple:
    u, v = G.mixed
    vals = []
    for m in MIXED_M:
        num = G.returns.raw((u,) * (n - 1) + (v,) * m) if n > 1 else G.returns.raw((v,) * m)
        den = G.returns.raw((u,) * n + (v,) * m)
        num = num or G.count((u,) * (n - 1) + (v,) * m)
        den = den or G.count((u,) * n + (v,) * m)
        vals.append(math.log(num) - math.log(den))
    if abs(vals[0] - vals[1]) > MIXED_TOL:
        raise ArithmeticError(f"tail limit at u^{n} v^inf not settled: {vals}")
    return vals[1], abs(vals[0] - vals[1])


def _symbols(pi: FactorMap, prefix) -> tuple:
    idx = pi.codomain.indices(prefix)
    return tuple(idx)


def build_G(pi: FactorMap, report: HypothesisReport | None = None) -> CylinderPotential:
    """Construct the compensation function for the first applicable case.

    Raises
    ------
    NoApplicableTheorem
        If the report certifies no case; the report is attached.
    """
    if report is None:
        report = classify(pi)
    chosen = next((t for t in report.applicable_theorems if t in _CASE_OF), None)
    if chosen is None:
        raise NoApplicableTheorem("no covered theorem applies", report=report)
    case = _CASE_OF[chosen]
    cod = pi.codomain
    fiber = [cod.index[y] for y in pi.fiber_codomain_symbols]
    name = lambda t: cod.alphabet[t]
    tails: dict = {}
    grid = None
    const = None
    fiber_tails: dict = {}
    mixed = None
    if case in ("thm31", "thm61", "locally-constant"):
        const = 0.0
        tails["fiber shift"] = 0.0
        grid = {"M0": "[1]", "Mn": "union of [w 1] with w of length n free of 1", "rho": "fiber shift"}
    elif case in ("thm41", "thm62"):
        const = -report.b_entropy
        tails["fiber shift"] = const
        grid = {"M0": "[1]", "Mn": "union of [w 1] with w of length n free of 1", "rho": "fiber shift",
                "shift": "G + log a"}
    else:
        for t in fiber:
            block = pi.domain.essential_matrix.submatrix(fiber_indices(pi, [name(t)]))
            lam = spectral_radius(block)
            if lam > 0:
                fiber_tails[t] = -math.log(lam)
                tails[f"{name(t)}^inf"] = fiber_tails[t]
        if case == "thm65":
            ym = cod.matrix
            a, b = fiber
            if ym[a, b]:
                mixed = (a, b)
            elif ym[b, a]:
                mixed = (b, a)
    G = CylinderPotential(case, pi, tails, grid, const, fiber_tails, mixed, report)
    if mixed is not None:
        u, v = mixed
        for n in range(1, 9):
            G.tail_values[f"{name(u)}^{n} {name(v)}^inf"] = G.mixed_tail(n)
    return G


# -- evaluation ----------------------------------------------------------------


def _continuations(G: CylinderPotential, head: tuple, depth: int):
    """Values of G on resolved cylinders [head u 1] with |u| <= depth."""
    pi = G.pi
    ym = pi.codomain.matrix
    one = G.returns.one_y
    fiber = [t for t in range(ym.size) if t != one]
    out = []
    stack = [head]
    seen = 0
    while stack:
        word = stack.pop()
        seen += 1
        if seen > CONTINUATION_LIMIT:
            break
        if ym[word[-1], one]:
            out.append(G.log_value(word))
        if len(word) - len(head) < depth:
            stack.extend(word + (t,) for t in fiber if ym[word[-1], t])
    return out


def _tail_points(G: CylinderPotential, head: tuple, depth: int):
    """Tail values at fiber points of the cylinder [head]."""
    pi = G.pi
    bp = bprime_matrix(pi)
    fiber = [pi.codomain.index[y] for y in pi.fiber_codomain_symbols]
    pos = {t: k for k, t in enumerate(fiber)}
    if pos[head[-1]] not in forward_infinite_symbols(bp):
        return []
    if G.tail_constant is not None:
        return [G.tail_constant]
    vals = []
    for t in fiber:
        if all(s == t for s in head) and t in G.fiber_tails:
            vals.append(G.fiber_tails[t])
    if G.mixed is not None:
        u, v = G.mixed
        k = len(head) - len([s for s in head if s == v])
        if all(s == u for s in head[:k]) and all(s == v for s in head[k:]):
            if k < len(head):
                vals.append(G.mixed_tail(k) if k else G.fiber_tails.get(v, 0.0))
            else:
                vals.extend(G.mixed_tail(n) for n in range(max(k, 1), k + depth + 1))
    return vals


def evaluate_G(G: CylinderPotential, prefix: Sequence[str], depth: int = 40) -> GValue:
    """Evaluate G on the cylinder of a finite codomain prefix.

    Unresolved prefixes (no ``1`` yet) yield the hull of the values on all
    resolved sub-cylinders up to ``depth`` further symbols and of the tail
    values of fiber points in the cylinder.
    """
    word = _symbols(G.pi, prefix)
    if not word:
        raise NotAWord("empty prefix")
    one = G.returns.one_y
    if word[0] == one:
        return GValue(0.0, 0.0, 0.0, True, "resolved")
    if one in word:
        k = word.index(one)
        v = G.log_value(word[:k])
        return GValue(v, v, v, True, "resolved")
    vals = _continuations(G, word, depth) + _tail_points(G, word, depth)
    if not vals:
        raise NotAWord("prefix has no allowed continuation")
    return GValue(None, min(vals), max(vals), False, "undetermined at this depth")


def telescoping_product(G: CylinderPotential, u: Sequence[str]) -> tuple:
    """exp of the G-sum over the block 1 u 1, directly and in closed form.

    Both are exact fractions, so agreement can be tested without rounding.
    """
    word = _symbols(G.pi, u)
    one = G.returns.one_y
    if one in word:
        raise NotAWord("return word must not contain the distinguished symbol")
    direct = Fraction(1)
    for i in range(len(word)):
        direct *= G.ratio(word[i:])
    closed = Fraction(1, G.count(word))
    return direct, closed


def telescoping_sum(G: CylinderPotential, u: Sequence[str]) -> float:
    """Sum of G over the positions of the block ``1 u 1``, equal to -log c(1 u 1)."""
    direct, closed = telescoping_product(G, u)
    if direct != closed:
        raise ArithmeticError(f"telescoping mismatch: {direct} != {closed}")
    return -math.log(closed.denominator) + math.log(closed.numerator)


# -- periodic verification --------------------------------------------------------


@dataclass(frozen=True)
class PeriodicReport:
    checked: int
    skipped: int
    failures: tuple
    fixed_point_defects: dict
    n_fixed: int

    def ok(self, tol: float = 1e-3) -> bool:
        return not self.failures and all(abs(d) < tol for d in self.fixed_point_defects.values())


def _cyclic_words(ym: TransitionMatrix, p: int):
    succ = ym.successors

    def extend(word):
        if len(word) == p:
            if ym[word[-1], word[0]]:
                yield tuple(word)
            return
        for t in succ[word[-1]]:
            yield from extend(word + [t])

    for s in range(ym.size):
        yield from extend([s])


def verify_compensation_periodic(G: CylinderPotential, pi: FactorMap | None = None,
                                 max_period: int = 10, repeats: int = 3,
                                 n_fixed: int = 500) -> PeriodicReport:
    """Check the compensation identity on periodic codomain points.

    For every periodic point whose period block contains ``1`` the quantity
    |D_n(y)| e^{S_n G(y)} must be the same exact fraction for n = p, 2p, ...,
    ``repeats`` p.  Points with an empty preimage are skipped.  For each fiber
    fixed point i^inf the normalized defect (S_n G + log |D_n|)/n at n_fixed
    is recorded.
    """
    pi = pi or G.pi
    if max_period > 14:
        raise ValueError("max_period must be <= 14")
    ym = pi.codomain.matrix
    one = G.returns.one_y
    xm = pi.domain.essential_matrix
    img = pi.image_index
    ess = set(pi.domain.essential)
    masks = [[img[j] == t and j in ess for j in range(xm.size)] for t in range(ym.size)]
    checked = skipped = 0
    failures = []
    for p in range(1, max_period + 1):
        for b in _cyclic_words(ym, p):
            if one not in b:
                continue
            ratios = Fraction(1)
            for i in range(p):
                if b[i] == one:
                    continue
                j = i
                run = []
                while b[j % p] != one:
                    run.append(b[j % p])
                    j += 1
                ratios *= G.ratio(tuple(run))
            vec = [1 if masks[b[0]][j] else 0 for j in range(xm.size)]
            for t in b[1:]:
                vec = _step(xm.successors, vec, masks[t])
            values = []
            for k in range(1, repeats + 1):
                if k > 1:
                    for t in b:
                        vec = _step(xm.successors, vec, masks[t])
                values.append(sum(vec) * ratios ** k)
            if values[-1] == 0:
                skipped += 1
                continue
            checked += 1
            if len(set(values)) != 1:
                failures.append(("".join(pi.codomain.alphabet[t] for t in b), [str(v) for v in values]))
    defects = {}
    for t in range(ym.size):
        if t == one or not ym[t, t]:
            continue
        try:
            tail = G.tail_at((), t)
        except (KeyError, ValueError):
            continue
        d = sum(preimage_vector(pi, [pi.codomain.alphabet[t]] * n_fixed))
        if d == 0:
            continue
        defects[pi.codomain.alphabet[t]] = (n_fixed * tail + math.log(d)) / n_fixed
    return PeriodicReport(checked, skipped, tuple(failures), defects, n_fixed)


# -- Bowen variation -------------------------------------------------------------


def _tail_candidates(G: CylinderPotential, depth: int):
    """Fiber points head . sym^inf that may follow a trailing run, as (head, sym)."""
    fiber = [G.pi.codomain.index[y] for y in G.pi.fiber_codomain_symbols]
    cands = [((), t) for t in fiber]
    if G.mixed is not None:
        u, v = G.mixed
        cands += [((u,) * c, v) for c in range(1, depth + 1)]
    return cands


def trailing_bounds(G: CylinderPotential, n: int, depth: int | None = None) -> tuple:
    """Range of the unresolved part of Birkhoff sums over trailing fiber runs.

    Inside a domain cylinder only the trailing fiber run ``s`` of the image
    is unresolved.  Its contribution is T(s, u) = log c(1 u 1) - log c(1 s u 1)
    for the continuation ``u`` up to the next ``1``, or a sum of tail values
    when the point never returns.  Continuations are explored to ``depth``
    (default 3n + 30) and must be feasible from the cylinder's last symbol.

    Returns
    -------
    table : dict
        ``(s, e) -> (lo, hi)`` for every run ``s`` of length 1..n (codomain
        indices) and every domain symbol ``e`` that can end a word over ``s``.
    defect : float
        Largest distance between G on a continuation cylinder of length
        ``depth`` and the tail value it approaches; a proxy for how far
        unexplored continuations may move T per run symbol.
    """
    pi = G.pi
    depth = 3 * n + 30 if depth is None else depth
    rw = G.returns
    ym = pi.codomain.matrix
    one = rw.one_y
    xm = pi.domain.essential_matrix
    size = xm.size
    fiber = [t for t in range(ym.size) if t != one]
    img = rw.image
    ess = set(pi.domain.essential)
    mask = [[img[j] == t and j in ess for j in range(size)] for t in range(ym.size)]
    pred = xm.predecessors

    # backward vectors: ways[u][x] = number of domain paths from state x that
    # read u and then step into the distinguished symbol
    base = [1 if xm[x, rw.one_x] else 0 for x in range(size)]
    conts = [((), base)]
    frontier = [((), base)]
    for _ in range(depth):
        nxt = []
        for u, vec in frontier:
            for t in fiber:
                if u and not ym[t, u[0]]:
                    continue
                if not u and not ym[t, one]:
                    continue
                over = [vec[x] if mask[t][x] else 0 for x in range(size)]
                back = [0] * size
                for x in range(size):
                    if over[x]:
                        for w in pred[x]:
                            back[w] += over[x]
                if any(back):
                    nxt.append(((t,) + u, back))
        conts.extend(nxt)
        frontier = nxt
        if len(conts) > CONTINUATION_LIMIT:
            break

    defect = 0.0
    for u, _ in frontier:
        try:
            tail = G.tail_at(u, u[-1])
        except ValueError:
            continue
        defect = max(defect, abs(math.log(G.count(u[1:])) - math.log(G.count(u)) - tail))

    tails = [] if G.tail_constant is not None else _tail_candidates(G, depth)
    b_idx = fiber_indices(pi, pi.fiber_codomain_symbols)
    inf_b = {b_idx[k] for k in forward_infinite_symbols(xm.submatrix(b_idx))}
    inf_sets = {}
    for t in fiber:
        idx = fiber_indices(pi, [pi.codomain.alphabet[t]])
        sub = xm.submatrix(idx)
        inf_sets[t] = {idx[k] for k in forward_infinite_symbols(sub)}

    def feasible_tail(e, head, sym):
        vec = [0] * size
        vec[e] = 1
        for t in head + (sym,):
            vec = _step(xm.successors, vec, mask[t])
        return any(vec[x] for x in inf_sets[sym])

    table = {}
    # forward vectors over trailing runs s (any start state)
    runs = [((t,), [1 if mask[t][x] else 0 for x in range(size)]) for t in fiber]
    while runs:
        nxt_runs = []
        for s, fvec in runs:
            if not any(fvec):
                continue
            vals_by_e: dict = {e: [] for e in range(size) if fvec[e]}
            for u, bvec in conts:
                if u and not ym[s[-1], u[0]]:
                    continue
                if not u and not ym[s[-1], one]:
                    continue
                c_su = G.count(s + u)
                t_val = math.log(G.count(u)) - math.log(c_su)
                for e in vals_by_e:
                    if bvec[e]:
                        vals_by_e[e].append(t_val)
            if G.tail_constant is not None:
                for e in vals_by_e:
                    if e in inf_b:
                        vals_by_e[e].append(len(s) * G.tail_constant)
            for head, sym in tails:
                if not ym[s[-1], (head + (sym,))[0]]:
                    continue
                try:
                    t_val = sum(G.tail_at(s[j:] + head, sym) for j in range(len(s)))
                except ValueError:
                    continue
                for e in vals_by_e:
                    if feasible_tail(e, head, sym):
                        vals_by_e[e].append(t_val)
            for e, vals in vals_by_e.items():
                if vals:
                    table[s, e] = (min(vals), max(vals))
            if len(s) < n:
                for t in fiber:
                    if ym[s[-1], t]:
                        nxt_runs.append((s + (t,), _step(xm.successors, fvec, mask[t])))
        runs = nxt_runs
    return table, defect


def bowen_variation(G: CylinderPotential, pi: FactorMap | None = None, n: int = 10,
                    tau: float = 1.0, depth: int | None = None) -> float:
    """var_n of the Birkhoff sum S_n(tau G o pi) over domain cylinders of length n.

    The variation is the largest spread of the unresolved trailing-run term
    over continuations feasible from the cylinder's last symbol (see
    ``trailing_bounds``).
    """
    if pi is not None and pi is not G.pi:
        raise ValueError("G was built for a different factor map")
    if n > 20:
        raise ValueError("n must be <= 20")
    table, _ = trailing_bounds(G, n, depth)
    best = max((hi - lo for lo, hi in table.values()), default=0.0)
    return abs(tau) * best


# -- serialization ---------------------------------------------------------------


def dump(G: CylinderPotential, depth: int) -> list:
    """Two-column table (cylinder word, value) of G to the given depth.

    Rows list ``[1]``, every resolved cylinder ``[w 1]`` with |w| < depth,
    then the recorded tail values.
    """
    pi = G.pi
    ym = pi.codomain.matrix
    one = G.returns.one_y
    name = lambda w: " ".join(pi.codomain.alphabet[t] for t in w)
    rows = [(pi.distinguished, 0.0)]
    fiber = [t for t in range(ym.size) if t != one]
    level = [(t,) for t in fiber]
    for _ in range(1, depth):
        nxt = []
        for w in level:
            if ym[w[-1], one]:
                rows.append((name(w + (one,)), G.log_value(w)))
            nxt.extend(w + (t,) for t in fiber if ym[w[-1], t])
        level = nxt
    rows.extend((k, v) for k, v in G.tail_values.items())
    return rows
