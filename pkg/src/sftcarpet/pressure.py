"""Pressure of tau * G o pi through the first-return (renewal) reduction.

Blocks ``1 w`` between consecutive visits to the distinguished symbol form a
full shift on countably many symbols.  Summing ``G`` over a block telescopes
to ``-log c(1 w 1)``, so the induced potential is locally constant and the
pressure ``P`` is the unique root of

    sum_n W_n exp(-n P) = 1,   W_n = sum_{|w| = n-1} c(1 w 1)^(1 - tau),

where the sum runs over fiber words with at least one preimage.  Roots are
bracketed: the truncated sum gives a lower end and the truncated sum plus a
certified tail bound gives an upper end.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect
from scipy.special import logsumexp

from .compensation import CylinderPotential, build_G, trailing_bounds
from .errors import HypothesisNotCertified, NoApplicableTheorem, RootNotBracketed, SeriesDiverges
from .symdyn import (
    FactorMap,
    ReturnWords,
    TransitionMatrix,
    fiber_submatrix,
    matrix_entropy,
    spectral_radius,
    topological_entropy,
)

DEFAULT_HORIZON = 300
BISECT_TOL = 1e-13
WORD_LIMIT = 400000
MEASURE_TAIL = 1e-15
MEASURE_MAX_BLOCK = 400


@dataclass(frozen=True)
class InducedSystem:
    """Induced weights W_1..W_K together with a certified tail.

    Attributes
    ----------
    pi : factor map
    G : compensation function, or None when ``tau`` is 0
    tau : exponent of the potential
    truncation : horizon K (largest block length summed exactly)
    log_weights : log W_n for n = 1..K (``-inf`` when W_n = 0)
    loop_counts : n -> exact number of domain first-return blocks of length n
    blocks : per-word exact pairs ``(w, c(1 w 1))`` with c > 0, w a tuple of
        codomain indices; the empty word stands for the loop ``1 1``
    tail_logs : log of the bound on W_n for K < n <= far
    tail_rate : exponential growth rate used beyond ``far``
    tail_log_const : log of the constant of the geometric bound
    b_entropy : h_top of the fiber subshift X_B
    """

    pi: FactorMap = field(repr=False)
    G: CylinderPotential | None = field(repr=False)
    tau: float
    truncation: int
    log_weights: tuple = field(repr=False)
    loop_counts: dict = field(repr=False)
    blocks: tuple = field(repr=False)
    tail_logs: tuple = field(repr=False)
    tail_rate: float
    tail_log_const: float
    b_entropy: float
    x_entropy: float

    @property
    def loop_weights(self) -> dict:
        return {n: math.exp(lw) for n, lw in enumerate(self.log_weights, 1) if lw > -math.inf}

    def log_sum(self, P: float, upto: int | None = None) -> float:
        """log of the truncated renewal sum at P."""
        lw = np.asarray(self.log_weights[: upto or self.truncation])
        n = np.arange(1, len(lw) + 1)
        return float(logsumexp(lw - n * P))

    def log_tail(self, P: float) -> float:
        """log of a bound on sum_{n > K} W_n exp(-n P); +inf if not summable."""
        far = self.truncation + len(self.tail_logs)
        parts = []
        if self.tail_logs:
            lt = np.asarray(self.tail_logs)
            n = np.arange(self.truncation + 1, far + 1)
            parts.append(float(logsumexp(lt - n * P)))
        if self.tail_rate > -math.inf:
            q = self.tail_rate - P
            if q >= 0:
                return math.inf
            parts.append(self.tail_log_const + (far + 1) * q - math.log1p(-math.exp(q)))
        return float(logsumexp(parts)) if parts else -math.inf


@dataclass(frozen=True)
class PressureResult:
    """Pressure value with a certified bracket.

    ``pressure`` is the midpoint of ``bracket``; ``lam`` is exp(pressure).
    """

    tau: float
    pressure: float
    lam: float
    bracket: tuple
    method: str
    depth: int
    tail_bound: float = 0.0

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]


def _geometric_bound(m: TransitionMatrix, left: np.ndarray, right: np.ndarray):
    """Return (log C, log r) with left . m^k . right <= C r^k for all k >= 0.

    Uses v = sum_k (m / r)^k 1, which satisfies m v <= r v; r is taken
    slightly above the spectral radius.  (-inf, -inf) when m is nilpotent.
    """
    a = m.to_array().astype(float)
    rho = spectral_radius(m)
    if rho == 0.0:
        return -math.inf, -math.inf
    r = rho * 1.001 + 1e-9
    v = np.linalg.solve(np.eye(len(a)) - a / r, np.ones(len(a)))
    if np.any(v < 1.0 - 1e-9):
        raise ArithmeticError("geometric bound vector is not positive")
    scale = float(np.max(right / v)) if np.any(right) else 0.0
    const = float(left @ v) * scale
    if const <= 0:
        return -math.inf, -math.inf
    return math.log(const), math.log(r)


def _first_return_counts(pi: FactorMap, far: int) -> tuple:
    """Exact counts R_n (domain blocks) and N_n (codomain words) for n <= far.

    R_n counts domain paths 1 x_1 .. x_{n-1} 1 with fiber interior; N_n counts
    codomain words 1 w 1 of length n + 1 with w avoiding 1.
    """
    rw = ReturnWords(pi)
    xm = pi.domain.essential_matrix
    ym = pi.codomain.matrix
    one_x, one_y = rw.one_x, rw.one_y
    b_idx = [x for x in range(xm.size) if x != one_x]
    f_idx = [t for t in range(ym.size) if t != one_y]

    def counts(m, one, idx, start_ok):
        R = [m[one, one]]
        vec = {x: m[one, x] for x in idx if m[one, x] and start_ok(x)}
        succ = m.successors
        for _ in range(2, far + 1):
            R.append(sum(c for x, c in vec.items() if m[x, one]))
            nxt: dict = {}
            for x, c in vec.items():
                for z in succ[x]:
                    if z != one and start_ok(z):
                        nxt[z] = nxt.get(z, 0) + c
            vec = nxt
        return R

    ess = set(pi.domain.essential)
    R = counts(xm, one_x, b_idx, lambda x: x in ess)
    N = counts(ym, one_y, f_idx, lambda t: True)
    return R, N


def induced_weights(pi: FactorMap, G: CylinderPotential | None, tau: float,
                    K: int = DEFAULT_HORIZON) -> InducedSystem:
    """Induced renewal weights W_n(tau) for n <= K plus a certified tail bound.

    Parameters
    ----------
    pi : factor map with a singleton distinguished symbol
    G : compensation function of ``pi``; built on demand when None and
        ``tau`` is nonzero.  At ``tau = 0`` the potential vanishes and no
        theorem is needed.
    tau : exponent in [0, 1)
    K : horizon, at least 10

    Notes
    -----
    Beyond K the weights are bounded by Hoelder's inequality,
    W_n <= N_n^tau R_n^(1 - tau), where R_n counts domain return blocks and
    N_n codomain return words.  Both are exact up to 4K and bounded
    geometrically afterwards.
    """
    if K < 10:
        raise ValueError("horizon K must be at least 10")
    if not 0.0 <= tau < 1.0:
        raise ValueError("tau must lie in [0, 1)")
    if G is None and tau != 0.0:
        try:
            G = build_G(pi)
        except NoApplicableTheorem as exc:
            raise HypothesisNotCertified(str(exc)) from exc
    if G is not None and G.report is not None and not G.report.applicable_theorems:
        raise HypothesisNotCertified("no theorem case applies")
    rw = G.returns if G is not None else ReturnWords(pi)

    a11 = rw.raw(())
    logs = [-math.inf] * K
    groups: list = [[] for _ in range(K)]
    loop_counts = {1: a11}
    if a11:
        logs[0] = 0.0
    blocks = [((), a11)] if a11 else []
    try:
        for word, raw, _adj in rw.fiber_words(K - 1, limit=WORD_LIMIT):
            if raw:
                n = len(word) + 1
                blocks.append((word, raw))
                groups[n - 1].append((1.0 - tau) * math.log(raw))
                loop_counts[n] = loop_counts.get(n, 0) + raw
    except OverflowError as exc:
        raise HypothesisNotCertified(
            f"more than {WORD_LIMIT} fiber words below horizon {K}; lower the horizon") from exc
    for n in range(2, K + 1):
        if groups[n - 1]:
            logs[n - 1] = float(logsumexp(groups[n - 1]))
        loop_counts.setdefault(n, 0)

    far = 4 * K
    R, N = _first_return_counts(pi, far)
    tail_logs = []
    for n in range(K + 1, far + 1):
        r, c = R[n - 1], N[n - 1]
        if r == 0:
            tail_logs.append(-math.inf)
            continue
        c = min(c, r)
        tail_logs.append(tau * math.log(c) + (1.0 - tau) * math.log(r))

    # geometric bounds beyond far for R_n and N_n
    xm = pi.domain.essential_matrix
    ym = pi.codomain.matrix
    b_idx = [x for x in range(xm.size) if x != rw.one_x and x in set(pi.domain.essential)]
    f_idx = [t for t in range(ym.size) if t != rw.one_y]

    def bound(m, one, idx):
        sub = m.submatrix(idx)
        left = np.array([float(m[one, x]) for x in idx])
        right = np.array([float(m[x, one]) for x in idx])
        if not idx:
            return -math.inf, -math.inf
        lc, lr = _geometric_bound(sub, left, right)
        # R_n = left . sub^(n-2) . right
        return lc - 2 * lr if lr > -math.inf else lc, lr

    lcR, lrR = bound(xm, rw.one_x, b_idx)
    lcN, lrN = bound(ym, rw.one_y, f_idx)
    if lrR == -math.inf:
        rate, lconst = -math.inf, -math.inf
    else:
        if lrN == -math.inf:
            lcN, lrN = lcR, lrR
        rate = tau * min(lrN, lrR) + (1.0 - tau) * lrR
        lconst = tau * (lcN if lrN <= lrR else lcR) + (1.0 - tau) * lcR

    b_ent = matrix_entropy(fiber_submatrix(pi, pi.fiber_codomain_symbols))
    return InducedSystem(
        pi=pi, G=G, tau=float(tau), truncation=K, log_weights=tuple(logs),
        loop_counts=loop_counts, blocks=tuple(blocks), tail_logs=tuple(tail_logs),
        tail_rate=rate, tail_log_const=lconst, b_entropy=b_ent,
        x_entropy=topological_entropy(pi.domain),
    )


def _root(f, lo: float, hi: float, what: str) -> float:
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise RootNotBracketed(f"{what}: no sign change on [{lo}, {hi}]", bracket=(lo, hi))
    return float(bisect(f, lo, hi, xtol=BISECT_TOL, maxiter=400))


def pressure_root(sys: InducedSystem, tol: float = 1e-10) -> PressureResult:
    """Unique root P of sum_n W_n exp(-n P) = 1 with a certified bracket.

    The lower end is the root of the truncated sum (the full sum is larger);
    the upper end is the root of the truncated sum plus the tail bound.
    Raises RootNotBracketed when the lower end does not exceed
    (1 - tau) h_top(X_B), where the renewal equation stops describing the
    pressure.
    """
    tau = sys.tau
    floor = (1.0 - tau) * sys.b_entropy
    start = (1.0 - tau) * sys.x_entropy
    lo = min(floor, start) - 1.0
    hi = math.log(max(sys.pi.domain.matrix.size, 2)) + 1.0
    while sys.log_sum(hi) > 0:
        hi += 1.0
    f_low = lambda P: sys.log_sum(P)
    p_lo = _root(f_low, lo, hi, "truncated renewal sum")
    if p_lo <= floor:
        raise RootNotBracketed(
            f"renewal root {p_lo:.12g} does not exceed (1 - tau) h_top(X_B) = {floor:.12g}",
            bracket=(p_lo, floor))

    def f_up(P):
        t = sys.log_tail(P)
        if t == math.inf:
            return 1e300
        return float(np.logaddexp(sys.log_sum(P), t))

    hi2 = hi
    while f_up(hi2) > 0:
        hi2 += 1.0
    p_hi = _root(f_up, p_lo, hi2, "renewal sum with tail bound") if f_up(p_lo) > 0 else p_lo
    mid = 0.5 * (p_lo + p_hi)
    tail = sys.log_tail(p_lo)
    return PressureResult(
        tau=tau, pressure=mid, lam=math.exp(mid), bracket=(p_lo, p_hi),
        method="induced-root", depth=sys.truncation,
        tail_bound=math.exp(tail) if tail < 700 else math.inf,
    )


def pressure(pi: FactorMap, tau: float, G: CylinderPotential | None = None,
             K: int = DEFAULT_HORIZON) -> PressureResult:
    """Convenience wrapper: induced weights followed by the root."""
    return pressure_root(induced_weights(pi, G, tau, K))


# -- partition sums ---------------------------------------------------------------


def partition_sum_bounds(pi: FactorMap, G: CylinderPotential | None, tau: float,
                         n: int) -> tuple:
    """Finite-depth bounds (lower, upper) on P(tau G o pi).

    The upper bound is (1/n) log of the sum over all domain words of length
    n of exp(sup S_n phi) on the cylinder; it is an upper bound for every n
    by submultiplicativity.  The unresolved trailing run is bounded through
    ``trailing_bounds`` and widened by ``|s| * defect``.

    The lower bound is (1/n) log of the sum over return words (words starting
    at the distinguished symbol that may be followed by it) of exp(S_n phi)
    at the periodic point they generate.  Concatenations of such words are
    again such words, so the sums are supermultiplicative and their growth
    rate is at most P.
    """
    if n > 18:
        raise ValueError("n must be <= 18")
    if tau != 0.0 and G is None:
        G = build_G(pi)
    rw = G.returns if G is not None else ReturnWords(pi)
    xm = pi.domain.essential_matrix
    img = rw.image
    one = rw.one_y
    ess = list(pi.domain.essential)
    count = (lambda w: G.count(w)) if G is not None else (lambda w: rw.adjusted(w))
    close_w = lambda s: -tau * math.log(count(s)) if s else 0.0

    def run_dp(starts):
        states = {}
        for x in starts:
            s = () if img[x] == one else (img[x],)
            states[x, s] = states.get((x, s), 0.0) + 1.0
        for _ in range(n - 1):
            nxt: dict = {}
            for (e, s), w in states.items():
                for x in xm.successors[e]:
                    if img[x] == one:
                        key, val = (x, ()), w * math.exp(close_w(s))
                    else:
                        key, val = (x, s + (img[x],)), w
                    nxt[key] = nxt.get(key, 0.0) + val
            states = nxt
        return states

    # upper bound over all words
    up_states = run_dp(ess)
    if tau != 0.0:
        table, defect = trailing_bounds(G, n)
    total = 0.0
    for (e, s), w in up_states.items():
        if s and tau != 0.0:
            lo_hi = table.get((s, e))
            hi = lo_hi[1] if lo_hi is not None else 0.0
            w *= math.exp(tau * (hi + len(s) * defect))
        total += w
    upper = math.log(total) / n

    # lower bound over return words
    low_states = run_dp([rw.one_x])
    total = 0.0
    for (e, s), w in low_states.items():
        if xm[e, rw.one_x]:
            total += w * math.exp(close_w(s))
    lower = math.log(total) / n if total > 0 else -math.inf
    return lower, upper


# -- equilibrium measures ------------------------------------------------------------


class CylinderMeasures(Mapping):
    """Masses of domain cylinders under the equilibrium state.

    Keys are tuples of domain symbols.  ``truncation`` bounds the mass of
    return blocks longer than the longest block represented, and
    ``pressure`` is the root used (the root of the truncated sum, so that
    every depth level sums to one).
    """

    def __init__(self, masses: dict, depth: int, truncation: float, pressure: float,
                 mean_return: float, max_block: int):
        self._masses = masses
        self.depth = depth
        self.truncation = truncation
        self.pressure = pressure
        self.mean_return = mean_return
        self.max_block = max_block

    def __getitem__(self, key):
        return self._masses[tuple(key)]

    def __iter__(self):
        return iter(self._masses)

    def __len__(self):
        return len(self._masses)

    def level(self, k: int) -> dict:
        return {w: m for w, m in self._masses.items() if len(w) == k}


def _block_horizon(sys: InducedSystem, P: float) -> int:
    """Smallest L such that blocks longer than L carry negligible mean mass."""
    lw = np.asarray(sys.log_weights)
    n = np.arange(1, len(lw) + 1)
    terms = lw - n * P + np.log(n)
    total = float(logsumexp(terms))
    for L in range(1, len(lw)):
        rest = float(logsumexp(terms[L:])) if np.isfinite(terms[L:]).any() else -math.inf
        if rest - total < math.log(MEASURE_TAIL):
            return max(L, 2)
    return len(lw)


def equilibrium_cylinder_measures(sys: InducedSystem, P: float | None = None,
                                  depth: int = 8) -> CylinderMeasures:
    """Cylinder masses of the equilibrium state through ``depth``.

    The equilibrium state is the stationary law of the induced full shift
    on return blocks, where a domain block over ``1 w`` has probability
    c(1 w 1)^(-tau) exp(-|1 w| P).  A position inside a block is described
    by the partial fiber word read since the last ``1``; the probability of
    completing the block from there is computed once on a trie of fiber
    words, and cylinder masses follow by a forward pass.

    Blocks longer than a horizon chosen so that their share of the mean
    return time is below 1e-15 are dropped, and P is replaced by the root
    of the correspondingly truncated equation so that masses stay exactly
    normalized and additive.
    """
    pi = sys.pi
    tau = sys.tau
    if P is None:
        P = pressure_root(sys).pressure
    L = min(_block_horizon(sys, P), MEASURE_MAX_BLOCK, sys.truncation)
    P_m = _root(lambda p: sys.log_sum(p, L), P - 1.0, P + 1.0, "truncated measure sum")

    rw = sys.G.returns if sys.G is not None else ReturnWords(pi)
    xm = pi.domain.essential_matrix
    a = xm.to_array().astype(float)
    size = xm.size
    img = rw.image
    one_x, one_y = rw.one_x, rw.one_y
    ym = pi.codomain.matrix
    fiber = [t for t in range(ym.size) if t != one_y]
    ess = set(pi.domain.essential)
    masks = np.array([[img[j] == t and j in ess for j in range(size)] for t in range(ym.size)],
                     dtype=float)

    # trie of fiber words up to length L - 1 with forward count vectors
    words = [()]
    parent = [-1]
    child: list = [dict()]
    fwd = [np.eye(size)[one_x]]
    level = [0]
    for node in range(10**9):
        if node >= len(words):
            break
        w = words[node]
        if len(w) >= L - 1:
            continue
        for t in fiber:
            if w and not ym[w[-1], t]:
                continue
            vec = (fwd[node] @ a) * masks[t]
            if not vec.any():
                continue
            child[node][t] = len(words)
            words.append(w + (t,))
            parent.append(node)
            child.append({})
            fwd.append(vec)
            level.append(len(w) + 1)
    count = (lambda w: sys.G.count(w)) if sys.G is not None else (lambda w: rw.adjusted(w))
    close = np.array([math.exp(-tau * math.log(count(w)) - (len(w) + 1) * P_m) for w in words])
    to_one = a[:, one_x]
    H = np.zeros((len(words), size))
    for node in range(len(words) - 1, -1, -1):
        h = to_one * close[node]
        for t, c in child[node].items():
            h = h + a @ (H[c] * masks[t])
        H[node] = h
    if abs(H[0, one_x] - 1.0) > 1e-9:
        raise ArithmeticError(f"renewal normalization off by {H[0, one_x] - 1.0:.3g}")
    mean_return = float(sum(fwd[k] @ H[k] for k in range(len(words))))

    by_last: dict = {t: [] for t in fiber}
    for k, w in enumerate(words):
        if w:
            by_last[w[-1]].append(k)

    masses: dict = {}
    alph = pi.domain.alphabet

    def visit(word, last, alpha):
        mass = sum(v * H[k, last] for k, v in alpha.items())
        masses[word] = mass / mean_return
        if len(word) >= depth:
            return
        for x in xm.successors[last]:
            if x not in ess:
                continue
            if img[x] == one_y:
                tot = sum(v * close[k] for k, v in alpha.items())
                nxt = {0: tot} if tot > 0 else {}
            else:
                nxt = {}
                for k, v in alpha.items():
                    c = child[k].get(img[x])
                    if c is not None:
                        nxt[c] = v
            if nxt:
                visit(word + (alph[x],), x, nxt)

    for x in sorted(ess):
        if img[x] == one_y:
            alpha = {0: 1.0}
        else:
            alpha = {k: float(fwd[k][x]) for k in by_last[img[x]] if fwd[k][x]}
        if alpha:
            visit((alph[x],), x, alpha)
    trunc = math.exp(sys.log_sum(P_m) - sys.log_sum(P_m, L)) - 1.0 if L < sys.truncation else 0.0
    return CylinderMeasures(masses, depth, abs(trunc) + abs(P_m - P), P_m, mean_return, L)


def potential_integral(G: CylinderPotential, measures: CylinderMeasures,
                       with_bounds: bool = False):
    """Integral of G o pi against cylinder masses of the deepest level.

    Cylinders whose image contains the distinguished symbol determine G
    exactly.  On the remaining cylinders G is only bracketed, by the values
    reachable within the cylinder; the midpoint of the resulting interval is
    returned, or ``(value, lo, hi)`` when ``with_bounds`` is set.
    """
    pi = G.pi
    cidx = pi.codomain.index
    one = cidx[pi.distinguished]
    lo = hi = 0.0
    values = _G_value_range(G)
    for word, mass in measures.level(measures.depth).items():
        y = [cidx[pi.symbol_map[s]] for s in word]
        if one in y:
            k = y.index(one)
            v = G.log_value(y[:k]) if k else 0.0
            lo += mass * v
            hi += mass * v
        else:
            vlo, vhi = values
            lo += mass * vlo
            hi += mass * vhi
    lo, hi = float(lo), float(hi)
    mid = 0.5 * (lo + hi)
    return (mid, lo, hi) if with_bounds else mid


def _G_value_range(G: CylinderPotential) -> tuple:
    """Coarse range of G over points whose long prefixes avoid 1."""
    tails = list(G.tail_values.values())
    vals = tails + [0.0]
    if G.case in ("thm31", "thm61", "locally-constant"):
        # G = log(c(1 w[1:] 1) / c(1 w 1)) <= 0 and tends to 0 along long runs
        return min(vals + [-math.log(2.0)]), 0.0
    spread = max(abs(v) for v in vals) + 1.0
    return min(vals) - spread, max(vals) + spread


def induced_integral(sys: InducedSystem, P: float) -> float:
    """Exact integral of G o pi for the equilibrium state from block sums.

    Each block 1 w contributes -log c(1 w 1) to the Birkhoff sum, so the
    integral is E[-log c] / E[block length] under the induced law.
    """
    tau = sys.tau
    num = den = 0.0
    for w, raw in sys.blocks:
        n = len(w) + 1
        p = math.exp((1.0 - tau) * math.log(raw) - n * P)
        num += p * (-math.log(raw) if w else 0.0)
        den += p * n
    return num / den


def entropy_from_pressure(P: float, tau: float, integral: float) -> float:
    """Entropy of the equilibrium state: h = P - tau * integral."""
    return P - tau * integral


# -- eigenfunction and Coelho-Quas criterion -------------------------------------------


def _run_length_counts(pi: FactorMap, G: CylinderPotential | None):
    rw = G.returns if G is not None else ReturnWords(pi)
    ym = pi.codomain.matrix
    fiber = [t for t in range(ym.size) if t != rw.one_y]
    if len(fiber) != 1:
        raise ValueError("eigenfunction series needs a single fiber codomain symbol")
    f = fiber[0]
    count = (lambda k: G.count((f,) * k)) if G is not None else (lambda k: rw.adjusted((f,) * k))
    return count


def eigenfunction_series(pi: FactorMap, G: CylinderPotential | None, tau: float,
                         cylinder: int, lam: float | None = None,
                         terms: int | None = None) -> float:
    """Eigenfunction h on the run-length cylinder [f^K 1], normalized by C = 1.

    With c(k) the preimage count of 1 f^k 1,

        h([f^K 1]) = (1 / lam) sum_{i >= 0} lam^(-i) (c(K) / c(K + i))^tau,

    where C is the (constant) value of h on [1 f^K 1].  The sum runs until
    the relative tail bound drops below 1e-12 unless ``terms`` fixes the
    number of summands.
    """
    K = int(cylinder)
    if K < 1:
        raise ValueError("run length must be positive")
    count = _run_length_counts(pi, G)
    if lam is None:
        lam = pressure(pi, tau, G).lam
    if lam <= 1.0:
        raise SeriesDiverges(f"lambda = {lam} <= 1")
    cK = math.log(count(K))
    total = 0.0
    i = 0
    q = 1.0 / lam
    while True:
        term = q**i * math.exp(tau * (cK - math.log(count(K + i))))
        total += term
        i += 1
        if terms is not None:
            if i >= terms:
                break
        elif term * q / (1.0 - q) < 1e-13 * total:
            break
    return total / lam


@dataclass(frozen=True)
class CQResult:
    satisfied: bool
    r: int | None
    evidence: dict
    failing: str | None = None


def cq_check(pi: FactorMap, G: CylinderPotential | None, tau: float, P: float,
             r_max: int = 200) -> CQResult:
    """Divergence of sum_k prod_{i=r}^k (1 - (n/2) var_i g) for run-length potentials.

    Step 1 bounds var_i(log g) by 2 tau log(i/(i-1)) from i = K0 + 1 on,
    using the eigenfunction ratios; Step 2 turns this into
    var_i(g) <= ((i/(i-1))^(2 tau) - 1) / lam; Step 3 compares the partial
    products with ((r-1)/k)^(2 tau), whose sum diverges when 2 tau < 1.
    The comparison needs lam > n/2 with n the domain alphabet size.
    """
    lam = math.exp(P)
    n_alpha = len(pi.domain.essential)
    evidence = {"lambda": lam, "alphabet": n_alpha, "two_beta": 2 * tau}
    if tau == 0.0:
        evidence["reason"] = "var_i(g) = 0 for zero potential"
        return CQResult(True, 1, evidence)
    if not lam > n_alpha / 2:
        return CQResult(False, None, evidence, f"lambda > {n_alpha}/2 fails (lambda = {lam:.6g})")
    if not 2 * tau < 1:
        return CQResult(False, None, evidence, f"2 beta < 1 fails (2 beta = {2 * tau:.6g})")
    evidence["certified"] = (f"lambda > {n_alpha}/2", "2 beta < 1")

    # Step 1: eigenfunction ratios along runs
    h = [None] + [eigenfunction_series(pi, G, tau, k, lam) for k in range(1, r_max + 2)]
    k0 = None
    for k in range(r_max, 0, -1):
        ratio = h[k + 1] / h[k]
        if not (1.0 - 1e-12 <= ratio <= ((k + 1) / k) ** tau * (1 + 1e-12)):
            break
        k0 = k
    if k0 is None:
        return CQResult(False, None, evidence, "eigenfunction ratio bound fails near r_max")
    evidence["K0"] = k0

    # Step 3 comparison from K0' on
    def holds(k):
        left = 1.0 - (n_alpha / 2) * ((k / (k - 1)) ** (2 * tau) - 1.0) / lam
        return left >= ((k - 1) / k) ** (2 * tau)

    k_prime = None
    for k in range(r_max, 1, -1):
        if not holds(k):
            break
        k_prime = k
    if k_prime is None:
        return CQResult(False, None, evidence, "Step-3 comparison fails near r_max")
    r = max(k0 + 1, k_prime)
    prod = 1.0
    for i in range(r, r_max + 1):
        prod *= 1.0 - (n_alpha / 2) * ((i / (i - 1)) ** (2 * tau) - 1.0) / lam
    evidence.update(K0_prime=k_prime, product_at_r_max=prod,
                    comparison=((r - 1) / r_max) ** (2 * tau))
    return CQResult(True, r, evidence)
