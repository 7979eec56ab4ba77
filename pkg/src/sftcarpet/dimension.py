"""Hausdorff dimension of carpets defined by a digit set and a transition matrix.

A carpet is coded by the one-sided SFT on its rectangles; projecting each
rectangle to its y-digit gives a one-block factor map onto the image
subshift.  With alpha = log_m l - 1 and tau = alpha / (alpha + 1) the
dimension is P(tau G o pi) / log m for the saturated compensation function
G of that factor map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compensation import build_G
from .errors import NoApplicableTheorem, NotFullShift, SchemaError, TooLarge
from .hypocheck import classify
from .pressure import DEFAULT_HORIZON, PressureResult, pressure
from .symdyn import (
    FactorMap,
    Sft,
    TransitionMatrix,
    count_words,
    validate_sft,
)

MAX_PIXELS = 2**26
ORACLE_RESTARTS = 30
ORACLE_SLACK = 1e-6
RELAXATION_WORDS = 6000


@dataclass(frozen=True)
class CarpetSpec:
    """Digit rectangles of a carpet and an optional transition matrix.

    Attributes
    ----------
    l : horizontal expansion
    m : vertical expansion, 2 <= m < l
    rectangles : distinct (x-digit, y-digit) pairs
    matrix : transitions between rectangles; None means all transitions
    """

    l: int
    m: int
    rectangles: tuple
    matrix: TransitionMatrix | None = None

    def __post_init__(self):
        if not (isinstance(self.l, int) and isinstance(self.m, int)):
            raise SchemaError("l and m must be integers")
        if not self.l > self.m >= 2:
            raise SchemaError("l > m required (with m >= 2)")
        rects = tuple((int(x), int(y)) for x, y in self.rectangles)
        object.__setattr__(self, "rectangles", rects)
        if not rects:
            raise SchemaError("rectangles must be nonempty")
        if len(set(rects)) != len(rects):
            raise SchemaError("rectangles must be distinct")
        for x, y in rects:
            if not (0 <= x < self.l and 0 <= y < self.m):
                raise SchemaError(f"rectangle ({x}, {y}) outside the {self.l} x {self.m} grid")
        if self.matrix is not None:
            mat = self.matrix if isinstance(self.matrix, TransitionMatrix) else TransitionMatrix.of(self.matrix)
            if mat.size != len(rects):
                raise SchemaError("matrix size does not match the rectangle count")
            object.__setattr__(self, "matrix", mat)

    @property
    def is_full(self) -> bool:
        return self.matrix is None or all(all(row) for row in self.matrix.entries)

    @property
    def full_matrix(self) -> TransitionMatrix:
        if self.matrix is not None:
            return self.matrix
        r = len(self.rectangles)
        return TransitionMatrix.of([[1] * r for _ in range(r)])

    def row_counts(self) -> list:
        """t_j = number of rectangles in row j, for j = 0..m-1."""
        t = [0] * self.m
        for _, y in self.rectangles:
            t[y] += 1
        return t


@dataclass(frozen=True)
class DimensionResult:
    dimension: float
    alpha: float
    tau: float
    pressure: PressureResult
    bracket: tuple
    method: str
    theorems: tuple = ()
    gibbs: bool | None = None
    oracle_bracket: tuple | None = None


def carpet_to_symbolic(spec: CarpetSpec) -> tuple:
    """(X, Y, pi) for a carpet.

    Rectangles are named "1".."r" in the given order and map to their
    y-digit written as a string.  The distinguished codomain symbol is a
    singleton fiber; when several rows hold one rectangle, the first one for
    which a theorem applies is chosen.  ``pi.distinguished`` is None when no
    row holds exactly one rectangle.
    """
    names = [str(k + 1) for k in range(len(spec.rectangles))]
    X = validate_sft(spec.full_matrix, names)
    symbol_map = {names[k]: str(y) for k, (_, y) in enumerate(spec.rectangles)}
    rows = sorted({str(y) for _, y in spec.rectangles}, key=int)
    fibers = {y: [s for s in names if symbol_map[s] == y] for y in rows}
    singles = [y for y in rows if len(fibers[y]) == 1]
    pi = None
    for y in singles:
        cand = FactorMap.onto_image(X, symbol_map, rows, distinguished=y)
        if classify(cand).applicable_theorems:
            pi = cand
            break
    if pi is None:
        pi = FactorMap.onto_image(X, symbol_map, rows, distinguished=singles[0] if singles else None)
    return X, pi.codomain, pi


def _alpha_tau(spec: CarpetSpec) -> tuple:
    alpha = math.log(spec.l) / math.log(spec.m) - 1.0
    tau = 1.0 - math.log(spec.m) / math.log(spec.l)
    return alpha, tau


def mcmullen_dimension(spec: CarpetSpec) -> float:
    """log_m(sum_j t_j^(log_l m)) for a carpet without transition restrictions.

    Rows holding all l rectangles contribute exactly m, and single rectangles
    exactly 1, so that full carpets give exactly 2 and single rectangles 0.
    """
    if not spec.is_full:
        raise NotFullShift("McMullen's formula needs the full transition matrix")
    e = math.log(spec.m) / math.log(spec.l)
    exact = 0
    terms = []
    for t in spec.row_counts():
        if t == 0:
            continue
        if t == spec.l:
            exact += spec.m
        elif t == 1:
            exact += 1
        else:
            terms.append(t**e)
    if not terms:
        k = 0
        while spec.m ** (k + 1) <= exact:
            k += 1
        if spec.m**k == exact:
            return float(k)
    return math.log(math.fsum(terms + [exact])) / math.log(spec.m)


def hausdorff_dimension(spec: CarpetSpec, horizon: int = DEFAULT_HORIZON) -> DimensionResult:
    """Dimension P(tau G o pi) / log m with the pressure bracket propagated.

    Carpets without transition restrictions for which no theorem applies
    (typically because no row holds a single rectangle) fall back to
    McMullen's closed form.  Otherwise NoApplicableTheorem is raised with the
    hypothesis report attached.
    """
    alpha, tau = _alpha_tau(spec)
    _, _, pi = carpet_to_symbolic(spec)
    report = classify(pi) if pi.distinguished is not None else None
    log_m = math.log(spec.m)
    if report is None or not report.applicable_theorems:
        if spec.is_full:
            d = mcmullen_dimension(spec)
            p = d * log_m
            res = PressureResult(tau=tau, pressure=p, lam=math.exp(p), bracket=(p, p),
                                 method="closed-form", depth=0)
            return DimensionResult(d, alpha, tau, res, (d, d), "mcmullen")
        raise NoApplicableTheorem("no theorem case applies to the carpet's projection",
                                  report=report)
    G = build_G(pi, report)
    res = pressure(pi, tau, G, horizon)
    lo, hi = res.bracket
    return DimensionResult(
        dimension=res.pressure / log_m, alpha=alpha, tau=tau, pressure=res,
        bracket=(lo / log_m, hi / log_m), method="compensation",
        theorems=tuple(report.applicable_theorems), gibbs=report.gibbs_bounded.bounded,
    )


# -- weighted entropy oracle --------------------------------------------------------


def _higher_block(matrix: TransitionMatrix, memory: int):
    """States (allowed words of length memory) and edges between them."""
    succ = matrix.successors
    states = [(i,) for i in range(matrix.size)]
    for _ in range(memory - 1):
        states = [s + (j,) for s in states for j in succ[s[-1]]]
    index = {s: k for k, s in enumerate(states)}
    edges = []
    for k, s in enumerate(states):
        for j in succ[s[-1]]:
            t = s[1:] + (j,)
            if t in index:
                edges.append((k, index[t]))
    return states, edges


def _stationary(Q: np.ndarray) -> np.ndarray:
    n = len(Q)
    a = np.vstack([Q.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    p = np.linalg.lstsq(a, b, rcond=None)[0]
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _block_entropy(dist: np.ndarray) -> float:
    d = dist[dist > 0]
    return float(-(d * np.log(d)).sum())


def _observe(cur: np.ndarray, Q: np.ndarray, masks: np.ndarray, h: int) -> np.ndarray:
    """Extend joint laws (rows: observation words, columns: state) by h steps."""
    for _ in range(h):
        nxt = cur @ Q
        cur = np.concatenate([nxt * m for m in masks])
        cur = cur[cur.sum(axis=1) > 0]
    return cur


def _hidden_lower(p: np.ndarray, Q: np.ndarray, masks: np.ndarray, h: int) -> float:
    """H(Y_0 | Y_1..Y_h, S_{h+1}) for the chain (p, Q) observed through masks.

    ``masks[t]`` selects the states whose observed symbol is t.  The joint
    laws are built for all observation words at once.
    """
    with_first = _observe(np.array([p * m for m in masks]), Q, masks, h) @ Q
    without = _observe(p[None, :], Q, masks, h) @ Q
    return _block_entropy(with_first.ravel()) - _block_entropy(without.ravel())


def _markov_entropy(p: np.ndarray, Q: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(Q > 0, np.log(np.where(Q > 0, Q, 1.0)), 0.0)
    return float(-(p[:, None] * Q * logs).sum())


def _oracle_lower(X: Sft, pi: FactorMap, alpha: float, memory: int, horizon: int,
                  seed: int, restarts: int) -> float:
    from scipy.optimize import minimize

    xm = X.essential_matrix
    ess = set(X.essential)
    states, edges = _higher_block(xm, memory)
    keep = [k for k, s in enumerate(states) if all(i in ess for i in s)]
    remap = {k: n for n, k in enumerate(keep)}
    states = [states[k] for k in keep]
    edges = [(remap[a], remap[b]) for a, b in edges if a in remap and b in remap]
    n = len(states)
    img = pi.image_index
    ysize = pi.codomain.matrix.size
    masks = np.array([[1.0 if img[s[0]] == t else 0.0 for s in states] for t in range(ysize)])
    src = np.array([a for a, _ in edges])
    dst = np.array([b for _, b in edges])

    def chain(theta):
        Q = np.full((n, n), -np.inf)
        Q[src, dst] = theta
        Q = Q - Q.max(axis=1, keepdims=True)
        Q = np.exp(Q)
        Q = Q / Q.sum(axis=1, keepdims=True)
        return Q

    def value(theta, h):
        Q = chain(theta)
        p = _stationary(Q)
        return _markov_entropy(p, Q) + alpha * _hidden_lower(p, Q, masks, h)

    # Parry measure of the higher block presentation as the first start
    a = np.zeros((n, n))
    a[src, dst] = 1.0
    w, v = np.linalg.eig(a)
    k = int(np.argmax(w.real))
    vec = np.abs(v[:, k].real) + 1e-300
    parry = np.log(vec[dst])
    rng = np.random.default_rng(seed)
    starts = [parry] + [rng.normal(size=len(edges)) for _ in range(restarts)]
    h_fast = min(horizon, 6)
    best = []
    for th in starts:
        r = minimize(lambda t: -value(t, h_fast), th, method="L-BFGS-B",
                     options={"maxiter": 200})
        best.append((-r.fun, r.x))
    best.sort(key=lambda z: -z[0])
    return max(value(th, horizon) for _, th in best[:3])


def _oracle_upper(X: Sft, pi: FactorMap, alpha: float, horizon: int) -> float:
    """Concave relaxation over shift-consistent block laws.

    For every invariant measure, H(X_0 | X_1..X_h) >= h_mu and
    H(Y_0 | Y_1..Y_h) >= h of the image, and both are concave in the law of
    (h+1)-blocks, which ranges over a polytope.  The maximum of the relaxed
    functional is therefore an upper bound for the supremum.
    """
    import cvxpy as cp
    from scipy import sparse

    xm = X.essential_matrix
    ess = set(X.essential)
    words = [(i,) for i in sorted(ess)]
    for _ in range(horizon):
        words = [w + (j,) for w in words for j in xm.successors[w[-1]] if j in ess]
    n = len(words)
    img = pi.image_index

    def selector(key):
        """Sparse 0/1 matrix summing q over words with equal key."""
        pos: dict = {}
        rows = [pos.setdefault(key(w), len(pos)) for w in words]
        mat = sparse.csr_matrix((np.ones(n), (rows, np.arange(n))), shape=(len(pos), n))
        return pos, mat

    q = cp.Variable(n, nonneg=True)
    pre_pos, pre = selector(lambda w: w[:-1])
    suf_pos, suf = selector(lambda w: w[1:])
    keys = sorted(set(pre_pos) | set(suf_pos))
    kpos = {k: i for i, k in enumerate(keys)}
    stat = (sparse.csr_matrix((np.ones(len(pre_pos)), ([kpos[k] for k in pre_pos], list(pre_pos.values()))),
                              shape=(len(keys), len(pre_pos))) @ pre
            - sparse.csr_matrix((np.ones(len(suf_pos)), ([kpos[k] for k in suf_pos], list(suf_pos.values()))),
                                shape=(len(keys), len(suf_pos))) @ suf)
    cons = [cp.sum(q) == 1, stat @ q == 0]

    back = sparse.csr_matrix((np.ones(n), (np.arange(n), [suf_pos[w[1:]] for w in words])),
                             shape=(n, len(suf_pos)))
    hx = cp.sum(-cp.rel_entr(q, back @ (suf @ q)))

    y_pos, ysel = selector(lambda w: tuple(img[i] for i in w))
    ys_pos, yssel = selector(lambda w: tuple(img[i] for i in w[1:]))
    ykeys = sorted(y_pos, key=y_pos.get)
    link = sparse.csr_matrix((np.ones(len(ykeys)), (np.arange(len(ykeys)), [ys_pos[k[1:]] for k in ykeys])),
                             shape=(len(ykeys), len(ys_pos)))
    hy = cp.sum(-cp.rel_entr(ysel @ q, link @ (yssel @ q)))
    prob = cp.Problem(cp.Maximize(hx + alpha * hy), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise ArithmeticError(f"relaxation solver returned {prob.status}")
    return float(prob.value) + ORACLE_SLACK


def weighted_entropy_oracle(X: Sft, Y: Sft, pi: FactorMap, alpha: float, memory: int = 1,
                            horizon: int = 10, seed: int = 0,
                            restarts: int = ORACLE_RESTARTS) -> tuple:
    """Bracket (lower, upper) of sup over invariant mu of h_mu + alpha h(pi mu).

    The lower end maximizes over Markov measures of the given memory, with
    the image entropy bounded below by H(Y_0 | Y_1..Y_h, S_{h+1}); the upper
    end is a concave relaxation over laws of (h+1)-blocks with conditional
    entropies in place of entropy rates; when the number of blocks exceeds
    RELAXATION_WORDS the relaxation runs at a shorter horizon, which can
    only raise it.
    """
    if len(X.essential) > 5:
        raise ValueError("oracle supports at most 5 domain symbols")
    if memory not in (1, 2) or horizon > 12 or horizon < 1:
        raise ValueError("memory must be 1 or 2 and horizon in 1..12")
    if Y is not pi.codomain and Y.alphabet != pi.codomain.alphabet:
        raise ValueError("Y must be the codomain of pi")
    lower = _oracle_lower(X, pi, alpha, memory, horizon, seed, restarts)
    # the relaxed bound only grows as the horizon shrinks, so cap its size
    h_up = horizon
    while h_up > 1 and count_words(X, h_up + 1) > RELAXATION_WORDS:
        h_up -= 1
    upper = _oracle_upper(X, pi, alpha, h_up)
    return OracleBracket(lower, max(upper, lower), h_up)


class OracleBracket(tuple):
    """(lower, upper) pair; ``upper_horizon`` is the horizon of the relaxation."""

    def __new__(cls, lower: float, upper: float, upper_horizon: int):
        obj = super().__new__(cls, (lower, upper))
        obj.upper_horizon = upper_horizon
        return obj

    @property
    def lower(self) -> float:
        return self[0]

    @property
    def upper(self) -> float:
        return self[1]


# -- rendering ---------------------------------------------------------------------


def render(spec: CarpetSpec, depth: int) -> np.ndarray:
    """Boolean bitmap of the depth-``depth`` cells meeting the carpet.

    The array has shape (m^depth, l^depth); entry [j, i] covers
    [i / l^d, (i+1) / l^d] x [j / m^d, (j+1) / m^d], so row 0 is the bottom
    row.  A cell is set when its digit word is an allowed word of the
    essential graph.
    """
    if depth < 1 or depth > 10 or (spec.l * spec.m) ** depth > MAX_PIXELS:
        raise TooLarge(f"depth {depth} too large for a {spec.l} x {spec.m} carpet")
    X = validate_sft(spec.full_matrix)
    xm = X.essential_matrix
    ess = set(X.essential)
    rects = spec.rectangles
    # E[s]: cells (at the current scale) of allowed words that follow s
    prev = {s: np.ones((1, 1), dtype=bool) for s in ess}
    for t in range(1, depth):
        cur = {}
        shape = (spec.m**t, spec.l**t)
        for s in ess:
            acc = np.zeros(shape, dtype=bool)
            for s2 in xm.successors[s]:
                if s2 in ess:
                    x, y = rects[s2]
                    bh, bw = prev[s2].shape
                    acc[y * bh:(y + 1) * bh, x * bw:(x + 1) * bw] |= prev[s2]
            cur[s] = acc
        prev = cur
    out = np.zeros((spec.m**depth, spec.l**depth), dtype=bool)
    for s in ess:
        x, y = rects[s]
        bh, bw = prev[s].shape
        out[y * bh:(y + 1) * bh, x * bw:(x + 1) * bw] |= prev[s]
    return out


def pbm_bytes(bitmap: np.ndarray) -> bytes:
    """Binary PBM (P4) encoding; the file lists rows from the top down."""
    h, w = bitmap.shape
    rows = np.ascontiguousarray(bitmap[::-1].astype(np.uint8))
    return f"P4\n{w} {h}\n".encode("ascii") + np.packbits(rows, axis=1).tobytes()


def write_pbm(bitmap: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pbm_bytes(bitmap))
