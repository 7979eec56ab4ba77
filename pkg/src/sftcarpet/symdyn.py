"""Shifts of finite type, one-block factor maps and exact word counting.

Symbols are strings.  A word is a tuple of symbols.  All counts are Python
integers, so they never overflow; floating point only enters through
spectral radii and logarithms.
"""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptySubshift, InvalidFactorMap, NotAWord, NotIrreducible

Word = tuple  # tuple[str, ...]

_POWER_TOL = 1e-12


@dataclass(frozen=True)
class TransitionMatrix:
    """Square 0/1 matrix.  ``entries[i][j] == 1`` allows the step i -> j."""

    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.entries)
        n = len(rows)
        if n < 1:
            raise ValueError("transition matrix must have size >= 1")
        for row in rows:
            if len(row) != n:
                raise ValueError("transition matrix must be square")
            if any(v not in (0, 1) for v in row):
                raise ValueError("transition matrix entries must be 0 or 1")
        object.__setattr__(self, "entries", rows)

    @classmethod
    def of(cls, rows) -> "TransitionMatrix":
        if isinstance(rows, TransitionMatrix):
            return rows
        return cls(tuple(tuple(r) for r in np.asarray(rows).tolist()))

    @property
    def size(self) -> int:
        return len(self.entries)

    def __getitem__(self, ij) -> int:
        i, j = ij
        return self.entries[i][j]

    def to_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64)

    @cached_property
    def successors(self) -> tuple:
        return tuple(tuple(j for j, v in enumerate(row) if v) for row in self.entries)

    @cached_property
    def predecessors(self) -> tuple:
        n = self.size
        return tuple(tuple(i for i in range(n) if self.entries[i][j]) for j in range(n))

    def submatrix(self, indices: Sequence[int]) -> "TransitionMatrix":
        idx = list(indices)
        return TransitionMatrix(tuple(tuple(self.entries[i][j] for j in idx) for i in idx))

    def is_zero(self) -> bool:
        return not any(any(row) for row in self.entries)


@dataclass(frozen=True)
class ClassStructure:
    """Strongly connected structure of a transition graph.

    ``classes`` holds the non-transient communicating classes (each carries at
    least one cycle), listed in a topological order of the condensation.
    ``edges`` holds pairs (a, b) of class positions with b reachable from a
    (transitively, possibly through transient symbols).
    """

    classes: tuple
    edges: frozenset
    transient: tuple

    def reachable(self, a: int, b: int) -> bool:
        return a == b or (a, b) in self.edges


def _scc_labels(m: TransitionMatrix):
    graph = csr_matrix(m.to_array())
    return connected_components(graph, directed=True, connection="strong")


def _reach_closure(m: TransitionMatrix, sources: Iterable[int]) -> set:
    seen = set(sources)
    stack = list(seen)
    succ = m.successors
    while stack:
        i = stack.pop()
        for j in succ[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def _coreach_closure(m: TransitionMatrix, targets: Iterable[int]) -> set:
    seen = set(targets)
    stack = list(seen)
    pred = m.predecessors
    while stack:
        j = stack.pop()
        for i in pred[j]:
            if i not in seen:
                seen.add(i)
                stack.append(i)
    return seen


def communicating_classes(m: TransitionMatrix) -> ClassStructure:
    """Partition the symbols carrying cycles into communicating classes.

    Examples
    --------
    >>> cs = communicating_classes(TransitionMatrix.of([[1, 1], [0, 1]]))
    >>> cs.classes, sorted(cs.edges)
    (((0,), (1,)), [(0, 1)])
    """
    _, labels = _scc_labels(m)
    groups: dict = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    cyclic = []
    transient = []
    for members in groups.values():
        if len(members) > 1 or m[members[0], members[0]]:
            cyclic.append(tuple(members))
        else:
            transient.extend(members)
    reach = {c: _reach_closure(m, c) for c in cyclic}
    # topological order: a class precedes every class it reaches
    order = sorted(cyclic, key=lambda c: (-sum(1 for d in cyclic if d[0] in reach[c]), c[0]))
    pos = {c: k for k, c in enumerate(order)}
    edges = frozenset(
        (pos[a], pos[b]) for a in order for b in order if a != b and b[0] in reach[a]
    )
    return ClassStructure(tuple(order), edges, tuple(sorted(transient)))


def is_irreducible(m: TransitionMatrix) -> bool:
    ncomp, _ = _scc_labels(m)
    if ncomp != 1:
        return False
    # a single vertex without a loop is not irreducible
    return m.size > 1 or m[0, 0] == 1


def period(m: TransitionMatrix) -> int:
    """Greatest common divisor of the cycle lengths of an irreducible matrix."""
    if not is_irreducible(m):
        raise NotIrreducible("period is only defined for irreducible matrices")
    level = {0: 0}
    queue = [0]
    succ = m.successors
    for i in queue:
        for j in succ[i]:
            if j not in level:
                level[j] = level[i] + 1
                queue.append(j)
    g = 0
    for i in range(m.size):
        for j in succ[i]:
            g = math.gcd(g, level[i] + 1 - level[j])
    return abs(g)


def is_primitive(m: TransitionMatrix) -> bool:
    return is_irreducible(m) and period(m) == 1


def essential_symbols(m: TransitionMatrix) -> tuple:
    """Symbols lying on some bi-infinite path."""
    cs = communicating_classes(m)
    cyc = [i for c in cs.classes for i in c]
    if not cyc:
        return ()
    return tuple(sorted(_reach_closure(m, cyc) & _coreach_closure(m, cyc)))


def forward_infinite_symbols(m: TransitionMatrix) -> set:
    """Symbols from which an infinite forward path starts."""
    cs = communicating_classes(m)
    return _coreach_closure(m, [i for c in cs.classes for i in c])


def _is_simple_cycle(m: TransitionMatrix) -> bool:
    return all(len(s) == 1 for s in m.successors)


def _perron_value(m: TransitionMatrix) -> float:
    """Perron root of an irreducible matrix by power iteration on I + M.

    Collatz-Wielandt quotients give a two-sided bracket at every step, and the
    iteration stops once its relative width drops below the tolerance.
    """
    a = m.to_array().astype(float)
    shifted = a + np.eye(m.size)
    v = np.ones(m.size)
    lo, hi = 0.0, np.inf
    for _ in range(200000):
        w = shifted @ v
        q = w / v
        lo, hi = q.min() - 1.0, q.max() - 1.0
        v = w / w.max()
        if hi - lo <= _POWER_TOL * max(hi, 1.0):
            break
    return float(0.5 * (lo + hi))


def _charpoly_root(m: TransitionMatrix, guess: float) -> float:
    """Largest real root of the characteristic polynomial, by bisection."""
    coeffs = np.poly(m.to_array().astype(float))
    left = guess - 1e-6
    right = float(max(sum(row) for row in m.entries)) + 1.0
    p = lambda x: np.polyval(coeffs, x)
    if p(left) > 0:
        return float("nan")
    for _ in range(200):
        mid = 0.5 * (left + right)
        if p(mid) > 0:
            right = mid
        else:
            left = mid
    return float(0.5 * (left + right))


def class_spectral_radius(m: TransitionMatrix) -> float:
    """Spectral radius of an irreducible matrix (1.0 exactly for a cycle)."""
    if _is_simple_cycle(m):
        return 1.0
    lam = _perron_value(m)
    if m.size <= 8:
        check = _charpoly_root(m, lam)
        if not math.isnan(check) and abs(check - lam) > 1e-8 * max(lam, 1.0):
            raise ArithmeticError(
                f"spectral radius disagreement: power iteration {lam}, polynomial {check}"
            )
    return lam


def spectral_radius(m: TransitionMatrix) -> float:
    """Largest spectral radius over the communicating classes (0 if nilpotent)."""
    cs = communicating_classes(m)
    return max((class_spectral_radius(m.submatrix(c)) for c in cs.classes), default=0.0)


def matrix_entropy(m: TransitionMatrix) -> float:
    """log of the spectral radius; 0 when the matrix carries no exponential growth."""
    lam = spectral_radius(m)
    return math.log(lam) if lam > 1.0 else 0.0


@dataclass(frozen=True)
class Sft:
    """One-sided shift of finite type over a named alphabet."""

    alphabet: tuple
    matrix: TransitionMatrix
    stranded: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(str(a) for a in self.alphabet))
        if len(self.alphabet) != self.matrix.size:
            raise ValueError("alphabet size must equal matrix size")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet symbols must be distinct")

    @cached_property
    def index(self) -> dict:
        return {a: i for i, a in enumerate(self.alphabet)}

    @cached_property
    def essential(self) -> tuple:
        return essential_symbols(self.matrix)

    @cached_property
    def essential_matrix(self) -> TransitionMatrix:
        """The matrix with all stranded symbols' rows and columns zeroed."""
        keep = set(self.essential)
        n = self.matrix.size
        return TransitionMatrix(
            tuple(
                tuple(self.matrix[i, j] if i in keep and j in keep else 0 for j in range(n))
                for i in range(n)
            )
        )

    def indices(self, word: Sequence[str]) -> list:
        try:
            return [self.index[str(a)] for a in word]
        except KeyError as exc:
            raise NotAWord(f"unknown symbol {exc.args[0]!r}") from None

    def allows(self, word: Sequence[str]) -> bool:
        idx = self.indices(word)
        ess = set(self.essential)
        if any(i not in ess for i in idx):
            return False
        return all(self.matrix[a, b] for a, b in zip(idx, idx[1:]))


def validate_sft(matrix, alphabet: Sequence[str] | None = None) -> Sft:
    """Build an Sft, reporting symbols that lie on no bi-infinite path.

    Stranded symbols are kept in the alphabet (user indexing is preserved) and
    listed in ``Sft.stranded``; counting operations ignore them.

    Raises
    ------
    EmptySubshift
        If no bi-infinite path exists.
    """
    m = TransitionMatrix.of(matrix)
    if alphabet is None:
        alphabet = tuple(str(i + 1) for i in range(m.size))
    ess = essential_symbols(m)
    if not ess:
        raise EmptySubshift("the transition graph has no cycle")
    alphabet = tuple(str(a) for a in alphabet)
    stranded = tuple(alphabet[i] for i in range(m.size) if i not in set(ess))
    return Sft(alphabet, m, stranded)


def is_mixing(s: Sft) -> bool:
    return is_primitive(s.essential_matrix.submatrix(s.essential))


def topological_entropy(s: Sft) -> float:
    return matrix_entropy(s.essential_matrix)


def _step(rows: tuple, vec: list, mask=None) -> list:
    """One step of v -> v M over exact integers, optionally masked."""
    n = len(rows)
    out = [0] * n
    for i, vi in enumerate(vec):
        if vi:
            for j in rows[i]:
                out[j] += vi
    if mask is not None:
        out = [v if mask[j] else 0 for j, v in enumerate(out)]
    return out


def count_words(s: Sft, n: int) -> int:
    """Exact number of allowed words of length n (n >= 1)."""
    if n < 1:
        raise ValueError("word length must be >= 1")
    succ = s.essential_matrix.successors
    ess = set(s.essential)
    vec = [1 if i in ess else 0 for i in range(s.matrix.size)]
    for _ in range(n - 1):
        vec = _step(succ, vec)
    return sum(vec)


class FactorMap:
    """A one-block factor map between two shifts of finite type.

    Parameters
    ----------
    domain, codomain : Sft
    symbol_map : mapping from every domain symbol to a codomain symbol
    distinguished : codomain symbol playing the role of the singleton clump.
        Defaults to ``"1"`` when that symbol has a one-point fiber, else to the
        first codomain symbol with a one-point fiber (``None`` if none exists).
    """

    def __init__(self, domain: Sft, codomain: Sft, symbol_map: Mapping, distinguished=None):
        self.domain = domain
        self.codomain = codomain
        self.symbol_map = {str(k): str(v) for k, v in symbol_map.items()}
        missing = set(domain.alphabet) - set(self.symbol_map)
        if missing:
            raise InvalidFactorMap(f"symbol map is not total, missing {sorted(missing)}")
        extra = set(self.symbol_map) - set(domain.alphabet)
        if extra:
            raise InvalidFactorMap(f"symbol map has unknown domain symbols {sorted(extra)}")
        unknown = set(self.symbol_map.values()) - set(codomain.alphabet)
        if unknown:
            raise InvalidFactorMap(f"symbol map hits unknown codomain symbols {sorted(unknown)}")
        if set(self.symbol_map.values()) != set(codomain.alphabet):
            raise InvalidFactorMap("symbol map is not surjective on the codomain alphabet")
        self._image = tuple(codomain.index[self.symbol_map[a]] for a in domain.alphabet)
        xm = domain.essential_matrix
        for i in range(xm.size):
            for j in xm.successors[i]:
                if not codomain.matrix[self._image[i], self._image[j]]:
                    raise InvalidFactorMap(
                        f"allowed step {domain.alphabet[i]}{domain.alphabet[j]} maps to a "
                        "forbidden codomain step"
                    )
        if distinguished is None:
            singles = [y for y in codomain.alphabet if len(self.fiber(y)) == 1]
            if "1" in singles:
                distinguished = "1"
            elif singles:
                distinguished = singles[0]
        elif str(distinguished) not in codomain.alphabet:
            raise InvalidFactorMap(f"distinguished symbol {distinguished!r} not in codomain")
        self.distinguished = None if distinguished is None else str(distinguished)
        self._memo: dict = {}
        self._lock = threading.Lock()

    @classmethod
    def onto_image(cls, domain: Sft, symbol_map: Mapping, codomain_alphabet=None, distinguished=None):
        """Factor map onto the one-step SFT spanned by the image of ``domain``."""
        sm = {str(k): str(v) for k, v in symbol_map.items()}
        if codomain_alphabet is None:
            codomain_alphabet = []
            for a in domain.alphabet:
                if sm[a] not in codomain_alphabet:
                    codomain_alphabet.append(sm[a])
        codomain_alphabet = [str(c) for c in codomain_alphabet]
        pos = {c: k for k, c in enumerate(codomain_alphabet)}
        k = len(codomain_alphabet)
        rows = [[0] * k for _ in range(k)]
        xm = domain.essential_matrix
        for i in range(xm.size):
            for j in xm.successors[i]:
                rows[pos[sm[domain.alphabet[i]]]][pos[sm[domain.alphabet[j]]]] = 1
        codomain = Sft(tuple(codomain_alphabet), TransitionMatrix.of(rows))
        return cls(domain, codomain, sm, distinguished)

    def __repr__(self):
        return f"FactorMap({self.symbol_map!r}, distinguished={self.distinguished!r})"

    def fiber(self, y: str) -> tuple:
        """Domain indices mapped to codomain symbol ``y``."""
        yi = self.codomain.index[str(y)]
        return tuple(i for i, t in enumerate(self._image) if t == yi)

    @property
    def image_index(self) -> tuple:
        return self._image

    @property
    def fiber_codomain_symbols(self) -> tuple:
        """Codomain symbols other than the distinguished one, in alphabet order."""
        return tuple(y for y in self.codomain.alphabet if y != self.distinguished)

    def memo(self, key, compute):
        """Cached value for ``key``; concurrent readers, single guarded writer."""
        try:
            return self._memo[key]
        except KeyError:
            pass
        value = compute()
        with self._lock:
            self._memo.setdefault(key, value)
        return value


def preimage_vector(pi: FactorMap, y: Sequence[str]) -> list:
    """Counts of domain words over ``y``, split by their final domain symbol."""
    yi = pi.codomain.indices(y)
    if not yi:
        raise NotAWord("empty word")
    xm = pi.domain.essential_matrix
    ess = set(pi.domain.essential)
    img = pi.image_index
    vec = [1 if (i in ess and img[i] == yi[0]) else 0 for i in range(xm.size)]
    succ = xm.successors
    for t in yi[1:]:
        vec = _step(succ, vec, [img[j] == t for j in range(xm.size)])
    return vec


def preimage_count(pi: FactorMap, y: Sequence[str]) -> int:
    """Exact number of allowed domain words mapped onto ``y``."""
    key = ("raw", tuple(str(a) for a in y))
    return pi.memo(key, lambda: sum(preimage_vector(pi, y)))


def preimage_count_adjusted(pi: FactorMap, y: Sequence[str]) -> tuple:
    """Preimage count with the empty-fiber conventions for return words.

    For a word ``1 w 1`` (``1`` the distinguished symbol, ``w`` free of it)
    with no preimage, the two-symbol convention substitutes 1, while with
    three or more codomain symbols the leading 1 is dropped first.  The empty
    return word ``1 1`` counts 1 when it has no preimage.

    Returns ``(count, convention)`` where ``convention`` is ``None``,
    ``"empty-fiber"`` or ``"drop-leading"``.
    """
    y = tuple(str(a) for a in y)
    count = preimage_count(pi, y)
    if count:
        return count, None
    one = pi.distinguished
    is_return = (
        len(y) >= 2 and y[0] == one and y[-1] == one and one not in y[1:-1]
    )
    if not is_return:
        return 0, None
    if len(pi.codomain.alphabet) >= 3 and len(y) > 2:
        dropped = preimage_count(pi, y[1:])
        if dropped:
            return dropped, "drop-leading"
    return 1, "empty-fiber"


def fiber_indices(pi: FactorMap, symbols: Iterable[str]) -> tuple:
    chosen = {str(s) for s in symbols}
    return tuple(i for i, a in enumerate(pi.domain.alphabet) if pi.symbol_map[a] in chosen)


def fiber_submatrix(pi: FactorMap, symbols: Iterable[str]) -> TransitionMatrix:
    """Restriction of the domain matrix to the fibers over ``symbols``."""
    idx = fiber_indices(pi, symbols)
    if not idx:
        raise ValueError("empty symbol set")
    return pi.domain.matrix.submatrix(idx)


def restricted_sft(s: Sft, indices: Sequence[int]) -> TransitionMatrix:
    return s.matrix.submatrix(indices)


def identity_map(s: Sft) -> FactorMap:
    return FactorMap(s, s, {a: a for a in s.alphabet})


def words(s: Sft, n: int):
    """All allowed words of length n, in lexicographic index order."""
    succ = s.essential_matrix.successors

    def extend(prefix):
        if len(prefix) == n:
            yield tuple(s.alphabet[i] for i in prefix)
            return
        for j in succ[prefix[-1]]:
            yield from extend(prefix + [j])

    for i in s.essential:
        yield from extend([i])


def matrix_power_entries(m: TransitionMatrix, n: int) -> list:
    """Exact integer entries of M**n as a list of lists."""
    size = m.size
    result = [[int(i == j) for j in range(size)] for i in range(size)]
    base = [list(r) for r in m.entries]

    def mul(a, b):
        return [[sum(a[i][k] * b[k][j] for k in range(size) if a[i][k]) for j in range(size)] for i in range(size)]

    while n:
        if n & 1:
            result = mul(result, base)
        base = mul(base, base)
        n >>= 1
    return result


class ReturnWords:
    """Incremental counter for preimages of return words ``1 w 1``.

    State vectors hold, for each domain symbol, the number of allowed domain
    words over the codomain word read so far that end in that symbol.  The
    vectors are plain lists of Python integers, so counts are exact.
    """

    def __init__(self, pi: FactorMap):
        if pi.distinguished is None or len(pi.fiber(pi.distinguished)) != 1:
            raise InvalidFactorMap("return words need a singleton distinguished symbol")
        self.pi = pi
        xm = pi.domain.essential_matrix
        self.size = xm.size
        self.succ = xm.successors
        self.image = pi.image_index
        self.one_y = pi.codomain.index[pi.distinguished]
        self.one_x = pi.fiber(pi.distinguished)[0]
        ess = set(pi.domain.essential)
        self._masks = [
            [self.image[j] == t and j in ess for j in range(self.size)]
            for t in range(pi.codomain.matrix.size)
        ]
        self.closers = tuple(i for i in range(self.size) if xm[i, self.one_x])
        self.three_or_more = pi.codomain.matrix.size >= 3

    def start(self) -> list:
        vec = [0] * self.size
        if self.one_x in set(self.pi.domain.essential):
            vec[self.one_x] = 1
        return vec

    def start_at(self, t: int) -> list:
        """Vector for words that begin at codomain index ``t``."""
        return [1 if m else 0 for m in self._masks[t]]

    def push(self, vec: list, t: int) -> list:
        return _step(self.succ, vec, self._masks[t])

    def close(self, vec: list) -> int:
        return sum(vec[i] for i in self.closers)

    def read(self, vec: list, word: Sequence[int]) -> list:
        for t in word:
            vec = self.push(vec, t)
        return vec

    def raw(self, word: Sequence[int]) -> int:
        """Exact count of domain words over ``1 w 1``; ``word`` holds codomain indices."""
        if not word:
            return 1 if self.pi.domain.matrix[self.one_x, self.one_x] else 0
        return self.close(self.read(self.start(), word))

    def adjusted(self, word: Sequence[int], raw: int | None = None) -> int:
        """Count of ``1 w 1`` under the empty-fiber conventions (never zero)."""
        if not word:
            return 1
        c = self.raw(word) if raw is None else raw
        if c:
            return c
        if self.three_or_more:
            c = self.close(self.read(self.start_at(word[0]), word[1:]))
            if c:
                return c
        return 1

    def fiber_words(self, max_len: int, limit: int | None = None):
        """Walk the codomain words avoiding the distinguished symbol.

        Yields ``(word, raw, adjusted)`` for every allowed word of length
        1..max_len in breadth-first order, where ``raw`` and ``adjusted`` are the counts of ``1 w 1``.
        Raises ``OverflowError`` once more than ``limit`` words were produced.
        """
        ym = self.pi.codomain.matrix
        fiber = [t for t in range(ym.size) if t != self.one_y]
        produced = 0
        queue = deque(((t,), self.push(self.start(), t), self.start_at(t)) for t in fiber)
        while queue:
            word, v_one, v_free = queue.popleft()
            raw = self.close(v_one)
            if raw:
                adj = raw
            else:
                adj = self.close(v_free) if self.three_or_more else 0
                adj = adj or 1
            produced += 1
            if limit is not None and produced > limit:
                raise OverflowError("too many fiber words")
            yield word, raw, adj
            if len(word) < max_len:
                last = word[-1]
                for t in fiber:
                    if ym[last, t]:
                        queue.append((word + (t,), self.push(v_one, t), self.push(v_free, t)))
