"""Knapsack sets relative to subgroups of free groups.

The pipeline turns a knapsack expression e and a finitely generated subgroup
A into the exact solution set {valuations | value of e lies in A}:

* power bases are made cyclically reduced (conjugators move into the
  neighbouring constants), trivial powers split off as free coordinates;
* the closed polygon whose sides are the power languages u*, interleaved
  with the constants and closed by the inverted subgroup language, yields a
  set of per-side letter counts;
* the polygon set is computed recursively: a two-sided base case through a
  bounded-ball transducer over the tree, and a case split that cuts the
  polygon along short words (length controlled by the radius ``kappa``;
  in a tree the sides of a closed polygon overlap, so the default radius 0
  is exercised by the stabilization tests rather than assumed).

Every recursive combination is positive (products, coordinate sums, unions),
so the whole recursion runs on explicit semilinear representations; automata
enter only for the final low-dimensional coordinate division.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .automata import (
    Nfa,
    Transducer,
    cycle_nfa,
    invert_nfa,
    language_between,
    parikh,
    parikh_weighted,
    transducer_to_pair_nfa,
    trim,
    union_nfa,
    word_nfa,
)
from .freegroup import StallingsGraph, subgroup_language
from .presburger import (
    EffortExceeded,
    SemilinearRep,
    SolutionSet,
    and_,
    compile_formula,
    eq,
    extend_tracks,
    product_automaton,
    project_track,
    rep_empty,
    rep_full,
    rep_map,
    rep_point,
    rep_product,
    rep_union,
    term,
)
from .words import (
    Alphabet,
    KnapsackExpr,
    Word,
    cyclic_decompose,
    free_reduce,
    inv_letter,
    is_reduced,
    parikh_vector,
)


@dataclass(frozen=True)
class RelKnapConfig:
    """Tuning knobs for the polygon recursion.

    kappa: cutting-word radius; results are sound for every value and the
    stabilization property (kappa vs kappa + 1) is the completeness check.
    ball: transducer ball bound; None derives |v1| + |v2| + 2 per base case.
    """

    kappa: int = 0
    ball: Optional[int] = None
    max_transducer_states: int = 400_000
    max_polygon_nodes: int = 100_000
    star_cap: int = 4000

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


@dataclass(frozen=True)
class SideSpec:
    """One polygon side: a designated-state-pair language or a constant word,
    followed by a constant."""

    nfa: Optional[Nfa]
    p: Optional[int]
    q: Optional[int]
    word: Optional[Word]
    after: Word

    @staticmethod
    def of_language(nfa: Nfa, p: int, q: int, after: Word) -> "SideSpec":
        return SideSpec(nfa, p, q, None, after)

    @staticmethod
    def of_word(word: Word, after: Word) -> "SideSpec":
        return SideSpec(None, None, None, word, after)


# ---------------------------------------------------------------------------
# Ball transducer (the biautomatic relation, specialized to trees)
# ---------------------------------------------------------------------------


def ball_transducer(v1: Word, l1: Nfa, v2: Word, l2: Nfa, ball: int,
                    max_states: int = 400_000) -> Transducer:
    """Transducer for {(u1, u2) in L1 x L2 | v1 u1 = u2 v2 in the free group}.

    States are freely reduced words g with |g| <= ball, tracking
    g = red(b^-1 v1 a) for the consumed prefixes a of u1 and b of u2; reading
    x on tape one maps g to red(g x), reading y on tape two maps g to
    red(y^-1 g).  Acceptance at g = red(v2).  Sound for every ball bound;
    the default |v1| + |v2| + 2 is validated by the brute-force suites.
    """
    if ball < len(free_reduce(v1)) + len(free_reduce(v2)):
        raise ValueError("ball below |v1| + |v2|")
    g0 = free_reduce(v1).letters
    gf = free_reduce(v2).letters
    adj1 = l1.out_edges()
    adj2 = l2.out_edges()

    states: dict[tuple, int] = {}
    order: list[tuple] = []
    trans: set[tuple[int, Optional[int], Optional[int], int]] = set()

    def sid(g, s1, s2) -> int:
        key = (g, s1, s2)
        if key not in states:
            states[key] = len(order)
            order.append(key)
            if len(order) > max_states:
                raise EffortExceeded("transducer ball exceeded state cap", len(order))
        return states[key]

    stack = []
    initial = set()
    for s1 in l1.initial:
        for s2 in l2.initial:
            i = sid(g0, s1, s2)
            initial.add(i)
            stack.append(i)
    seen = set(initial)
    while stack:
        i = stack.pop()
        g, s1, s2 = order[i]
        for x, t1 in adj1[s1]:
            if g and g[-1] == inv_letter(x):
                ng = g[:-1]
            else:
                ng = g + (x,)
            if len(ng) > ball:
                continue
            j = sid(ng, t1, s2)
            trans.add((i, x, None, j))
            if j not in seen:
                seen.add(j)
                stack.append(j)
        for y, t2 in adj2[s2]:
            yi = inv_letter(y)
            if g and g[0] == y:
                ng = g[1:]
            else:
                ng = (yi,) + g
            if len(ng) > ball:
                continue
            j = sid(ng, s1, t2)
            trans.add((i, None, y, j))
            if j not in seen:
                seen.add(j)
                stack.append(j)

    finals = frozenset(
        i for i, (g, s1, s2) in enumerate(order)
        if g == gf and s1 in l1.finals and s2 in l2.finals
    )
    return Transducer(
        max(l1.n_letters, l2.n_letters), len(order), frozenset(initial), finals,
        frozenset(trans),
    )


def pair_parikh(v1: Word, l1: Nfa, v2: Word, l2: Nfa,
                cfg: RelKnapConfig = RelKnapConfig()) -> SolutionSet:
    """Exact set {(P(u1), P(u2)) | u1 in L1, u2 in L2, v1 u1 = u2 v2}."""
    alphabet = v1.alphabet
    ball = cfg.ball
    if ball is None:
        ball = len(free_reduce(v1)) + len(free_reduce(v2)) + 2
    t = ball_transducer(v1, l1, v2, l2, ball, cfg.max_transducer_states)
    pnfa = trim(transducer_to_pair_nfa(t))
    names = alphabet.letter_names() + tuple(n + "'" for n in alphabet.letter_names())
    rep = parikh(pnfa, names, star_cap=cfg.star_cap)
    return SolutionSet(names, rep=rep)


# ---------------------------------------------------------------------------
# The polygon recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Side:
    p: int
    q: int
    tracked: tuple[int, ...]  # letter ids counted for this side


_PAIR_CACHE: dict = {}


def _nfa_sig(nfa: Nfa) -> tuple:
    """Structural signature of a trimmed automaton (trim renumbers by sorted
    state id, so identically built fragments coincide across engines)."""
    return (
        nfa.n_letters, nfa.n_states, tuple(sorted(nfa.initial)),
        tuple(sorted(nfa.finals)), tuple(sorted(nfa.transitions)),
    )


class _PolygonEngine:
    """Computes P(sides, constants): the Parikh tuples (restricted to each
    side's tracked letters) of words w_i in L_{p_i,q_i} with
    w_1 c_1 w_2 c_2 ... w_n c_n freely equal to the empty word."""

    def __init__(self, nfa: Nfa, alphabet: Alphabet, cfg: RelKnapConfig):
        self.nfa = nfa
        self.alphabet = alphabet
        self.cfg = cfg
        self.memo: dict = {}
        self.nodes = 0
        adj = nfa.out_edges()
        self.adj = adj
        self._reach: dict[int, frozenset[int]] = {}
        self._coreach: dict[int, frozenset[int]] = {}
        radj: list[list[int]] = [[] for _ in range(nfa.n_states)]
        for p, a, q in nfa.transitions:
            radj[q].append(p)
        self.radj = radj
        self._cuts: dict[int, list[tuple[int, ...]]] = {}

    def reach(self, p: int) -> frozenset[int]:
        if p not in self._reach:
            seen = {p}
            stack = [p]
            while stack:
                x = stack.pop()
                for _, y in self.adj[x]:
                    if y not in seen:
                        seen.add(y)
                        stack.append(y)
            self._reach[p] = frozenset(seen)
        return self._reach[p]

    def coreach(self, q: int) -> frozenset[int]:
        if q not in self._coreach:
            seen = {q}
            stack = [q]
            while stack:
                x = stack.pop()
                for y in self.radj[x]:
                    if y not in seen:
                        seen.add(y)
                        stack.append(y)
            self._coreach[q] = frozenset(seen)
        return self._coreach[q]

    def split_states(self, side: _Side) -> list[int]:
        return sorted(self.reach(side.p) & self.coreach(side.q))

    def cut_words(self, max_len: int) -> list[tuple[int, ...]]:
        """Freely reduced words of length at most max_len, as letter tuples."""
        if max_len not in self._cuts:
            out: list[tuple[int, ...]] = [()]
            level: list[tuple[int, ...]] = [()]
            for _ in range(max_len):
                nxt = []
                for t in level:
                    for a in range(self.alphabet.size):
                        if not t or t[-1] != inv_letter(a):
                            nxt.append(t + (a,))
                out.extend(nxt)
                level = nxt
            self._cuts[max_len] = out
        return self._cuts[max_len]

    # -- helpers -------------------------------------------------------------

    def _dims(self, sides: Sequence[_Side]) -> list[int]:
        return [len(s.tracked) for s in sides]

    def _word(self, letters: tuple[int, ...]) -> Word:
        return Word(self.alphabet, letters)

    def _red(self, *parts) -> tuple[int, ...]:
        out: list[int] = []
        for part in parts:
            letters = part.letters if isinstance(part, Word) else part
            for a in letters:
                if out and out[-1] == inv_letter(a):
                    out.pop()
                else:
                    out.append(a)
        return tuple(out)

    def _inv(self, letters: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(inv_letter(a) for a in reversed(letters))

    def _accepts_between(self, p: int, q: int, letters: tuple[int, ...]) -> bool:
        current = {p}
        for a in letters:
            current = {y for x in current for (b, y) in self.adj[x] if b == a}
            if not current:
                return False
        return q in current

    # -- main recursion --------------------------------------------------------

    def polygon(self, sides: tuple[_Side, ...], consts: tuple[tuple[int, ...], ...]) -> SemilinearRep:
        key = (sides, consts)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.nodes += 1
        if self.nodes > self.cfg.max_polygon_nodes:
            raise EffortExceeded("polygon node cap exceeded", self.nodes)
        n = len(sides)
        names = tuple(f"c{i}" for i in range(sum(self._dims(sides))))
        if n == 0:
            result = rep_point(names, ())
        elif n == 1:
            result = self._base_one(sides[0], consts[0], names)
        elif n == 2:
            result = self._base_pair(sides, consts, names)
        else:
            result = self._recurse(sides, consts, names)
        self.memo[key] = result
        return result

    def _base_one(self, side: _Side, const: tuple[int, ...], names) -> SemilinearRep:
        # w c = 1 with w reduced forces w = red(c^-1) as words
        w = self._red(self._inv(const))
        if self._accepts_between(side.p, side.q, w):
            counts = tuple(sum(1 for a in w if a == t) for t in side.tracked)
            return rep_point(names, counts)
        return rep_empty(names)

    def _base_pair(self, sides, consts, names) -> SemilinearRep:
        # w1 c1 w2 c2 = 1  <=>  c1 u1 = u2 red(c2^-1) for u1 = w2, u2 = w1^-1
        s1, s2 = sides
        c1, c2 = consts
        l1 = language_between(self.nfa, s2.p, s2.q)
        inv_map = [inv_letter(a) for a in range(self.alphabet.size)]
        l2 = trim(invert_nfa(language_between(self.nfa, s1.p, s1.q), inv_map))
        if l1.is_empty() or l2.is_empty():
            return rep_empty(names)
        key = (
            _nfa_sig(l1), _nfa_sig(l2), c1, c2, s1.tracked, s2.tracked,
            self.cfg.ball, self.cfg.star_cap,
        )
        hit = _PAIR_CACHE.get(key)
        if hit is not None:
            return SemilinearRep(names, hit.components)
        v1 = self._word(self._red(c1))
        v2 = self._word(self._red(self._inv(c2)))
        ball = self.cfg.ball
        if ball is None:
            ball = len(v1) + len(v2) + 2
        ball = max(ball, len(v1) + len(v2))
        t = ball_transducer(v1, l1, v2, l2, ball, self.cfg.max_transducer_states)
        pnfa = trim(transducer_to_pair_nfa(t))
        # tape-one letters advance w2, tape-two letters advance w1^-1
        k = self.alphabet.size
        d1, d2 = len(s1.tracked), len(s2.tracked)
        vectors = []
        for letter in range(2 * k):
            vec = [0] * (d1 + d2)
            if letter < k:
                if letter in s2.tracked:
                    vec[d1 + s2.tracked.index(letter)] = 1
            else:
                orig = inv_letter(letter - k)
                if orig in s1.tracked:
                    vec[s1.tracked.index(orig)] = 1
            vectors.append(tuple(vec))
        rep = parikh_weighted(pnfa, names, vectors, star_cap=self.cfg.star_cap)
        _PAIR_CACHE[key] = rep
        return rep

    def _recurse(self, sides, consts, names) -> SemilinearRep:
        n = len(sides)
        dims = self._dims(sides)
        acc = rep_empty(names)
        terms: list[SemilinearRep] = []

        def combine(sub1: SemilinearRep, sub2: SemilinearRep,
                    mapping: list[list[tuple[int, int]]]) -> SemilinearRep:
            prod = rep_product(sub1, sub2)
            off2 = sub1.dim
            groups = [
                [(c if src == 0 else c + off2) for src, c in grp] for grp in mapping
            ]
            return rep_map(prod, groups, names)

        kappa = self.cfg.kappa
        cuts_k = self.cut_words(kappa)
        cuts_2k1 = self.cut_words(2 * kappa + 1)

        # Case 1.1: cut from side 1 to a point on constant j (0-based j >= 2)
        for j in range(2, n):
            cj = consts[j]
            for r in self.split_states(sides[1]):
                for m in range(len(cj) + 1):
                    ca, cb = cj[:m], cj[m:]
                    for w in cuts_k:
                        sub1_sides = (sides[0], _Side(sides[1].p, r, sides[1].tracked)) + sides[j + 1 :]
                        sub1_consts = (consts[0], self._red(w, cb)) + consts[j + 1 :]
                        sub2_sides = (_Side(r, sides[1].q, sides[1].tracked),) + sides[2 : j + 1]
                        sub2_consts = consts[1:j] + (self._red(ca, self._inv(w)),)
                        r1 = self.polygon(sub1_sides, sub1_consts)
                        if r1.is_empty():
                            continue
                        r2 = self.polygon(sub2_sides, sub2_consts)
                        if r2.is_empty():
                            continue
                        mapping = self._mapping_case11(sides, j)
                        terms.append(combine(r1, r2, mapping))

        # Case 1.2: cut from side 1 to a point on side j (0-based j >= 3)
        for j in range(3, n):
            for r in self.split_states(sides[1]):
                for rp in self.split_states(sides[j]):
                    for w in cuts_k:
                        sub1_sides = (
                            sides[0],
                            _Side(sides[1].p, r, sides[1].tracked),
                            _Side(rp, sides[j].q, sides[j].tracked),
                        ) + sides[j + 1 :]
                        sub1_consts = (consts[0], w, consts[j]) + consts[j + 1 :]
                        sub2_sides = (
                            _Side(r, sides[1].q, sides[1].tracked),
                        ) + sides[2:j] + (_Side(sides[j].p, rp, sides[j].tracked),)
                        sub2_consts = consts[1 : j] + (self._inv(w),)
                        r1 = self.polygon(sub1_sides, sub1_consts)
                        if r1.is_empty():
                            continue
                        r2 = self.polygon(sub2_sides, sub2_consts)
                        if r2.is_empty():
                            continue
                        mapping = self._mapping_case12(sides, j)
                        terms.append(combine(r1, r2, mapping))

        # Case 2.1: cut from constant 0 to constant 1
        c0, c1 = consts[0], consts[1]
        for m0 in range(len(c0) + 1):
            c0a, c0b = c0[:m0], c0[m0:]
            for m1 in range(len(c1) + 1):
                c1a, c1b = c1[:m1], c1[m1:]
                for w in cuts_2k1:
                    sub1_sides = (sides[1],)
                    sub1_consts = (self._red(c1a, self._inv(w), c0b),)
                    sub2_sides = (sides[0],) + sides[2:]
                    sub2_consts = (self._red(c0a, w, c1b),) + consts[2:]
                    r1 = self.polygon(sub1_sides, sub1_consts)
                    if r1.is_empty():
                        continue
                    r2 = self.polygon(sub2_sides, sub2_consts)
                    if r2.is_empty():
                        continue
                    mapping = self._mapping_case21(sides)
                    terms.append(combine(r1, r2, mapping))

        # Case 2.2: cut from side 0 to constant 1
        for r in self.split_states(sides[0]):
            for m1 in range(len(c1) + 1):
                c1a, c1b = c1[:m1], c1[m1:]
                for w in cuts_2k1:
                    subA_sides = (_Side(r, sides[0].q, sides[0].tracked), sides[1])
                    subA_consts = (consts[0], self._red(c1a, self._inv(w)))
                    subB_sides = (_Side(sides[0].p, r, sides[0].tracked),) + sides[2:]
                    subB_consts = (self._red(w, c1b),) + consts[2:]
                    rA = self.polygon(subA_sides, subA_consts)
                    if rA.is_empty():
                        continue
                    rB = self.polygon(subB_sides, subB_consts)
                    if rB.is_empty():
                        continue
                    mapping = self._mapping_case22(sides)
                    terms.append(combine(rA, rB, mapping))

        # Case 2.3: cut from constant 0 to side 2
        for m0 in range(len(c0) + 1):
            c0a, c0b = c0[:m0], c0[m0:]
            for r in self.split_states(sides[2]):
                for w in cuts_2k1:
                    subA_sides = (sides[1], _Side(sides[2].p, r, sides[2].tracked))
                    subA_consts = (consts[1], self._red(self._inv(w), c0b))
                    subB_sides = (sides[0], _Side(r, sides[2].q, sides[2].tracked)) + sides[3:]
                    subB_consts = (self._red(c0a, w), consts[2]) + consts[3:]
                    rA = self.polygon(subA_sides, subA_consts)
                    if rA.is_empty():
                        continue
                    rB = self.polygon(subB_sides, subB_consts)
                    if rB.is_empty():
                        continue
                    mapping = self._mapping_case23(sides)
                    terms.append(combine(rA, rB, mapping))

        # Case 2.4: cut from side 0 through side 1 to side 2
        for r1 in self.split_states(sides[0]):
            for r2 in self.split_states(sides[1]):
                for r3 in self.split_states(sides[2]):
                    for w1 in self.cut_words(kappa):
                        for w2 in self.cut_words(kappa + 1):
                            w = self._red(self._inv(w1), w2)
                            s1_sides = (_Side(r1, sides[0].q, sides[0].tracked),
                                        _Side(sides[1].p, r2, sides[1].tracked))
                            s1_consts = (consts[0], w1)
                            s2_sides = (_Side(r2, sides[1].q, sides[1].tracked),
                                        _Side(sides[2].p, r3, sides[2].tracked))
                            s2_consts = (consts[1], self._inv(w2))
                            s3_sides = (_Side(sides[0].p, r1, sides[0].tracked),
                                        _Side(r3, sides[2].q, sides[2].tracked)) + sides[3:]
                            s3_consts = (w, consts[2]) + consts[3:]
                            rS1 = self.polygon(s1_sides, s1_consts)
                            if rS1.is_empty():
                                continue
                            rS2 = self.polygon(s2_sides, s2_consts)
                            if rS2.is_empty():
                                continue
                            rS3 = self.polygon(s3_sides, s3_consts)
                            if rS3.is_empty():
                                continue
                            terms.append(self._combine_case24(sides, rS1, rS2, rS3, names))

        comps: list = []
        seen = set()
        for t in terms:
            if t.components not in seen:
                seen.add(t.components)
                comps.extend(t.components)
        return SemilinearRep(names, tuple(comps)).pruned()

    # -- coordinate mappings ---------------------------------------------------
    # A mapping lists, for each output side in order, the (factor, coordinate)
    # pairs to sum: factor 0 is the first sub-result, factor 1 the second.

    def _block(self, sub_sides, idx, src) -> list[tuple[int, int]]:
        off = 0
        for s in sub_sides[:idx]:
            off += len(s.tracked)
        return [(src, off + t) for t in range(len(sub_sides[idx].tracked))]

    def _mapping_case11(self, sides, j):
        n = len(sides)
        sub1_sides = (sides[0], sides[1]) + sides[j + 1 :]
        sub2_sides = (sides[1],) + sides[2 : j + 1]
        mapping = []
        out = []
        # side 0
        out.append(self._block(sub1_sides, 0, 0))
        # side 1: first half from sub1 position 1, second from sub2 position 0
        half1 = self._block(sub1_sides, 1, 0)
        half2 = self._block(sub2_sides, 0, 1)
        out.append([list(pair) for pair in zip(half1, half2)])
        # sides 2..j from sub2 positions 1..j-1
        for i in range(2, j + 1):
            out.append(self._block(sub2_sides, i - 1, 1))
        # sides j+1.. from sub1 positions 2..
        for i in range(j + 1, n):
            out.append(self._block(sub1_sides, 2 + (i - j - 1), 0))
        return self._flatten(sides, out)

    def _mapping_case12(self, sides, j):
        n = len(sides)
        sub1_sides = (sides[0], sides[1], sides[j]) + sides[j + 1 :]
        sub2_sides = (sides[1],) + sides[2:j] + (sides[j],)
        out = []
        out.append(self._block(sub1_sides, 0, 0))
        half1 = self._block(sub1_sides, 1, 0)
        half2 = self._block(sub2_sides, 0, 1)
        out.append([list(pair) for pair in zip(half1, half2)])
        for i in range(2, j):
            out.append(self._block(sub2_sides, i - 1, 1))
        dj1 = self._block(sub2_sides, len(sub2_sides) - 1, 1)
        dj2 = self._block(sub1_sides, 2, 0)
        out.append([list(pair) for pair in zip(dj1, dj2)])
        for i in range(j + 1, n):
            out.append(self._block(sub1_sides, 3 + (i - j - 1), 0))
        return self._flatten(sides, out)

    def _mapping_case21(self, sides):
        n = len(sides)
        sub1_sides = (sides[1],)
        sub2_sides = (sides[0],) + sides[2:]
        out = [self._block(sub2_sides, 0, 1), self._block(sub1_sides, 0, 0)]
        for i in range(2, n):
            out.append(self._block(sub2_sides, i - 1, 1))
        return self._flatten(sides, out)

    def _mapping_case22(self, sides):
        n = len(sides)
        subA_sides = (sides[0], sides[1])
        subB_sides = (sides[0],) + sides[2:]
        out = []
        yz = [list(pair) for pair in zip(self._block(subB_sides, 0, 1),
                                         self._block(subA_sides, 0, 0))]
        out.append(yz)
        out.append(self._block(subA_sides, 1, 0))
        for i in range(2, n):
            out.append(self._block(subB_sides, i - 1, 1))
        return self._flatten(sides, out)

    def _mapping_case23(self, sides):
        n = len(sides)
        subA_sides = (sides[1], sides[2])
        subB_sides = (sides[0], sides[2]) + sides[3:]
        out = []
        out.append(self._block(subB_sides, 0, 1))
        out.append(self._block(subA_sides, 0, 0))
        yz = [list(pair) for pair in zip(self._block(subA_sides, 1, 0),
                                         self._block(subB_sides, 1, 1))]
        out.append(yz)
        for i in range(3, n):
            out.append(self._block(subB_sides, 2 + (i - 3), 1))
        return self._flatten(sides, out)

    def _flatten(self, sides, out) -> list[list[tuple[int, int]]]:
        """Expand per-side groupings into per-coordinate groups."""
        groups: list[list[tuple[int, int]]] = []
        for side, grp in zip(sides, out):
            d = len(side.tracked)
            if not grp:
                assert d == 0
                continue
            if isinstance(grp[0], list):
                # summed halves, one entry per coordinate
                assert len(grp) == d
                groups.extend([list(g) for g in grp])
            else:
                assert len(grp) == d
                groups.extend([[g] for g in grp])
        return groups

    def _combine_case24(self, sides, rS1, rS2, rS3, names) -> SemilinearRep:
        n = len(sides)
        prod = rep_product(rep_product(rS1, rS2), rS3)
        s1_sides = (sides[0], sides[1])
        s2_sides = (sides[1], sides[2])
        s3_sides = (sides[0], sides[2]) + sides[3:]
        o1, o2, o3 = 0, rS1.dim, rS1.dim + rS2.dim

        def block(sub_sides, idx, off):
            b = 0
            for s in sub_sides[:idx]:
                b += len(s.tracked)
            return [off + b + t for t in range(len(sub_sides[idx].tracked))]

        groups: list[list[int]] = []
        # side 0 = S3 part 0 + S1 part 0
        for x, y in zip(block(s3_sides, 0, o3), block(s1_sides, 0, o1)):
            groups.append([x, y])
        # side 1 = S1 part 1 + S2 part 0
        for x, y in zip(block(s1_sides, 1, o1), block(s2_sides, 0, o2)):
            groups.append([x, y])
        # side 2 = S2 part 1 + S3 part 1
        for x, y in zip(block(s2_sides, 1, o2), block(s3_sides, 1, o3)):
            groups.append([x, y])
        for i in range(3, n):
            groups.extend([[c] for c in block(s3_sides, 2 + (i - 3), o3)])
        return rep_map(prod, groups, names)


# ---------------------------------------------------------------------------
# Public polygon entry point
# ---------------------------------------------------------------------------


def _check_geodesic(nfa: Nfa, sample_len: int = 6):
    for w in nfa.words(sample_len):
        ww = [a for a in w]
        for i in range(len(ww) - 1):
            if ww[i + 1] == inv_letter(ww[i]):
                raise ValueError("side language is not geodesic (unreduced word accepted)")


def polygon_set(sides: Sequence[SideSpec], alphabet: Alphabet,
                cfg: RelKnapConfig = RelKnapConfig()) -> SolutionSet:
    """Parikh tuples of (w_1, ..., w_n) with w_i in the i-th side language and
    w_1 v_1 ... w_n v_n freely trivial; all letters of every side tracked."""
    k = alphabet.size
    nfas = []
    pairs = []
    for spec in sides:
        if spec.word is not None:
            w = free_reduce(spec.word)
            nfas.append(word_nfa(k, w.letters))
            pairs.append((0, len(w.letters)))
        else:
            _check_geodesic(spec.nfa)
            nfas.append(spec.nfa)
            pairs.append((spec.p, spec.q))
    shared = nfas[0]
    offsets = [0]
    for x in nfas[1:]:
        offsets.append(shared.n_states)
        shared = union_nfa(shared, x)
    engine = _PolygonEngine(shared, alphabet, cfg)
    tracked = tuple(range(k))
    eng_sides = tuple(
        _Side(pairs[i][0] + offsets[i], pairs[i][1] + offsets[i], tracked)
        for i in range(len(sides))
    )
    consts = tuple(free_reduce(s.after).letters for s in sides)
    rep = engine.polygon(eng_sides, consts)
    names = tuple(
        f"w{i + 1}.{name}" for i in range(len(sides)) for name in alphabet.letter_names()
    )
    return SolutionSet(names, rep=SemilinearRep(names, rep.components))


# ---------------------------------------------------------------------------
# Knapsack relative to a subgroup
# ---------------------------------------------------------------------------


def normalize(e: KnapsackExpr) -> tuple[KnapsackExpr, dict[str, int], dict[str, int], tuple[str, ...]]:
    """Rewrite every power over a cyclically reduced nonempty base.

    Free-group specialization: u^x = s c^x s^-1 moves the conjugator into the
    neighbouring constants, so every scale is 1 and every shift 0; powers of
    trivial elements disappear and their variables are reported as free.
    """
    consts = [free_reduce(e.consts[0])]
    powers: list[Word] = []
    variables: list[str] = []
    free_vars: list[str] = []
    for u, x, v in zip(e.powers, e.variables, e.consts[1:]):
        s, c = cyclic_decompose(u)
        if not c:
            free_vars.append(x)
            consts[-1] = free_reduce(consts[-1] * v)
            continue
        consts[-1] = free_reduce(consts[-1] * s)
        powers.append(c)
        variables.append(x)
        consts.append(free_reduce(s.inverse() * v))
    e2 = KnapsackExpr(tuple(consts), tuple(powers), tuple(variables))
    scales = {x: 1 for x in variables}
    shifts = {x: 0 for x in variables}
    return e2, scales, shifts, tuple(free_vars)


def divide_coords(s: SolutionSet, ells: Sequence[int]) -> SolutionSet:
    """{v | (ells_1 v_1, ..., ells_n v_n) in s}."""
    if len(ells) != s.dim:
        raise ValueError("one divisor per coordinate")
    if any(l < 1 for l in ells):
        raise ValueError("divisors must be positive")
    if all(l == 1 for l in ells):
        return s
    scaled = [f"{x}*" for x in s.vars]
    order = list(s.vars) + scaled
    phi = and_(
        *(eq(term((y, 1)), term((x, l))) for x, y, l in zip(s.vars, scaled, ells))
    )
    rel = compile_formula(phi, order)
    src = extend_tracks(s.dfa, range(s.dim, 2 * s.dim), 2 * s.dim)
    both = product_automaton(rel, src, lambda a, b: a and b)
    for _ in range(s.dim):
        both = project_track(both, s.dim)
    return SolutionSet(s.vars, dfa=both)


_ENGINE_CACHE: dict = {}


def _cached_engine(key, shared: Nfa, alphabet: Alphabet, cfg: RelKnapConfig) -> "_PolygonEngine":
    """Engines (and with them polygon memo tables and base-pair results) are
    shared process-wide for identical side structure and configuration."""
    engine = _ENGINE_CACHE.get(key)
    if engine is None:
        engine = _PolygonEngine(shared, alphabet, cfg)
        _ENGINE_CACHE[key] = engine
    else:
        engine.nodes = 0
    return engine


def rel_sol(e: KnapsackExpr, graph: StallingsGraph,
            cfg: RelKnapConfig = RelKnapConfig()) -> SolutionSet:
    """Exact {valuation | value of e lies in the subgroup of graph}."""
    if not e.is_knapsack():
        raise ValueError("rel_sol needs pairwise distinct variables")
    alphabet = e.alphabet
    if graph.alphabet != alphabet:
        raise ValueError("expression and subgroup alphabets differ")
    e2, _, _, free_vars = normalize(e)
    n = len(e2.powers)

    if n == 0:
        value = alphabet.epsilon()
        for c in e2.consts:
            value = value * c
        base: SolutionSet = (
            SolutionSet.point((), ()) if graph.contains(value) else SolutionSet.empty(())
        )
        result = base
    else:
        k = alphabet.size
        whole_lang = subgroup_language(graph)
        inv_map = [inv_letter(a) for a in range(k)]
        sub_inv = trim(invert_nfa(whole_lang, inv_map))
        trivial_sub = sub_inv.n_states <= 1 and not sub_inv.transitions

        nfas = [cycle_nfa(k, c.letters) for c in e2.powers]
        pairs = [(0, 0) for _ in nfas]
        tracked_letters = []
        ells = []
        for c in e2.powers:
            counts = parikh_vector(c)
            j = min(
                (a for a in range(k) if counts[a]), key=lambda a: counts[a]
            )
            tracked_letters.append(j)
            ells.append(counts[j])

        shared = nfas[0]
        offsets = [0]
        for x in nfas[1:]:
            offsets.append(shared.n_states)
            shared = union_nfa(shared, x)
        sides = [
            _Side(pairs[i][0] + offsets[i], pairs[i][1] + offsets[i], (tracked_letters[i],))
            for i in range(n)
        ]
        # constants between power sides; the subgroup side (when nontrivial)
        # closes the polygon, absorbing the leading constant
        consts = [c.letters for c in e2.consts[1:]]
        engine_key = (
            alphabet.gens,
            tuple(c.letters for c in e2.powers),
            graph.canonical_signature(),
            cfg.kappa,
            cfg.ball,
            cfg.max_transducer_states,
        )
        if trivial_sub:
            consts[-1] = free_reduce(
                Word(alphabet, consts[-1]) * e2.consts[0]
            ).letters
            engine = _cached_engine(engine_key, shared, alphabet, cfg)
            rep = engine.polygon(tuple(sides), tuple(consts))
        else:
            off = shared.n_states
            shared = union_nfa(shared, sub_inv)
            consts.append(free_reduce(e2.consts[0]).letters)
            engine = _cached_engine(engine_key, shared, alphabet, cfg)
            rep = rep_empty(tuple(f"c{i}" for i in range(n)))
            for i0 in sorted(sub_inv.initial):
                for f in sorted(sub_inv.finals):
                    trial = sides + [_Side(off + i0, off + f, ())]
                    rep = rep_union(rep, engine.polygon(tuple(trial), tuple(consts)))

        temp = tuple(f"s{i}" for i in range(n))
        scaled = SolutionSet(temp, rep=SemilinearRep(temp, rep.components))
        divided = divide_coords(scaled, ells)
        result = divided.rename(dict(zip(temp, e2.variables)))

    if free_vars:
        result = result.oplus(SolutionSet.full(free_vars))
    want = [x for x in e.var_names]
    return result.aligned_to(want)
