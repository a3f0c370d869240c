"""HNN-extensions of free groups where the stable letters centralize
finitely generated associated subgroups.

Words mix base letters with stable letters; a pin is a factor t^-1 w t or
t w t^-1 whose base-letter content lies in the subgroup associated with t,
and removing pins never changes the group element.  On top of the reduction
layer this module computes exact solution sets of knapsack and exponent
equations in the extension:

* ``britton_reduce`` / ``mult_reduce`` / ``equals_one`` are the word layer;
* ``well_behaved_decompose`` rewrites a power so its base stays pin-free for
  every exponent (junction pins are rotated out, conjugators accumulate);
* ``lemma2dim_set`` and ``remark1dim_set`` solve a single base-group
  constraint ``left e right in G`` by matching stable letters of the two
  outer factors and reducing every matched slice to a subgroup constraint in
  the free base group;
* ``sol`` enumerates refinements of the expression entries together with
  non-crossing matchings of the stable-letter-bearing pieces, conjoins the
  resulting slice constraints, and intersects with the solution set of the
  base-letter projection;
* ``exponent_sol`` layers repeated-variable handling and systems on top.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .freegroup import StallingsGraph, trivial_subgroup
from .presburger import (
    EffortExceeded,
    Formula,
    SolutionSet,
    Term,
    and_,
    eq,
    formula_to_set,
    le,
    lt,
    term,
    true_,
)
from .relknap import RelKnapConfig, rel_sol
from .words import Alphabet, KnapsackExpr, Word, free_reduce, inv_letter, is_reduced


class HnnGroup:
    """Free base group with stable letters acting trivially on associated
    finitely generated subgroups (one subgroup per stable letter)."""

    def __init__(self, base: Alphabet, stables: Sequence[tuple[str, StallingsGraph]]):
        if not stables:
            raise ValueError("need at least one stable letter")
        for name, graph in stables:
            if graph.alphabet != base:
                raise ValueError("associated subgroup must live over the base alphabet")
            if name in base.gens:
                raise ValueError(f"stable letter {name} collides with a base generator")
        self.base = base
        self.stable_names = tuple(name for name, _ in stables)
        self.subgroups = tuple(graph for _, graph in stables)
        self.alphabet = base.extend(self.stable_names)
        self.n_base_letters = base.size

    def is_stable(self, letter: int) -> bool:
        return letter >= self.n_base_letters

    def stable_index(self, letter: int) -> int:
        return (letter - self.n_base_letters) >> 1

    def subgroup_of(self, letter: int) -> StallingsGraph:
        return self.subgroups[self.stable_index(letter)]

    def has_stable(self, w: Word) -> bool:
        return any(self.is_stable(a) for a in w.letters)

    def sigma(self, w: Word) -> Word:
        """Projection onto the base letters, as a base-alphabet word."""
        return Word(self.base, tuple(a for a in w.letters if not self.is_stable(a)))

    def tau(self, w: Word) -> Word:
        """Projection onto the stable letters (over the full alphabet)."""
        return Word(self.alphabet, tuple(a for a in w.letters if self.is_stable(a)))

    def word(self, text: str) -> Word:
        return self.alphabet.word(text)


# ---------------------------------------------------------------------------
# Britton reduction layer
# ---------------------------------------------------------------------------


def britton_reduce(H: HnnGroup, w: Word) -> Word:
    """Remove pins until none remain; the stable-letter count never grows."""
    stack: list[tuple[Optional[int], list[int]]] = [(None, [])]
    for a in w.letters:
        if not H.is_stable(a):
            stack[-1][1].append(a)
            continue
        top, seg = stack[-1]
        if (
            top is not None
            and top == inv_letter(a)
            and H.subgroup_of(a).contains(Word(H.base, tuple(seg)))
        ):
            stack.pop()
            stack[-1][1].extend(seg)
        else:
            stack.append((a, []))
    out: list[int] = []
    for t, seg in stack:
        if t is not None:
            out.append(t)
        out.extend(seg)
    return Word(H.alphabet, tuple(out))


def is_britton_reduced(H: HnnGroup, w: Word) -> bool:
    return britton_reduce(H, w).letters == w.letters


def in_base(H: HnnGroup, w: Word) -> bool:
    """Does w represent an element of the base group?"""
    return not H.has_stable(britton_reduce(H, w))


def equals_one(H: HnnGroup, w: Word) -> bool:
    r = britton_reduce(H, w)
    if H.has_stable(r):
        return False
    return not free_reduce(H.sigma(r))


def _syllables(H: HnnGroup, w: Word) -> tuple[list[int], list[tuple[int, ...]]]:
    """Split into stable letters and base segments: seg0 t1 seg1 ... tk segk."""
    ts: list[int] = []
    segs: list[list[int]] = [[]]
    for a in w.letters:
        if H.is_stable(a):
            ts.append(a)
            segs.append([])
        else:
            segs[-1].append(a)
    return ts, [tuple(s) for s in segs]


def mult_reduce(H: HnnGroup, u: Word, v: Word) -> Word:
    """Britton-reduced product of two Britton-reduced words.

    Finds the largest number of matching stable-letter pairs at the junction
    whose accumulated middle lies in the associated subgroup, then absorbs
    the middle in a single step.
    """
    if not is_britton_reduced(H, u) or not is_britton_reduced(H, v):
        raise ValueError("mult_reduce needs Britton-reduced inputs")
    ut, useg = _syllables(H, u)
    vt, vseg = _syllables(H, v)
    k, l = len(ut), len(vt)
    m = 0
    mid = useg[k] + vseg[0]
    while m < min(k, l):
        t_u = ut[k - 1 - m]
        t_v = vt[m]
        if t_u != inv_letter(t_v):
            break
        if not H.subgroup_of(t_v).contains(Word(H.base, tuple(mid))):
            break
        m += 1
        mid = useg[k - m] + mid + vseg[m]
    letters: list[int] = []
    for i in range(k - m):
        letters.extend(useg[i])
        letters.append(ut[i])
    letters.extend(free_reduce(Word(H.base, tuple(mid))).letters)
    for i in range(m, l):
        letters.append(vt[i])
        letters.extend(vseg[i + 1])
    return Word(H.alphabet, tuple(letters))


def is_well_behaved(H: HnnGroup, w: Word) -> bool:
    return is_britton_reduced(H, w) and is_britton_reduced(H, w * w)


def well_behaved_decompose(H: HnnGroup, u: Word) -> tuple[Word, Word, Word]:
    """Words (s, v, p) with u^m equal to s v^m p in the extension for every
    m >= 0 and v well-behaved.

    While the square of the current core has a pin at the junction, the
    junction pair is rotated out: the leading segment and stable letter move
    into the conjugator and the absorbed subgroup element merges into the
    last segment.  Each step removes two stable letters, so this terminates.
    The m <= 4 postcondition is re-checked exactly on every call.
    """
    if not is_britton_reduced(H, u):
        raise ValueError("well_behaved_decompose needs a Britton-reduced input")
    s_letters: list[int] = []
    cur = u
    while True:
        ts, segs = _syllables(H, cur)
        k = len(ts)
        if k == 0:
            break
        junction = Word(H.base, segs[k] + segs[0])
        if ts[k - 1] == inv_letter(ts[0]) and H.subgroup_of(ts[0]).contains(junction):
            s_letters.extend(segs[0])
            s_letters.append(ts[0])
            mid = free_reduce(junction).letters
            letters: list[int] = []
            for i in range(1, k - 1):
                letters.extend(segs[i])
                letters.append(ts[i])
            letters.extend(segs[k - 1])
            letters.extend(mid)
            cur = Word(H.alphabet, tuple(letters))
        else:
            break
    if not H.has_stable(cur):
        cur = free_reduce(H.sigma(cur)).retype(H.alphabet)
    s = Word(H.alphabet, tuple(s_letters))
    p = s.inverse()
    assert is_well_behaved(H, cur), "core failed the well-behaved check"
    for m in range(5):
        probe = (u ** m) * (s * (cur ** m) * p).inverse()
        assert equals_one(H, probe), "decomposition postcondition failed"
    return s, cur, p


# ---------------------------------------------------------------------------
# Base-group constraints (matched slice analysis)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _PowerSide:
    core: Word      # well-behaved, carries at least one stable letter
    tail: Word      # proper leftover after rotation
    shift: int      # exponent shift introduced by the rotation


def _rotate_power_left(u: Word, pre: Word, suf: Word) -> _PowerSide:
    """suf u^x pre  ==  w^(x+shift) tail with tail a proper prefix of w."""
    if not suf:
        return _PowerSide(u, pre, 0)
    r = u[: len(u) - len(suf)]
    w = suf * r
    uu = suf * pre
    if len(uu) < len(w):
        return _PowerSide(w, uu, 0)
    assert uu.letters[: len(w)] == w.letters
    return _PowerSide(w, uu[len(w):], 1)


def _rotate_power_right(v: Word, suf: Word, pre: Word) -> _PowerSide:
    """suf v^y pre  ==  tail w^(y+shift) with tail a proper suffix of w."""
    if not pre:
        return _PowerSide(v, suf, 0)
    q = v[len(pre):]
    w = q * pre
    vv = suf * pre
    if len(vv) < len(w):
        return _PowerSide(w, vv, 0)
    assert vv.letters[len(vv) - len(w):] == w.letters
    return _PowerSide(w, vv[: len(vv) - len(w)], 1)


def _t_suffixes(H: HnnGroup, w: Word) -> list[Word]:
    return [w[i:] for i, a in enumerate(w.letters) if H.is_stable(a)]


def _t_prefixes(H: HnnGroup, w: Word) -> list[Word]:
    return [w[: i + 1] for i, a in enumerate(w.letters) if H.is_stable(a)]


def _fresh(name: str, taken) -> str:
    while name in taken:
        name += "'"
    return name


def _embed(s: SolutionSet, vars: Sequence[str]) -> SolutionSet:
    """Cylindrify onto a larger variable tuple.

    The automaton is materialized in the set's own (small) dimension first;
    extending tracks afterwards is only a letter remap.
    """
    if tuple(vars) == s.vars:
        return s
    from .presburger import extend_tracks

    positions = [list(vars).index(x) for x in s.vars]
    return SolutionSet(vars, dfa=extend_tracks(s.dfa, positions, len(vars)))


def _rel_sol_cached(e: KnapsackExpr, graph: StallingsGraph, cfg: RelKnapConfig,
                    cache: dict) -> SolutionSet:
    canon = tuple(dict.fromkeys(e.variables))
    rename = {x: f"v{i}" for i, x in enumerate(canon)}
    key = (
        tuple(c.letters for c in e.consts),
        tuple(u.letters for u in e.powers),
        tuple(rename[x] for x in e.variables),
        id(graph),
        cfg.kappa,
        cfg.ball,
    )
    hit = cache.get(key)
    if hit is None:
        e2 = KnapsackExpr(e.consts, e.powers, tuple(rename[x] for x in e.variables))
        hit = rel_sol(e2, graph, cfg)
        cache[key] = hit
    back = {f"v{i}": x for i, x in enumerate(canon)}
    return hit.rename(back)


_Side = Union[Word, tuple]  # a constant word, or (u, pre, suf, var_name)


def _g_constraint(H: HnnGroup, left: _Side, e: KnapsackExpr, right: _Side,
                  cfg: RelKnapConfig, cache: dict) -> SolutionSet:
    """Solution set of:  LEFT  e  RIGHT  representing a base-group element.

    LEFT is a constant word or suf u^x pre; RIGHT is a constant word or
    suf v^y pre.  Variables of the result: ([x] if LEFT is a power) +
    variables of e + ([y] if RIGHT is a power).
    """
    evars = list(e.var_names)
    left_power = not isinstance(left, Word)
    right_power = not isinstance(right, Word)

    if left_power:
        u, upre, usuf, x_name = left
        ls = _rotate_power_left(u, upre, usuf)
        assert is_well_behaved(H, ls.core)
    else:
        ls = None
        x_name = None
    if right_power:
        v, vsuf, vpre, y_name = right
        rs = _rotate_power_right(v, vsuf, vpre)
        assert is_well_behaved(H, rs.core)
    else:
        rs = None
        y_name = None

    out_vars = ([x_name] if left_power else []) + evars + ([y_name] if right_power else [])
    taken = set(out_vars)
    xp = _fresh("x^", taken)
    taken.add(xp)
    yp = _fresh("y^", taken)
    taken.add(yp)

    from .wordeq import two_power_eq

    tau = H.tau
    epsilon = H.alphabet.epsilon()

    def inv_tau(w: Word) -> Word:
        return tau(w).inverse()

    # outer stable-letter matching
    if left_power and right_power:
        outer = two_power_eq(epsilon, tau(ls.core), tau(ls.tail),
                             epsilon, inv_tau(rs.core), inv_tau(rs.tail))
    elif left_power:
        outer = two_power_eq(epsilon, tau(ls.core), tau(ls.tail),
                             inv_tau(right), epsilon, epsilon)
    elif right_power:
        outer = two_power_eq(tau(left), epsilon, epsilon,
                             epsilon, inv_tau(rs.core), inv_tau(rs.tail))
    else:
        ok = tau(left).letters == inv_tau(right).letters
        outer = None
        if not ok:
            return SolutionSet.empty(out_vars)
    shift_x = ls.shift if left_power else 0
    shift_y = rs.shift if right_power else 0

    if outer is not None:
        # work in shifted exponents first; unshift at the end
        X = _fresh("X^", taken)
        taken.add(X)
        Y = _fresh("Y^", taken)
        taken.add(Y)
        keep = (["x"] if left_power else []) + (["y"] if right_power else [])
        shifted = outer.restrict(keep).rename({"x": X, "y": Y})
        if shifted.is_empty():
            return SolutionSet.empty(out_vars)
        work_vars = ([X] if left_power else []) + ([Y] if right_power else []) + evars
        result = _embed(shifted, work_vars)
    else:
        X = Y = None
        work_vars = list(evars)
        result = SolutionSet.full(work_vars) if work_vars else SolutionSet.point((), ())

    # slice generators: (word pieces, quantified power or not)
    def left_slices():
        out = []
        if left_power:
            for s in _t_suffixes(H, ls.core):
                out.append((s, True))
            for s in _t_suffixes(H, ls.tail):
                out.append((s, False))
        else:
            for s in _t_suffixes(H, left):
                out.append((s, False))
        return out

    def right_slices():
        out = []
        if right_power:
            for p in _t_prefixes(H, rs.core):
                out.append((p, True))
            for p in _t_prefixes(H, rs.tail):
                out.append((p, False))
        else:
            for p in _t_prefixes(H, right):
                out.append((p, False))
        return out

    sigma = H.sigma
    from .presburger import rep_restrict

    def e_parts():
        parts = []
        for c, xv, u_ in zip(e.consts, e.variables, e.powers):
            parts.append(c)
            parts.append((u_, xv))
        parts.append(e.consts[-1])
        return parts

    for s, s_quant in left_slices():
        for p, p_quant in right_slices():
            if s.letters[0] != inv_letter(p.letters[-1]):
                continue  # stable letters cannot cancel
            subgroup = H.subgroup_of(s.letters[0])

            if not s_quant and not p_quant:
                if tau(s).letters != inv_tau(p).letters:
                    continue
                expr2 = _build_expr(H.base, [sigma(s)] + e_parts() + [sigma(p)])
                constraint = _rel_sol_cached(expr2, subgroup, cfg, cache)
                if constraint.is_empty():
                    return SolutionSet.empty(out_vars)
                result = result.intersect(_embed(constraint, work_vars))
                continue

            # matching equation over the quantified exponents
            if s_quant and p_quant:
                match = two_power_eq(tau(s), tau(ls.core), tau(ls.tail),
                                     inv_tau(p), inv_tau(rs.core), inv_tau(rs.tail))
                mvars = [xp, yp]
                mset = match.rename({"x": xp, "y": yp})
            elif s_quant:
                match = two_power_eq(tau(s), tau(ls.core), tau(ls.tail),
                                     inv_tau(p), epsilon, epsilon)
                mvars = [xp]
                mset = SolutionSet(
                    (xp,), rep=rep_restrict(match.rep, ("x",)).pruned()
                )
            else:
                match = two_power_eq(tau(s), epsilon, epsilon,
                                     inv_tau(p), inv_tau(rs.core), inv_tau(rs.tail))
                mvars = [yp]
                mset = SolutionSet(
                    (yp,), rep=rep_restrict(match.rep, ("y",)).pruned()
                )
            if mset.is_empty():
                continue

            # subgroup constraint with symbolic slice exponents (constants
            # stay short, so these calls cache extremely well)
            parts: list = [sigma(s)]
            if s_quant:
                parts.append((sigma(ls.core), xp))
                parts.append(sigma(ls.tail))
            parts.extend(e_parts())
            if p_quant:
                parts.append(sigma(rs.tail))
                parts.append((sigma(rs.core), yp))
            parts.append(sigma(p))
            good = _rel_sol_cached(_build_expr(H.base, parts), subgroup, cfg, cache)

            local = work_vars + mvars
            bad = _embed(mset, local).intersect(_embed(good, local).complement())
            if s_quant:
                bad = bad.intersect(formula_to_set(lt(term(xp), term(X)), local))
            if p_quant:
                bad = bad.intersect(formula_to_set(lt(term(yp), term(Y)), local))
            viol = bad
            for nv in mvars:
                viol = viol.project_out(nv)
            result = result.intersect(_embed(viol, work_vars).complement())
            if result.is_empty():
                return SolutionSet.empty(out_vars)

    # unshift exponents: answer(x, y, e) iff (x + shift_x, y + shift_y, e) in result
    if outer is not None:
        renames = {}
        extra: list[str] = []
        atoms = []
        if left_power:
            if shift_x:
                extra.append(X)
                atoms.append(eq(term(X), Term(((x_name, 1),), shift_x)))
            else:
                renames[X] = x_name
        if right_power:
            if shift_y:
                extra.append(Y)
                atoms.append(eq(term(Y), Term(((y_name, 1),), shift_y)))
            else:
                renames[Y] = y_name
        result = result.rename(renames)
        if extra:
            lifted_vars = out_vars + extra
            lifted = _embed(result, lifted_vars)
            lifted = lifted.intersect(formula_to_set(and_(*atoms), lifted_vars))
            for z in extra:
                lifted = lifted.project_out(z)
            result = lifted
    return result.aligned_to(out_vars) if out_vars else result


def _build_expr(alphabet: Alphabet, parts) -> KnapsackExpr:
    consts = [alphabet.epsilon()]
    powers: list[Word] = []
    variables: list[str] = []
    for part in parts:
        if isinstance(part, Word):
            consts[-1] = consts[-1] * part.retype(alphabet)
        else:
            u, x = part
            powers.append(u.retype(alphabet))
            variables.append(x)
            consts.append(alphabet.epsilon())
    return KnapsackExpr(tuple(consts), tuple(powers), tuple(variables))


def lemma2dim_set(H: HnnGroup, u: Word, u_pre: Word, u_suf: Word,
                  v: Word, v_suf: Word, v_pre: Word, e: KnapsackExpr,
                  A: StallingsGraph, cfg: RelKnapConfig = RelKnapConfig(),
                  x_name: str = "x", y_name: str = "y") -> SolutionSet:
    """Solutions of  u_suf u^x u_pre  e  v_suf v^y v_pre  in the base group.

    u and v must be well-behaved and carry stable letters; u_pre / v_pre are
    proper prefixes and u_suf / v_suf proper suffixes of their powers.
    """
    for w_, name in ((u, "u"), (v, "v")):
        if not H.has_stable(w_):
            raise ValueError(f"{name} must contain a stable letter")
        if not is_well_behaved(H, w_):
            raise ValueError(f"{name} is not well-behaved")
    if A not in H.subgroups:
        raise ValueError("A must be one of the associated subgroups")
    if len(u_pre) >= len(u) or len(u_suf) >= len(u):
        raise ValueError("u decorations must be proper")
    if len(v_pre) >= len(v) or len(v_suf) >= len(v):
        raise ValueError("v decorations must be proper")
    cache: dict = {}
    out = _g_constraint(H, (u, u_pre, u_suf, x_name), e, (v, v_suf, v_pre, y_name),
                        cfg, cache)
    return out.aligned_to([x_name, y_name] + list(e.var_names))


def remark1dim_set(H: HnnGroup, left, e: KnapsackExpr, right,
                   A: StallingsGraph, cfg: RelKnapConfig = RelKnapConfig(),
                   x_name: str = "x", y_name: str = "y") -> SolutionSet:
    """Degenerate forms of the two-power base-group constraint.

    ``left`` and ``right`` are either constant words or (w, prefix, suffix)
    triples describing suf w^exp pre; at most one side carries a power.
    """
    if A not in H.subgroups:
        raise ValueError("A must be one of the associated subgroups")

    def conv(side, name, is_left):
        if isinstance(side, Word):
            return side
        w_, pre, suf = side
        return (w_, pre, suf, name) if is_left else (w_, suf, pre, name)

    l = conv(left, x_name, True)
    r = conv(right, y_name, False)
    cache: dict = {}
    return _g_constraint(H, l, e, r, cfg, cache)


# ---------------------------------------------------------------------------
# The solution-set pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GuessRecord:
    """One branch of the disjunction: refinement arities, factorizations,
    positivity flags, and a non-crossing matching of the stable-letter
    bearing pieces."""

    arities: tuple[int, ...]
    pieces: tuple
    matching: tuple[tuple[int, int], ...]
    sums: tuple

    def __post_init__(self):
        budget = 4 * (len(self.arities))
        if sum(self.arities) > budget:
            raise ValueError("refinement budget exceeded")
        for (a, b), (c, d) in itertools.combinations(self.matching, 2):
            if a < c < b < d or c < a < d < b:
                raise ValueError("matching must be non-crossing")


@dataclass(frozen=True)
class _Piece:
    entry: int
    kind: str                 # "const" | "power"
    word: Optional[Word]      # const payload
    u: Optional[Word] = None  # power payload
    pre: Optional[Word] = None
    suf: Optional[Word] = None
    var: Optional[str] = None
    positive: bool = False

    def has_t(self, H: HnnGroup) -> bool:
        if self.kind == "const":
            return H.has_stable(self.word)
        return H.has_stable(self.u)


class SolveStats:
    def __init__(self):
        self.guesses = 0
        self.pairs = 0


def _factorizations(w: Word, max_parts: int):
    n = len(w)
    yield (w,)
    for parts in range(2, min(max_parts, n) + 1):
        for cuts in itertools.combinations(range(1, n), parts - 1):
            pos = (0,) + cuts + (n,)
            yield tuple(w[pos[i]: pos[i + 1]] for i in range(parts))


def _power_splits(u: Word):
    """(prefix, suffix) choices for an internal boundary inside a power."""
    eps = u.alphabet.epsilon()
    yield (eps, eps)
    for c in range(1, len(u)):
        yield (u[:c], u[c:])


def _noncrossing_matchings(positions: Sequence[int]):
    if not positions:
        yield ()
        return
    first = positions[0]
    for idx in range(1, len(positions), 2):
        inner_pos = positions[1:idx]
        outer_pos = positions[idx + 1:]
        for inner in _noncrossing_matchings(inner_pos):
            for outer in _noncrossing_matchings(outer_pos):
                yield ((first, positions[idx]),) + inner + outer


def sol(H: HnnGroup, e: KnapsackExpr, cfg: RelKnapConfig = RelKnapConfig(),
        max_guesses: int = 200_000, max_pieces: int = 3,
        stats: Optional[SolveStats] = None) -> SolutionSet:
    """Exact solution set {valuation | e evaluates to 1 in the extension}.

    max_pieces bounds how many factors one power may split into; the
    structural budget of four pieces per entry on average always applies on
    top.  The brute-force suites exercise completeness of the default.
    """
    if not e.is_knapsack():
        raise ValueError("sol needs pairwise distinct variables; see exponent_sol")
    X = list(e.var_names)
    cache: dict = {}

    # preprocess: Britton-reduce constants, make power bases well-behaved
    consts = [britton_reduce(H, c.retype(H.alphabet)) for c in e.consts]
    entries: list = [("const", consts[0])]
    free_vars: list[str] = []
    for u, x, v in zip(e.powers, e.variables, e.consts[1:]):
        u_br = britton_reduce(H, u.retype(H.alphabet))
        s, core, p = well_behaved_decompose(H, u_br)
        v_br = britton_reduce(H, v.retype(H.alphabet))
        if not core:
            free_vars.append(x)
            prev = entries[-1][1]
            entries[-1] = ("const", britton_reduce(H, prev * s * p * v_br))
            continue
        prev = entries[-1][1]
        entries[-1] = ("const", britton_reduce(H, prev * s))
        entries.append(("power", core, x))
        entries.append(("const", britton_reduce(H, p * v_br)))

    kept_vars = [x for x in X if x not in free_vars]
    if not any(kind == "power" for kind, *_ in entries):
        value = H.alphabet.epsilon()
        for _, w_ in entries:
            value = value * w_
        result = SolutionSet.point((), ()) if equals_one(H, value) else SolutionSet.empty(())
    else:
        in_g = _in_base_set(H, entries, kept_vars, cfg, cache, max_guesses,
                            max_pieces, stats)
        proj_parts: list = []
        for ent in entries:
            if ent[0] == "const":
                proj_parts.append(H.sigma(ent[1]))
            else:
                proj_parts.append((H.sigma(ent[1]), ent[2]))
        e_proj = _build_expr(H.base, proj_parts)
        part2 = _rel_sol_cached(e_proj, trivial_subgroup(H.base), cfg, cache)
        result = in_g.intersect(_embed(part2, kept_vars)) if kept_vars else (
            in_g if not part2.is_empty() else SolutionSet.empty(())
        )

    if free_vars:
        result = result.oplus(SolutionSet.full(free_vars))
    return result.aligned_to(X)


def _in_base_set(H: HnnGroup, entries, kept_vars, cfg, cache, max_guesses,
                 max_pieces, stats) -> SolutionSet:
    """Union over guesses of the constraint sets for membership in the base group."""
    budget = 4 * len(entries)
    eps = H.alphabet.epsilon()

    options_per_entry: list[list] = []
    for idx, ent in enumerate(entries):
        opts: list[tuple[int, tuple, tuple]] = []  # (arity, pieces, sum_spec)
        if ent[0] == "const":
            w_ = ent[1]
            if not H.has_stable(w_):
                pieces = (
                    (_Piece(idx, "const", w_),) if w_.letters else ()
                )
                opts.append((1, pieces, None))
            else:
                for parts in _factorizations(w_, min(len(w_), budget)):
                    pieces = tuple(_Piece(idx, "const", part) for part in parts)
                    opts.append((len(parts), pieces, None))
        else:
            _, u, x = ent
            if not H.has_stable(u):
                opts.append((1, (_Piece(idx, "power", None, u, eps, eps, x, False),), None))
            else:
                max_k = min(max(1, budget - (len(entries) - 1)), max_pieces)
                seen_opts: set = set()
                for k in range(1, max_k + 1):
                    for splits in itertools.product(list(_power_splits(u)), repeat=k - 1):
                        c_i = sum(1 for pre, suf in splits if pre and suf)
                        for flags in itertools.product((False, True), repeat=k):
                            pieces = []
                            pos_vars = []
                            degenerate = False
                            for j in range(k):
                                left_dec = splits[j - 1][1] if j >= 1 else eps
                                right_dec = splits[j][0] if j < k - 1 else eps
                                if flags[j]:
                                    var = x if k == 1 else f"{x}.{j}"
                                    pieces.append(
                                        _Piece(idx, "power", None, u, right_dec,
                                               left_dec, var, True)
                                    )
                                    pos_vars.append(var)
                                else:
                                    wj = britton_reduce(H, left_dec * right_dec)
                                    if wj.letters:
                                        pieces.append(_Piece(idx, "const", wj))
                                    elif k > 1:
                                        # an empty zero piece duplicates a
                                        # smaller-arity guess
                                        degenerate = True
                                        break
                            if degenerate:
                                continue
                            opt = (k, tuple(pieces), (x, c_i, tuple(pos_vars)))
                            sig = (tuple(
                                (pc.kind,
                                 pc.word.letters if pc.word else None,
                                 pc.pre.letters if pc.pre else None,
                                 pc.suf.letters if pc.suf else None,
                                 pc.positive) for pc in opt[1]), opt[2][1])
                            if sig not in seen_opts:
                                seen_opts.add(sig)
                                opts.append(opt)
        options_per_entry.append(opts)

    union: Optional[SolutionSet] = None
    seen_guesses: set = set()
    gcache: dict = {}
    feas_cache: dict = {}
    explored = 0
    for combo in itertools.product(*options_per_entry):
        if sum(arity for arity, _, _ in combo) > budget:
            continue
        pieces: list[_Piece] = []
        sums = []
        for arity, ps, sum_spec in combo:
            pieces.extend(ps)
            if sum_spec is not None:
                sums.append(sum_spec)
        t_positions = [i for i, pc in enumerate(pieces) if pc.has_t(H)]
        if len(t_positions) % 2:
            continue
        sig_pieces = tuple(
            (pc.kind, pc.word.letters if pc.word else None,
             pc.u.letters if pc.u else None,
             pc.pre.letters if pc.pre else None,
             pc.suf.letters if pc.suf else None, pc.var, pc.positive)
            for pc in pieces
        )
        for matching in _noncrossing_matchings(t_positions):
            key = (sig_pieces, tuple(sums), matching)
            if key in seen_guesses:
                continue
            seen_guesses.add(key)
            explored += 1
            if stats is not None:
                stats.guesses = explored
            if explored > max_guesses:
                raise EffortExceeded(
                    f"guess cap exceeded after {explored} guesses", explored
                )
            record = GuessRecord(
                tuple(arity for arity, _, _ in combo), sig_pieces, matching, tuple(sums)
            )
            branch = _evaluate_guess(H, pieces, matching, sums, kept_vars, cfg,
                                     cache, gcache, feas_cache, stats)
            if branch is None or branch.is_empty():
                continue
            union = branch if union is None else union.union(branch)
    if union is None:
        union = SolutionSet.empty(kept_vars) if kept_vars else SolutionSet.empty(())
    return union


def _tau_feasible(H, left, right, min_left, min_right, feas_cache) -> bool:
    """Cheap test: can the stable-letter projections of the pair cancel with
    the positivity requirements of the pieces?"""
    from .wordeq import two_power_eq

    tau = H.tau
    eps = H.alphabet.epsilon()

    def side_sig(side, is_left):
        if isinstance(side, Word):
            return ("c", tau(side).letters)
        if is_left:
            u, pre, suf, _ = side
            ls = _rotate_power_left(u, pre, suf)
            return ("p", tau(ls.core).letters, tau(ls.tail).letters, ls.shift)
        u, suf, pre, _ = side
        rs = _rotate_power_right(u, suf, pre)
        return ("p", tau(rs.core).letters, tau(rs.tail).letters, rs.shift)

    key = (side_sig(left, True), side_sig(right, False), min_left, min_right)
    hit = feas_cache.get(key)
    if hit is not None:
        return hit
    lsig, rsig = key[0], key[1]
    alph = H.alphabet

    def wd(letters):
        return Word(alph, letters)

    if lsig[0] == "c" and rsig[0] == "c":
        ok = lsig[1] == wd(rsig[1]).inverse().letters
    else:
        if lsig[0] == "p" and rsig[0] == "p":
            m = two_power_eq(eps, wd(lsig[1]), wd(lsig[2]), eps,
                             wd(rsig[1]).inverse(), wd(rsig[2]).inverse())
        elif lsig[0] == "p":
            m = two_power_eq(eps, wd(lsig[1]), wd(lsig[2]),
                             wd(rsig[1]).inverse(), eps, eps)
        else:
            m = two_power_eq(wd(lsig[1]), eps, eps, eps,
                             wd(rsig[1]).inverse(), wd(rsig[2]).inverse())
        # shifted exponents: piece exponent >= 1 means shifted >= 1 + shift
        need_x = (min_left + lsig[3]) if lsig[0] == "p" else 0
        need_y = (min_right + rsig[3]) if rsig[0] == "p" else 0
        ok = False
        for c in m.rep.components:
            can_x = c.base[0] >= need_x or any(p[0] for p in c.periods)
            can_y = c.base[1] >= need_y or any(p[1] for p in c.periods)
            if can_x and can_y:
                ok = True
                break
    feas_cache[key] = ok
    return ok


def _g_constraint_cached(H, left, e_inner, right, cfg, cache, gcache) -> SolutionSet:
    """Structural cache around _g_constraint with canonical variable names."""
    mapping: dict[str, str] = {}

    def canon_side(side, tag):
        if isinstance(side, Word):
            return ("c", side.letters)
        u, aa, bb, var = side
        mapping[var] = tag
        return ("p", u.letters, aa.letters, bb.letters, tag)

    lsig = canon_side(left, "L#")
    rsig = canon_side(right, "R#")
    for i, x in enumerate(e_inner.var_names):
        mapping[x] = f"e{i}#"
    esig = (
        tuple(c.letters for c in e_inner.consts),
        tuple(u.letters for u in e_inner.powers),
        tuple(mapping[x] for x in e_inner.variables),
    )
    key = (lsig, esig, rsig, cfg.kappa, cfg.ball)
    hit = gcache.get(key)
    if hit is None:
        def rename_side(side, tag):
            if isinstance(side, Word):
                return side
            u, aa, bb, _ = side
            return (u, aa, bb, tag)

        e_c = KnapsackExpr(e_inner.consts, e_inner.powers,
                           tuple(mapping[x] for x in e_inner.variables))
        hit = _g_constraint(H, rename_side(left, "L#"), e_c,
                            rename_side(right, "R#"), cfg, cache)
        gcache[key] = hit
    back = {tag: orig for orig, tag in mapping.items()}
    return hit.rename(back)


def _evaluate_guess(H, pieces, matching, sums, kept_vars, cfg, cache, gcache,
                    feas_cache, stats):
    piece_vars: list[str] = []
    for pc in pieces:
        if pc.kind == "power" and pc.var is not None and pc.var not in piece_vars:
            piece_vars.append(pc.var)
    allvars = list(dict.fromkeys(list(kept_vars) + piece_vars))
    if len(allvars) > 14:
        raise EffortExceeded("variable count beyond automaton track cap", len(allvars))

    sides = []
    for a, b in matching:
        left = _piece_side(H, pieces[a], left_side=True)
        right = _piece_side(H, pieces[b], left_side=False)
        min_l = 1 if pieces[a].positive else 0
        min_r = 1 if pieces[b].positive else 0
        if not _tau_feasible(H, left, right, min_l, min_r, feas_cache):
            return None
        sides.append((a, b, left, right))

    acc = SolutionSet.full(allvars) if allvars else SolutionSet.point((), ())
    for a, b, left, right in sides:
        if stats is not None:
            stats.pairs += 1
        inner_parts: list = []
        for pc in pieces[a + 1: b]:
            if pc.kind == "const":
                inner_parts.append(H.sigma(pc.word))
            else:
                inner_parts.append(H.sigma(pc.suf))
                inner_parts.append((H.sigma(pc.u), pc.var))
                inner_parts.append(H.sigma(pc.pre))
        e_inner = _build_expr(H.base, inner_parts)
        constraint = _g_constraint_cached(H, left, e_inner, right, cfg, cache, gcache)
        if constraint.is_empty():
            return None
        acc = acc.intersect(_embed(constraint, allvars))
        if acc.is_empty():
            return None

    atoms: list[Formula] = []
    for x, c_i, pos_vars in sums:
        atoms.append(eq(term(x), Term(tuple((v, 1) for v in pos_vars), c_i)))
    for pc in pieces:
        if pc.kind == "power" and pc.positive and H.has_stable(pc.u):
            atoms.append(le(Term((), 1), term(pc.var)))
    if atoms:
        acc = acc.intersect(formula_to_set(and_(*atoms), allvars))
    for z in [v for v in allvars if v not in kept_vars]:
        acc = acc.project_out(z)
    return acc.aligned_to(kept_vars) if kept_vars else acc


def _piece_side(H, pc: _Piece, left_side: bool):
    if pc.kind == "const":
        return pc.word
    if left_side:
        return (pc.u, pc.pre, pc.suf, pc.var)
    return (pc.u, pc.suf, pc.pre, pc.var)


# ---------------------------------------------------------------------------
# Exponent expressions and systems
# ---------------------------------------------------------------------------


def exponent_sol(H: HnnGroup, system: Sequence[KnapsackExpr],
                 cfg: RelKnapConfig = RelKnapConfig()) -> SolutionSet:
    """Joint solutions of a system of exponent expressions (repeats allowed)."""
    sets: list[SolutionSet] = []
    for e in system:
        counts: dict[str, int] = {}
        new_vars: list[str] = []
        copies: dict[str, list[str]] = {}
        for x in e.variables:
            counts[x] = counts.get(x, 0) + 1
            if counts[x] == 1:
                new_vars.append(x)
                copies[x] = [x]
            else:
                fresh = f"{x}#{counts[x]}"
                new_vars.append(fresh)
                copies[x].append(fresh)
        renamed = KnapsackExpr(e.consts, e.powers, tuple(new_vars))
        s = sol(H, renamed, cfg)
        for x, cs in copies.items():
            for extra in cs[1:]:
                s = s.diagonalize(x, extra).project_out(extra)
        sets.append(s.aligned_to(list(e.var_names)))
    if not sets:
        return SolutionSet.point((), ())
    allvars = list(dict.fromkeys(x for s in sets for x in s.vars))
    acc = _embed(sets[0], allvars)
    for s in sets[1:]:
        acc = acc.intersect(_embed(s, allvars))
    return acc
