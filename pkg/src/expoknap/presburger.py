"""Semilinear sets, Presburger formulas, and bit-vector set automata.

Sets of tuples over the naturals are carried in two interchangeable forms:

* an explicit semilinear representation (finite union of linear sets
  ``base + periods * N^k``), preserved through positive operations, and
* a deterministic, complete automaton over the alphabet ``{0,1}^d`` reading
  least-significant-bit-first encodings of d-tuples.

Automata are kept *padding closed*: a word is accepted iff the word with one
extra all-zero letter is accepted, so acceptance depends only on the decoded
tuple.  Atoms compile to carry-state automata; negation is complementation of
the complete automaton, existential quantification is track erasure followed
by zero-saturation and determinization.  Minimization runs after every
projection and product so the heavily compositional callers stay tractable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence


class EffortExceeded(Exception):
    """Raised when a configured effort limit is exhausted; carries a count."""

    def __init__(self, message: str, count: int = 0):
        super().__init__(message)
        self.count = count


MAX_TRACKS = 16


# ---------------------------------------------------------------------------
# Linear / semilinear representations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearSet:
    """b + P * N^k in dimension d; all entries nonnegative.

    Hot path: entries are validated at the public boundaries (see
    ``validate``), not on every construction.
    """

    base: tuple[int, ...]
    periods: tuple[tuple[int, ...], ...]

    def validate(self):
        d = len(self.base)
        if any(x < 0 for x in self.base):
            raise ValueError("negative base entry")
        for p in self.periods:
            if len(p) != d:
                raise ValueError("period dimension mismatch")
            if any(x < 0 for x in p):
                raise ValueError("negative period entry")
        return self

    @property
    def dim(self) -> int:
        return len(self.base)

    def normalized(self) -> "LinearSet":
        ps = sorted(set(p for p in self.periods if any(p)))
        return LinearSet(self.base, tuple(ps))


_CONE_CACHE: dict[tuple, bool] = {}


def cone_member(target: tuple[int, ...], periods: tuple[tuple[int, ...], ...],
                fuel: int = 60000) -> Optional[bool]:
    """Is target a nonnegative integer combination of the periods?

    BFS over residual vectors with a global cache; None when fuel runs out
    (callers treat that as \"unknown\", which only weakens pruning).
    """
    if not any(target):
        return True
    raw_key = (target, periods)
    hit = _CONE_CACHE.get(raw_key)
    if hit is not None:
        return hit
    usable = tuple(
        sorted(p for p in set(periods) if any(p) and all(x <= t for x, t in zip(p, target)))
    )
    if not usable:
        _CONE_CACHE[raw_key] = False
        return False
    key = (target, usable)
    hit = _CONE_CACHE.get(key)
    if hit is not None:
        _CONE_CACHE[raw_key] = hit
        return hit
    seen = {target}
    stack = [target]
    steps = 0
    while stack:
        cur = stack.pop()
        for p in usable:
            nxt = tuple(c - x for c, x in zip(cur, p))
            if any(x < 0 for x in nxt):
                continue
            if not any(nxt):
                _CONE_CACHE[key] = _CONE_CACHE[raw_key] = True
                return True
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
                steps += 1
                if steps > fuel:
                    return None
    _CONE_CACHE[key] = _CONE_CACHE[raw_key] = False
    return False


def ls_member(v: tuple[int, ...], ls: LinearSet, fuel: int = 60000) -> Optional[bool]:
    """Exact membership of v in a linear set; None when fuel runs out."""
    target = tuple(x - b for x, b in zip(v, ls.base))
    if any(x < 0 for x in target):
        return False
    return cone_member(target, ls.periods, fuel)


def ls_enumerate(ls: LinearSet, box: int) -> set[tuple[int, ...]]:
    """All members with every coordinate <= box."""
    out: set[tuple[int, ...]] = set()
    if any(b > box for b in ls.base):
        return out
    periods = [p for p in ls.periods if any(p)]
    stack = [ls.base]
    seen = {ls.base}
    while stack:
        v = stack.pop()
        out.add(v)
        for p in periods:
            w = tuple(a + b for a, b in zip(v, p))
            if w not in seen and all(x <= box for x in w):
                seen.add(w)
                stack.append(w)
    return out


def _ls_subsumed(a: LinearSet, b: LinearSet, fuel: int = 2000) -> bool:
    """Sufficient check for L(a) subset of L(b) (base and periods generated by b)."""
    if any(x < y for x, y in zip(a.base, b.base)):
        return False
    if a.base == b.base and set(a.periods) <= set(b.periods):
        return True
    if ls_member(a.base, b, fuel) is not True:
        return False
    return all(cone_member(p, b.periods, fuel) is True for p in a.periods)


def _drop_redundant_periods(c: LinearSet, fuel: int = 2000) -> LinearSet:
    ps = list(c.normalized().periods)
    changed = True
    while changed:
        changed = False
        for i in range(len(ps) - 1, -1, -1):
            others = ps[:i] + ps[i + 1 :]
            if others and ls_member(ps[i], LinearSet((0,) * c.dim, tuple(others)), fuel) is True:
                ps.pop(i)
                changed = True
                break
    return LinearSet(c.base, tuple(ps))


@dataclass(frozen=True)
class SemilinearRep:
    """A finite union of linear sets over named coordinates."""

    vars: tuple[str, ...]
    components: tuple[LinearSet, ...]

    def validate(self) -> "SemilinearRep":
        for c in self.components:
            if c.dim != len(self.vars):
                raise ValueError("component dimension mismatch")
            c.validate()
        return self

    @property
    def dim(self) -> int:
        return len(self.vars)

    def is_empty(self) -> bool:
        return not self.components

    def member(self, v: tuple[int, ...], fuel: int = 200000) -> Optional[bool]:
        unknown = False
        for c in self.components:
            r = ls_member(v, c, fuel)
            if r is True:
                return True
            if r is None:
                unknown = True
        return None if unknown else False

    def enumerate(self, box: int) -> list[tuple[int, ...]]:
        pts: set[tuple[int, ...]] = set()
        for c in self.components:
            pts |= ls_enumerate(c, box)
        return sorted(pts)

    def pruned(self, fuel: int = 800, full_limit: int = 80) -> "SemilinearRep":
        comps = sorted(
            {c.normalized() for c in self.components},
            key=lambda c: (len(c.periods), c.base, c.periods),
        )
        # cheap tier: dominance among components sharing a period set
        by_periods: dict[tuple, list[LinearSet]] = {}
        for c in comps:
            by_periods.setdefault(c.periods, []).append(c)
        tier1: list[LinearSet] = []
        for per, group in by_periods.items():
            group.sort(key=lambda c: (sum(c.base), c.base))
            kept_g: list[LinearSet] = []
            for c in group:
                dominated = False
                for k in kept_g:
                    diff = tuple(x - y for x, y in zip(c.base, k.base))
                    if all(x >= 0 for x in diff) and cone_member(diff, per, fuel) is True:
                        dominated = True
                        break
                if not dominated:
                    kept_g.append(c)
            tier1.extend(kept_g)
        tier1.sort(key=lambda c: (len(c.periods), c.base, c.periods))
        if len(tier1) > full_limit:
            return SemilinearRep(self.vars, tuple(tier1))
        # full tier: pairwise subsumption with period-redundancy cleanup
        comps2 = [_drop_redundant_periods(c, fuel) for c in tier1]
        comps2.sort(key=lambda c: (-len(c.periods), sum(c.base), c.base))
        kept: list[LinearSet] = []
        for c in comps2:
            if not any(_ls_subsumed(c, k, fuel) for k in kept):
                kept.append(c)
        kept.sort(key=lambda c: (len(c.periods), c.base, c.periods))
        return SemilinearRep(self.vars, tuple(kept))

    def to_json(self) -> dict:
        return {
            "vars": list(self.vars),
            "components": [
                {"base": list(c.base), "periods": [list(p) for p in c.periods]}
                for c in self.components
            ],
        }

    @staticmethod
    def from_json(data: dict) -> "SemilinearRep":
        comps = tuple(
            LinearSet(tuple(c["base"]), tuple(tuple(p) for p in c["periods"]))
            for c in data["components"]
        )
        return SemilinearRep(tuple(data["vars"]), comps).validate()


# --- structural operations on representations (positive fragment) ----------


def rep_union(a: SemilinearRep, b: SemilinearRep) -> SemilinearRep:
    if a.vars != b.vars:
        raise ValueError("variable mismatch")
    return SemilinearRep(a.vars, a.components + b.components).pruned()


def rep_product(a: SemilinearRep, b: SemilinearRep) -> SemilinearRep:
    """Cartesian product: coordinates of a followed by coordinates of b."""
    da, db = a.dim, b.dim
    comps = []
    for ca in a.components:
        for cb in b.components:
            base = ca.base + cb.base
            periods = tuple(p + (0,) * db for p in ca.periods) + tuple(
                (0,) * da + p for p in cb.periods
            )
            comps.append(LinearSet(base, periods))
    return SemilinearRep(a.vars + b.vars, tuple(comps))


def rep_map(rep: SemilinearRep, groups: Sequence[Sequence[int]], names: Sequence[str]) -> SemilinearRep:
    """Image under the linear map sending coordinate g to the sum over groups[g]."""

    def apply(v: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(sum(v[i] for i in grp) for grp in groups)

    comps = tuple(
        LinearSet(apply(c.base), tuple(apply(p) for p in c.periods)).normalized()
        for c in rep.components
    )
    return SemilinearRep(tuple(names), tuple(set(comps)))


def rep_scale_shift(rep: SemilinearRep, m: int, d: tuple[int, ...]) -> SemilinearRep:
    comps = tuple(
        LinearSet(
            tuple(m * b + dd for b, dd in zip(c.base, d)),
            tuple(tuple(m * x for x in p) for p in c.periods),
        )
        for c in rep.components
    )
    return SemilinearRep(rep.vars, comps)


def rep_restrict(rep: SemilinearRep, names: Sequence[str]) -> SemilinearRep:
    idx = [rep.vars.index(n) for n in names]
    comps = tuple(
        LinearSet(
            tuple(c.base[i] for i in idx),
            tuple(tuple(p[i] for i in idx) for p in c.periods),
        )
        for c in rep.components
    )
    return SemilinearRep(tuple(names), comps).pruned()


def rep_star(rep: SemilinearRep, cap: int = 4000) -> SemilinearRep:
    """N-fold Minkowski sum closure (Parikh image of a starred language).

    Since addition is commutative, (A u B)* has the same image as A* B*, and
    L(b,P)* = {0} u L(b, P u {b}).  The closure is therefore computed one
    component at a time with subsumption pruning after every step, which
    keeps the union far below the 2^components worst case of the direct
    subset formula.
    """
    comps = [c.normalized() for c in rep.pruned(fuel=4000).components]
    d = rep.dim
    comps.sort(key=lambda c: (-len(c.periods), sum(c.base), c.base))
    acc = SemilinearRep(rep.vars, (LinearSet((0,) * d, ()),))
    for c in comps:
        star_c = LinearSet(
            c.base,
            tuple(sorted(set(c.periods) | ({c.base} if any(c.base) else set()))),
        )
        shifted = tuple(
            LinearSet(
                tuple(x + y for x, y in zip(a.base, star_c.base)),
                tuple(sorted(set(a.periods) | set(star_c.periods))),
            )
            for a in acc.components
        )
        acc = SemilinearRep(rep.vars, acc.components + shifted).pruned(fuel=4000)
        if len(acc.components) > cap:
            raise EffortExceeded(
                f"star accumulated {len(acc.components)} components", len(acc.components)
            )
    return acc


def rep_full(names: Sequence[str]) -> SemilinearRep:
    d = len(names)
    unit = tuple(tuple(1 if i == j else 0 for j in range(d)) for i in range(d))
    return SemilinearRep(tuple(names), (LinearSet((0,) * d, unit),))


def rep_point(names: Sequence[str], v: tuple[int, ...]) -> SemilinearRep:
    return SemilinearRep(tuple(names), (LinearSet(v, ()),))


def rep_empty(names: Sequence[str]) -> SemilinearRep:
    return SemilinearRep(tuple(names), ())


# ---------------------------------------------------------------------------
# Presburger formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    """Nonnegative integer combination sum(coeff * var) + const."""

    coeffs: tuple[tuple[str, int], ...]
    const: int = 0

    def __post_init__(self):
        if self.const < 0 or any(c < 0 for _, c in self.coeffs):
            raise ValueError("terms use natural coefficients")

    def variables(self) -> frozenset[str]:
        return frozenset(v for v, c in self.coeffs if c)

    def eval(self, env: dict[str, int]) -> int:
        return self.const + sum(c * env[v] for v, c in self.coeffs)


def term(*parts, const: int = 0) -> Term:
    coeffs: dict[str, int] = {}
    for part in parts:
        if isinstance(part, str):
            coeffs[part] = coeffs.get(part, 0) + 1
        else:
            v, c = part
            coeffs[v] = coeffs.get(v, 0) + c
    return Term(tuple(sorted(coeffs.items())), const)


@dataclass(frozen=True)
class Formula:
    """Presburger formula tree; atoms are term <= term."""

    op: str  # "le" | "and" | "or" | "not" | "exists" | "forall"
    children: tuple["Formula", ...] = ()
    left: Optional[Term] = None
    right: Optional[Term] = None
    var: Optional[str] = None

    def free_vars(self) -> frozenset[str]:
        if self.op == "le":
            return self.left.variables() | self.right.variables()
        vs = frozenset().union(*(c.free_vars() for c in self.children)) if self.children else frozenset()
        if self.op in ("exists", "forall"):
            vs = vs - {self.var}
        return vs

    def evaluate(self, env: dict[str, int], bound: int) -> bool:
        """Reference semantics with quantifiers ranging over [0, bound]."""
        if self.op == "le":
            return self.left.eval(env) <= self.right.eval(env)
        if self.op == "and":
            return all(c.evaluate(env, bound) for c in self.children)
        if self.op == "or":
            return any(c.evaluate(env, bound) for c in self.children)
        if self.op == "not":
            return not self.children[0].evaluate(env, bound)
        if self.op == "exists":
            return any(
                self.children[0].evaluate({**env, self.var: k}, bound) for k in range(bound + 1)
            )
        if self.op == "forall":
            return all(
                self.children[0].evaluate({**env, self.var: k}, bound) for k in range(bound + 1)
            )
        raise ValueError(self.op)


def le(left: Term | str, right: Term | str) -> Formula:
    if isinstance(left, str):
        left = term(left)
    if isinstance(right, str):
        right = term(right)
    return Formula("le", left=left, right=right)


def lt(left: Term | str, right: Term | str) -> Formula:
    if isinstance(left, str):
        left = term(left)
    if isinstance(right, str):
        right = term(right)
    return le(Term(left.coeffs, left.const + 1), right)


def eq(left: Term | str, right: Term | str) -> Formula:
    return and_(le(left, right), le(right, left))


def and_(*fs: Formula) -> Formula:
    return Formula("and", tuple(fs))


def or_(*fs: Formula) -> Formula:
    return Formula("or", tuple(fs))


def not_(f: Formula) -> Formula:
    return Formula("not", (f,))


def exists(var: str, f: Formula) -> Formula:
    return Formula("exists", (f,), var=var)


def forall(var: str, f: Formula) -> Formula:
    return Formula("forall", (f,), var=var)


def true_() -> Formula:
    return le(term(), term())


def false_() -> Formula:
    return lt(term(), term())


# ---------------------------------------------------------------------------
# Presburger automata
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PresAutomaton:
    """Complete DFA over {0,1}^dim letters (track i is bit i), padding closed."""

    dim: int
    transitions: tuple[tuple[int, ...], ...]  # [state][letter] -> state
    initial: int
    finals: frozenset[int]

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    def step(self, state: int, letter: int) -> int:
        return self.transitions[state][letter]

    def accepts_tuple(self, v: tuple[int, ...]) -> bool:
        bits = max((x.bit_length() for x in v), default=0)
        state = self.initial
        for i in range(bits):
            letter = 0
            for t in range(self.dim):
                letter |= (v[t] >> i & 1) << t
            state = self.transitions[state][letter]
        return state in self.finals

    def is_empty(self) -> bool:
        seen = {self.initial}
        stack = [self.initial]
        while stack:
            q = stack.pop()
            if q in self.finals:
                return False
            for r in set(self.transitions[q]):
                if r not in seen:
                    seen.add(r)
                    stack.append(r)
        return True

    def enumerate(self, box: int) -> list[tuple[int, ...]]:
        """Members with all coordinates <= box, lexicographically sorted."""
        depth = max(1, int(box).bit_length())
        out = []
        # DFS over encodings of length exactly `depth`; padding closure makes
        # length-exactly equivalent to length-at-most for bounded tuples.
        def walk(state: int, level: int, partial: tuple[int, ...]):
            if any(x > box for x in partial):
                return
            if level == depth:
                if state in self.finals:
                    out.append(partial)
                return
            for letter in range(1 << self.dim):
                nxt = tuple(
                    partial[t] | ((letter >> t & 1) << level) for t in range(self.dim)
                )
                walk(self.transitions[state][letter], level + 1, nxt)

        walk(self.initial, 0, (0,) * self.dim)
        return sorted(set(out))

    def minimized(self) -> "PresAutomaton":
        n = self.n_states
        # drop unreachable states first
        reach = {self.initial}
        stack = [self.initial]
        while stack:
            q = stack.pop()
            for r in set(self.transitions[q]):
                if r not in reach:
                    reach.add(r)
                    stack.append(r)
        order = sorted(reach)
        remap = {q: i for i, q in enumerate(order)}
        trans = [tuple(remap[self.transitions[q][a]] for a in range(1 << self.dim)) for q in order]
        finals = {remap[q] for q in reach & self.finals}
        n = len(order)
        # Moore partition refinement
        cls = [1 if q in finals else 0 for q in range(n)]
        while True:
            sig = {}
            new = [0] * n
            for q in range(n):
                key = (cls[q], tuple(cls[r] for r in trans[q]))
                if key not in sig:
                    sig[key] = len(sig)
                new[q] = sig[key]
            if new == cls:
                break
            cls = new
        k = max(cls) + 1
        new_trans = [None] * k
        for q in range(n):
            c = cls[q]
            if new_trans[c] is None:
                new_trans[c] = tuple(cls[r] for r in trans[q])
        new_finals = frozenset(cls[q] for q in finals)
        return PresAutomaton(self.dim, tuple(new_trans), cls[remap[self.initial]], new_finals).canonical()

    def canonical(self) -> "PresAutomaton":
        """BFS-renumber states; minimized automata become structurally comparable."""
        order = [self.initial]
        remap = {self.initial: 0}
        i = 0
        while i < len(order):
            q = order[i]
            i += 1
            for a in range(1 << self.dim):
                r = self.transitions[q][a]
                if r not in remap:
                    remap[r] = len(order)
                    order.append(r)
        trans = tuple(
            tuple(remap[self.transitions[q][a]] for a in range(1 << self.dim)) for q in order
        )
        finals = frozenset(remap[q] for q in self.finals if q in remap)
        return PresAutomaton(self.dim, trans, 0, finals)


def _check_tracks(dim: int):
    if dim > MAX_TRACKS:
        raise EffortExceeded(f"automaton over {dim} tracks exceeds the {MAX_TRACKS}-track cap", dim)


_ATOM_CACHE: dict[tuple, PresAutomaton] = {}


def atom_automaton(coeffs: Sequence[int], const: int, equality: bool) -> PresAutomaton:
    """DFA for sum(coeffs * x) <= const (or == const) via carry states."""
    dim = len(coeffs)
    _check_tracks(dim)
    cache_key = (tuple(coeffs), const, equality)
    cached = _ATOM_CACHE.get(cache_key)
    if cached is not None:
        return cached
    n_letters = 1 << dim
    letter_dot = [sum(coeffs[t] for t in range(dim) if letter >> t & 1) for letter in range(n_letters)]
    DEAD = "dead"
    states: dict = {const: 0}
    order = [const]
    trans: list[list] = []
    i = 0
    while i < len(order):
        s = order[i]
        i += 1
        row = []
        for letter in range(n_letters):
            if s == DEAD:
                nxt = DEAD
            else:
                diff = s - letter_dot[letter]
                if equality:
                    nxt = diff // 2 if diff % 2 == 0 else DEAD
                else:
                    nxt = diff // 2  # floor division; reachable states stay bounded
            if nxt not in states:
                states[nxt] = len(order)
                order.append(nxt)
            row.append(states[nxt])
        trans.append(row)
    finals = frozenset(
        states[s] for s in order if s != DEAD and (s == 0 if equality else s >= 0)
    )
    result = PresAutomaton(dim, tuple(tuple(r) for r in trans), 0, finals).minimized()
    _ATOM_CACHE[cache_key] = result
    return result


def product_automaton(a: PresAutomaton, b: PresAutomaton, keep: Callable[[bool, bool], bool]) -> PresAutomaton:
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    _check_tracks(a.dim)
    n_letters = 1 << a.dim
    states = {(a.initial, b.initial): 0}
    order = [(a.initial, b.initial)]
    trans = []
    i = 0
    while i < len(order):
        p, q = order[i]
        i += 1
        row = []
        for letter in range(n_letters):
            nxt = (a.transitions[p][letter], b.transitions[q][letter])
            if nxt not in states:
                states[nxt] = len(order)
                order.append(nxt)
            row.append(states[nxt])
        trans.append(row)
    finals = frozenset(
        states[pq] for pq in order if keep(pq[0] in a.finals, pq[1] in b.finals)
    )
    return PresAutomaton(a.dim, tuple(tuple(r) for r in trans), 0, finals).minimized()


def complement_automaton(a: PresAutomaton) -> PresAutomaton:
    return PresAutomaton(
        a.dim, a.transitions, a.initial, frozenset(range(a.n_states)) - a.finals
    ).minimized()


def project_track(a: PresAutomaton, track: int) -> PresAutomaton:
    """Erase one track (existential quantification) and re-determinize."""
    dim = a.dim - 1
    n_letters_small = 1 << dim
    low_mask = (1 << track) - 1
    lifted = [
        ((letter & low_mask) | ((letter >> track) << (track + 1)),)
        for letter in range(n_letters_small)
    ]
    lifted = [(base, base | (1 << track)) for (base,) in lifted]

    # zero-saturation: states reaching a final via letters that are zero on
    # every remaining track (the erased track is free)
    z0, z1 = lifted[0]
    sat = set(a.finals)
    changed = True
    while changed:
        changed = False
        for q in range(a.n_states):
            if q not in sat and (a.transitions[q][z0] in sat or a.transitions[q][z1] in sat):
                sat.add(q)
                changed = True
    # subset construction over the small alphabet
    start = frozenset([a.initial])
    states = {start: 0}
    order = [start]
    trans = []
    i = 0
    while i < len(order):
        S = order[i]
        i += 1
        row = []
        rows = [a.transitions[q] for q in S]
        for l0, l1 in lifted:
            nxt = frozenset(
                target for r in rows for target in (r[l0], r[l1])
            )
            if nxt not in states:
                states[nxt] = len(order)
                order.append(nxt)
            row.append(states[nxt])
        trans.append(row)
    finals = frozenset(states[S] for S in order if S & sat)
    return PresAutomaton(dim, tuple(tuple(r) for r in trans), 0, finals).minimized()


def permute_tracks(a: PresAutomaton, perm: Sequence[int]) -> PresAutomaton:
    """Track t of the result carries what track perm[t] of the input carried."""
    n_letters = 1 << a.dim
    lut = [
        sum(((letter >> t) & 1) << perm[t] for t in range(a.dim))
        for letter in range(n_letters)
    ]
    trans = tuple(tuple(row[l] for l in lut) for row in a.transitions)
    return PresAutomaton(a.dim, trans, a.initial, a.finals)


def extend_tracks(a: PresAutomaton, positions: Sequence[int], new_dim: int) -> PresAutomaton:
    """Cylindrify: track positions[i] of the result is track i of the input."""
    _check_tracks(new_dim)
    n_letters = 1 << new_dim
    lut = [
        sum(((letter >> positions[t]) & 1) << t for t in range(a.dim))
        for letter in range(n_letters)
    ]
    trans = tuple(tuple(row[l] for l in lut) for row in a.transitions)
    return PresAutomaton(new_dim, trans, a.initial, a.finals)


def full_automaton(dim: int) -> PresAutomaton:
    _check_tracks(dim)
    return PresAutomaton(dim, ((0,) * (1 << dim),), 0, frozenset([0]))


def empty_automaton(dim: int) -> PresAutomaton:
    _check_tracks(dim)
    return PresAutomaton(dim, ((0,) * (1 << dim),), 0, frozenset())


def automata_equivalent(a: PresAutomaton, b: PresAutomaton) -> bool:
    return a.minimized().canonical() == b.minimized().canonical()


# ---------------------------------------------------------------------------
# Formula compilation
# ---------------------------------------------------------------------------


def compile_formula(f: Formula, var_order: Sequence[str]) -> PresAutomaton:
    """Automaton over the given track order; free vars must be contained in it."""
    order = list(var_order)
    missing = f.free_vars() - set(order)
    if missing:
        raise ValueError(f"unbound variables {sorted(missing)}")
    if f.op == "le":
        coeffs = [0] * len(order)
        for v, c in f.left.coeffs:
            coeffs[order.index(v)] += c
        for v, c in f.right.coeffs:
            coeffs[order.index(v)] -= c
        return atom_automaton(coeffs, f.right.const - f.left.const, equality=False)
    if f.op == "and":
        result = full_automaton(len(order))
        for c in f.children:
            result = product_automaton(result, compile_formula(c, order), lambda x, y: x and y)
        return result
    if f.op == "or":
        result = empty_automaton(len(order))
        for c in f.children:
            result = product_automaton(result, compile_formula(c, order), lambda x, y: x or y)
        return result
    if f.op == "not":
        return complement_automaton(compile_formula(f.children[0], order))
    if f.op == "exists":
        fresh = f.var
        if fresh in order:
            raise ValueError(f"quantified variable {fresh} shadows a track")
        inner = compile_formula(f.children[0], order + [fresh])
        return project_track(inner, len(order))
    if f.op == "forall":
        return compile_formula(not_(exists(f.var, not_(f.children[0]))), order)
    raise ValueError(f.op)


# ---------------------------------------------------------------------------
# SolutionSet: the dual-representation set of valuations
# ---------------------------------------------------------------------------


UNAVAILABLE = "UNAVAILABLE"


class SolutionSet:
    """A set of valuations N^vars with an automaton and/or a semilinear rep.

    The automaton is the canonical carrier for boolean operations and exact
    comparisons; it is materialized on demand so that high-dimensional sets
    built purely through positive operations can live on their representation
    alone.  When both forms are present they denote the same set; the round
    trip is checked in :func:`extract_semilinear`.
    """

    def __init__(self, vars: Sequence[str], dfa: Optional[PresAutomaton] = None,
                 rep: Optional[SemilinearRep] = None,
                 dfa_box: Optional[list] = None):
        if dfa is None and rep is None and (dfa_box is None or dfa_box[0] is None):
            raise ValueError("need an automaton or a representation")
        if len(set(vars)) != len(vars):
            raise ValueError("duplicate variable labels")
        if rep is not None and rep.vars != tuple(vars):
            rep = SemilinearRep(tuple(vars), rep.components)
        self.vars: tuple[str, ...] = tuple(vars)
        # the automaton lives in a shared box so label-only copies materialize once
        self._box = dfa_box if dfa_box is not None else [dfa]
        if dfa is not None:
            self._box[0] = dfa
        if self._box[0] is not None and self._box[0].dim != len(vars):
            raise ValueError("automaton dimension mismatch")
        self._rep = rep

    @property
    def _dfa(self) -> Optional[PresAutomaton]:
        return self._box[0]

    # -- construction -------------------------------------------------------

    @staticmethod
    def from_rep(rep: SemilinearRep) -> "SolutionSet":
        return SolutionSet(rep.vars, rep=rep)

    @staticmethod
    def full(vars: Sequence[str]) -> "SolutionSet":
        return SolutionSet(vars, dfa=full_automaton(len(vars)), rep=rep_full(vars))

    @staticmethod
    def empty(vars: Sequence[str]) -> "SolutionSet":
        return SolutionSet(vars, dfa=empty_automaton(len(vars)), rep=rep_empty(vars))

    @staticmethod
    def point(vars: Sequence[str], v: tuple[int, ...]) -> "SolutionSet":
        return SolutionSet(vars, rep=rep_point(vars, v))

    # -- representation management ------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.vars)

    @property
    def rep(self) -> Optional[SemilinearRep]:
        return self._rep

    @property
    def dfa(self) -> PresAutomaton:
        if self._box[0] is None:
            self._box[0] = rep_to_automaton(self._rep)
        return self._box[0]

    def has_rep(self) -> bool:
        return self._rep is not None

    # -- queries --------------------------------------------------------------

    def membership(self, v) -> bool:
        if isinstance(v, dict):
            v = tuple(v[x] for x in self.vars)
        v = tuple(v)
        if self._dfa is not None:
            return self._dfa.accepts_tuple(v)
        r = self._rep.member(v)
        if r is None:
            return self.dfa.accepts_tuple(v)
        return r

    def is_empty(self) -> bool:
        if self._rep is not None:
            return self._rep.is_empty()
        return self._dfa.is_empty()

    def enumerate(self, box: int) -> list[tuple[int, ...]]:
        if self._dfa is not None:
            return self._dfa.enumerate(box)
        return self._rep.enumerate(box)

    def equivalent(self, other: "SolutionSet") -> bool:
        other = other.aligned_to(self.vars)
        return automata_equivalent(self.dfa, other.dfa)

    def aligned_to(self, vars: Sequence[str]) -> "SolutionSet":
        if tuple(vars) == self.vars:
            return self
        if set(vars) != set(self.vars):
            raise ValueError(f"label mismatch: {vars} vs {self.vars}")
        perm = [self.vars.index(x) for x in vars]
        rep = None
        if self._rep is not None:
            rep = rep_restrict(self._rep, vars)
        dfa = permute_tracks(self._dfa, perm) if self._dfa is not None else None
        return SolutionSet(vars, dfa=dfa, rep=rep)

    # -- boolean operations ---------------------------------------------------

    def union(self, other: "SolutionSet") -> "SolutionSet":
        other = other.aligned_to(self.vars)
        rep = None
        if self._rep is not None and other._rep is not None:
            rep = rep_union(self._rep, other._rep)
        dfa = None
        if rep is None or (self._dfa is not None and other._dfa is not None):
            dfa = product_automaton(self.dfa, other.dfa, lambda x, y: x or y)
        return SolutionSet(self.vars, dfa=dfa, rep=rep)

    def intersect(self, other: "SolutionSet") -> "SolutionSet":
        other = other.aligned_to(self.vars)
        return SolutionSet(
            self.vars, dfa=product_automaton(self.dfa, other.dfa, lambda x, y: x and y)
        )

    def complement(self) -> "SolutionSet":
        return SolutionSet(self.vars, dfa=complement_automaton(self.dfa))

    def project_out(self, var: str) -> "SolutionSet":
        """Existential projection removing one named variable."""
        if var not in self.vars:
            raise ValueError(f"unknown variable {var}")
        t = self.vars.index(var)
        rest = tuple(x for x in self.vars if x != var)
        if self._dfa is None and self._rep is not None:
            return SolutionSet(rest, rep=rep_restrict(self._rep, rest))
        return SolutionSet(rest, dfa=project_track(self.dfa, t))

    def forall(self, var: str) -> "SolutionSet":
        return self.complement().project_out(var).complement()

    def exists(self, var: str) -> "SolutionSet":
        return self.project_out(var)

    # -- positive / structural operations -------------------------------------

    def oplus(self, other: "SolutionSet") -> "SolutionSet":
        """Disjoint-label pairing: valuations agreeing with one from each side."""
        if set(self.vars) & set(other.vars):
            raise ValueError("oplus needs disjoint labels")
        vars = self.vars + other.vars
        rep = None
        if self._rep is not None and other._rep is not None:
            rep = rep_product(self._rep, other._rep)
        dfa = None
        if rep is None:
            _check_tracks(len(vars))
            a = extend_tracks(self.dfa, range(self.dim), len(vars))
            b = extend_tracks(other.dfa, range(self.dim, len(vars)), len(vars))
            dfa = product_automaton(a, b, lambda x, y: x and y)
        return SolutionSet(vars, dfa=dfa, rep=rep)

    def restrict(self, names: Sequence[str]) -> "SolutionSet":
        """Restriction of valuations to a subset of the variables."""
        if not set(names) <= set(self.vars):
            raise ValueError("restrict target not a subset")
        out = self
        for x in [x for x in self.vars if x not in names]:
            out = out.project_out(x)
        return out.aligned_to(names)

    def scale_shift(self, m: int, d: Sequence[int]) -> "SolutionSet":
        """{m * v + d : v in S}."""
        if m < 0 or any(x < 0 for x in d):
            raise ValueError("scale and shift are over the naturals")
        if self._rep is not None:
            rep = rep_scale_shift(self._rep, m, tuple(d))
            return SolutionSet(self.vars, rep=rep)
        primed = [f"{x}'" for x in self.vars]
        phi = and_(
            *(
                eq(term((p, 1)), Term(((x, m),), dd))
                for p, x, dd in zip(primed, self.vars, d)
            )
        )
        rel = compile_formula(phi, list(self.vars) + primed)
        src = extend_tracks(self.dfa, range(self.dim), 2 * self.dim)
        both = product_automaton(rel, src, lambda x, y: x and y)
        for _ in range(self.dim):
            both = project_track(both, 0)
        return SolutionSet(primed, dfa=both).rename(dict(zip(primed, self.vars)))

    def rename(self, mapping: dict[str, str]) -> "SolutionSet":
        vars = tuple(mapping.get(x, x) for x in self.vars)
        rep = SemilinearRep(vars, self._rep.components) if self._rep is not None else None
        return SolutionSet(vars, rep=rep, dfa_box=self._box)

    def diagonalize(self, x: str, y: str) -> "SolutionSet":
        """Intersection with the diagonal v(x) = v(y)."""
        if x not in self.vars or y not in self.vars:
            raise ValueError("unknown variable")
        diag = compile_formula(eq(term(x), term(y)), self.vars)
        return SolutionSet(self.vars, dfa=product_automaton(self.dfa, diag, lambda a, b: a and b))

    def __repr__(self):
        backing = []
        if self._rep is not None:
            backing.append(f"rep:{len(self._rep.components)}")
        if self._dfa is not None:
            backing.append(f"dfa:{self._dfa.n_states}")
        return f"SolutionSet({','.join(self.vars)}; {' '.join(backing)})"


def from_linear(rep: SemilinearRep) -> SolutionSet:
    return SolutionSet.from_rep(rep.validate())


def formula_to_set(f: Formula, vars: Optional[Sequence[str]] = None) -> SolutionSet:
    if vars is None:
        vars = sorted(f.free_vars())
    return SolutionSet(vars, dfa=compile_formula(f, vars))


_REP_AUTO_CACHE: dict[tuple, PresAutomaton] = {}


def rep_to_automaton(rep: SemilinearRep) -> PresAutomaton:
    """Automaton for an explicit semilinear representation.

    Components with few periods compile in one shot (one existential
    variable per period); wide components fall back to adding one ray at a
    time, so the track count never depends on the period count.  Results are
    cached by component structure.
    """
    d = rep.dim
    _check_tracks(d)
    rep = rep.pruned()
    key = (d, rep.components)
    hit = _REP_AUTO_CACHE.get(key)
    if hit is not None:
        return hit
    # components sharing a period set also share their rays: one finite
    # automaton for all their bases, then one ray per period
    groups: dict[tuple, list[tuple[int, ...]]] = {}
    for comp in rep.components:
        groups.setdefault(comp.periods, []).append(comp.base)
    result = empty_automaton(d)
    for periods, bases in sorted(groups.items()):
        gkey = (d, periods, tuple(sorted(bases)))
        auto = _REP_AUTO_CACHE.get(gkey)
        if auto is None:
            auto = _finite_set_automaton(d, bases)
            for p in periods:
                auto = _add_ray(auto, p)
            _REP_AUTO_CACHE[gkey] = auto
        result = product_automaton(result, auto, lambda x, y: x or y)
    _REP_AUTO_CACHE[key] = result
    return result


def _finite_set_automaton(d: int, points: Sequence[tuple[int, ...]]) -> PresAutomaton:
    """DFA accepting exactly the padded encodings of a finite tuple set."""
    n_letters = 1 << d
    # states: frozensets of remaining suffix-sets, built by following bits
    start = frozenset(points)
    states: dict = {start: 0}
    order = [start]
    trans = []
    i = 0
    while i < len(order):
        S = order[i]
        i += 1
        row = []
        for letter in range(n_letters):
            nxt = frozenset(
                tuple(x >> 1 for x in v)
                for v in S
                if all((x & 1) == (letter >> t & 1) for t, x in enumerate(v))
            )
            if nxt not in states:
                states[nxt] = len(order)
                order.append(nxt)
            row.append(states[nxt])
        trans.append(row)
    zero = (0,) * d
    finals = frozenset(states[S] for S in order if zero in S)
    return PresAutomaton(d, tuple(tuple(r) for r in trans), 0, finals).minimized()


_RAY_CACHE: dict[tuple, PresAutomaton] = {}


def _add_ray(auto: PresAutomaton, period: tuple[int, ...]) -> PresAutomaton:
    """{v + m * period : v accepted, m in N}.

    Only the coordinates the period moves get an input and an output track;
    unmoved coordinates share one track with the source automaton.
    """
    d = auto.dim
    active = [t for t in range(d) if period[t]]
    if not active:
        return auto
    na = len(active)
    inactive = [t for t in range(d) if not period[t]]
    # track layout: inactive (shared) | active inputs | active outputs | m
    total = len(inactive) + 2 * na + 1
    _check_tracks(total)
    rel_key = (tuple(period[t] for t in active), len(inactive))
    rel = _RAY_CACHE.get(rel_key)
    if rel is None:
        names_in = [f"i{j}" for j in range(na)]
        names_out = [f"o{j}" for j in range(na)]
        order = [f"s{j}" for j in range(len(inactive))] + names_in + names_out + ["m"]
        phi = and_(
            *(
                eq(term(names_out[j]), term((names_in[j], 1), ("m", period[active[j]])))
                for j in range(na)
            )
        )
        rel = compile_formula(phi, order)
        _RAY_CACHE[rel_key] = rel
    # source: inactive coord k sits at track k, active coord j at inactive+j
    positions = [0] * d
    for k, t in enumerate(inactive):
        positions[t] = k
    for j, t in enumerate(active):
        positions[t] = len(inactive) + j
    src = extend_tracks(auto, positions, total)
    both = product_automaton(rel, src, lambda x, y: x and y)
    both = project_track(both, total - 1)  # m
    for _ in range(na):  # active inputs
        both = project_track(both, len(inactive))
    # remaining layout: inactive | active outputs; permute back
    perm = [0] * d
    for k, t in enumerate(inactive):
        perm[t] = k
    for j, t in enumerate(active):
        perm[t] = len(inactive) + j
    return permute_tracks(both, perm)


# ---------------------------------------------------------------------------
# Semilinear extraction
# ---------------------------------------------------------------------------


def extract_semilinear(s: SolutionSet, effort: int = 3):
    """A verified semilinear representation of s, or UNAVAILABLE.

    A representation carried through positive operations is verified by a
    round trip through the automaton engine and returned.  Otherwise one is
    proposed by period detection on bounded enumerations and only returned
    if the round trip confirms exact equality.
    """
    if s.has_rep():
        cand = s.rep.pruned()
        if s._dfa is None or automata_equivalent(rep_to_automaton(cand), s.dfa):
            return cand
    if s.is_empty():
        return rep_empty(s.vars)
    boxes = [6, 10, 14][: max(1, effort)]
    for box in boxes:
        rep = _propose_rep(s, box)
        if rep is not None:
            return rep
    return UNAVAILABLE


def _propose_rep(s: SolutionSet, box: int) -> Optional[SemilinearRep]:
    pts = s.enumerate(box)
    if not pts:
        return None
    ptset = set(pts)
    d = s.dim
    # candidate periods: small member differences that map every sampled
    # member back into the set
    diffs: dict[tuple[int, ...], int] = {}
    for i, a in enumerate(pts):
        for b in pts[i + 1 :]:
            dd = tuple(y - x for x, y in zip(a, b))
            if all(x >= 0 for x in dd) and any(dd) and max(dd) <= box:
                diffs[dd] = diffs.get(dd, 0) + 1
    cands = sorted(diffs, key=lambda dd: (sum(dd), dd))[:60]
    sample = pts[: min(len(pts), 40)]
    global_periods = [
        dd
        for dd in cands
        if all(s.membership(tuple(x + y for x, y in zip(v, dd))) for v in sample)
    ][:12]
    components: list[LinearSet] = []
    covered: set[tuple[int, ...]] = set()
    for b in pts:
        if b in covered:
            continue
        periods = [
            p
            for p in global_periods
            if s.membership(tuple(x + y for x, y in zip(b, p)))
            and s.membership(tuple(x + 2 * y for x, y in zip(b, p)))
        ]
        comp = LinearSet(b, tuple(periods))
        comp = _shrink_to_subset(comp, s)
        if comp is None:
            continue
        components.append(comp)
        covered |= ls_enumerate(comp, box)
    if set(pts) - covered:
        return None
    rep = SemilinearRep(s.vars, tuple(components)).pruned()
    if automata_equivalent(rep_to_automaton(rep), s.dfa):
        return rep
    return None


def _shrink_to_subset(comp: LinearSet, s: SolutionSet) -> Optional[LinearSet]:
    """Drop periods until the component is included in s (exact check)."""
    periods = list(comp.periods)
    while True:
        cand = SemilinearRep(s.vars, (LinearSet(comp.base, tuple(periods)),))
        bad = product_automaton(
            rep_to_automaton(cand), complement_automaton(s.dfa), lambda x, y: x and y
        )
        if bad.is_empty():
            return LinearSet(comp.base, tuple(periods))
        if not periods:
            return None
        # find an offending period by testing singletons
        for i, p in enumerate(periods):
            single = SemilinearRep(s.vars, (LinearSet(comp.base, (p,)),))
            chk = product_automaton(
                rep_to_automaton(single), complement_automaton(s.dfa), lambda x, y: x and y
            )
            if not chk.is_empty():
                periods.pop(i)
                break
        else:
            periods.pop()
