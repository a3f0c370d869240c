"""NFAs and asynchronous transducers over finite alphabets, with exact
Parikh-image extraction.

Letters are integer ids 0..n_letters-1; group alphabets map their letter
enumeration onto these ids, but nothing here assumes a group structure.

Parikh extraction runs by state elimination over the commutative semiring of
semilinear sets (union, Minkowski sum, and the subset-formula star), i.e. the
classic inductive construction evaluated with memoized edge values.  Each
emitted linear set has as base the Parikh vector of one short accepting path
and as periods the Parikh vectors of cycles met along it; exactness is
enforced by the brute-force suites rather than asserted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .presburger import (
    EffortExceeded,
    LinearSet,
    SemilinearRep,
    rep_empty,
    rep_point,
    rep_star,
    rep_union,
)


@dataclass(frozen=True)
class Nfa:
    """Nondeterministic finite automaton without epsilon transitions."""

    n_letters: int
    n_states: int
    initial: frozenset[int]
    finals: frozenset[int]
    transitions: frozenset[tuple[int, int, int]]  # (state, letter, state)

    def __post_init__(self):
        for p, a, q in self.transitions:
            if not (0 <= p < self.n_states and 0 <= q < self.n_states):
                raise ValueError("transition endpoint out of range")
            if not (0 <= a < self.n_letters):
                raise ValueError("transition letter out of range")

    @staticmethod
    def build(n_letters: int, n_states: int, initial: Iterable[int],
              finals: Iterable[int], transitions: Iterable[tuple[int, int, int]]) -> "Nfa":
        return Nfa(n_letters, n_states, frozenset(initial), frozenset(finals),
                   frozenset(transitions))

    def out_edges(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_states)]
        for p, a, q in self.transitions:
            adj[p].append((a, q))
        return adj

    def accepts(self, letters: Sequence[int]) -> bool:
        current = set(self.initial)
        adj = self.out_edges()
        for a in letters:
            current = {q for p in current for (b, q) in adj[p] if b == a}
            if not current:
                return False
        return bool(current & self.finals)

    def words(self, max_len: int) -> list[tuple[int, ...]]:
        """All accepted words of length at most max_len (for oracles)."""
        adj = self.out_edges()
        out = []
        level = [((), frozenset(self.initial))]
        for _ in range(max_len + 1):
            nxt = []
            for w, states in level:
                if states & self.finals:
                    out.append(w)
                if len(w) < max_len:
                    by_letter: dict[int, set[int]] = {}
                    for p in states:
                        for a, q in adj[p]:
                            by_letter.setdefault(a, set()).add(q)
                    for a, qs in sorted(by_letter.items()):
                        nxt.append((w + (a,), frozenset(qs)))
            level = nxt
            if not level:
                break
        return out

    def is_empty(self) -> bool:
        return not (_reachable(self) & _coreachable(self))


def _reachable(nfa: Nfa) -> set[int]:
    adj = nfa.out_edges()
    seen = set(nfa.initial)
    stack = list(nfa.initial)
    while stack:
        p = stack.pop()
        for _, q in adj[p]:
            if q not in seen:
                seen.add(q)
                stack.append(q)
    return seen


def _coreachable(nfa: Nfa) -> set[int]:
    radj: list[list[int]] = [[] for _ in range(nfa.n_states)]
    for p, _, q in nfa.transitions:
        radj[q].append(p)
    seen = set(nfa.finals)
    stack = list(nfa.finals)
    while stack:
        q = stack.pop()
        for p in radj[q]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def trim(nfa: Nfa) -> Nfa:
    """Restrict to states lying on some path from an initial to a final state."""
    alive = sorted(_reachable(nfa) & _coreachable(nfa))
    remap = {q: i for i, q in enumerate(alive)}
    return Nfa(
        nfa.n_letters,
        len(alive),
        frozenset(remap[q] for q in nfa.initial if q in remap),
        frozenset(remap[q] for q in nfa.finals if q in remap),
        frozenset(
            (remap[p], a, remap[q])
            for p, a, q in nfa.transitions
            if p in remap and q in remap
        ),
    )


def language_between(nfa: Nfa, p: int, q: int) -> Nfa:
    """Words labelling a path p -> q, as an automaton."""
    if not (0 <= p < nfa.n_states and 0 <= q < nfa.n_states):
        raise ValueError("unknown states")
    return trim(Nfa(nfa.n_letters, nfa.n_states, frozenset([p]), frozenset([q]),
                    nfa.transitions))


def union_nfa(a: Nfa, b: Nfa) -> Nfa:
    off = a.n_states
    return Nfa(
        max(a.n_letters, b.n_letters),
        a.n_states + b.n_states,
        a.initial | frozenset(q + off for q in b.initial),
        a.finals | frozenset(q + off for q in b.finals),
        a.transitions | frozenset((p + off, x, q + off) for p, x, q in b.transitions),
    )


def rename_states(nfa: Nfa, perm: Sequence[int]) -> Nfa:
    return Nfa(
        nfa.n_letters,
        nfa.n_states,
        frozenset(perm[q] for q in nfa.initial),
        frozenset(perm[q] for q in nfa.finals),
        frozenset((perm[p], a, perm[q]) for p, a, q in nfa.transitions),
    )


def invert_nfa(nfa: Nfa, letter_inverse: Sequence[int]) -> Nfa:
    """Automaton for the letterwise-inverted reversal of the language."""
    return Nfa(
        nfa.n_letters,
        nfa.n_states,
        nfa.finals,
        nfa.initial,
        frozenset((q, letter_inverse[a], p) for p, a, q in nfa.transitions),
    )


def word_nfa(n_letters: int, letters: Sequence[int]) -> Nfa:
    """Singleton-language automaton (a path)."""
    n = len(letters) + 1
    return Nfa(
        n_letters, n, frozenset([0]), frozenset([n - 1]),
        frozenset((i, a, i + 1) for i, a in enumerate(letters)),
    )


def cycle_nfa(n_letters: int, letters: Sequence[int]) -> Nfa:
    """Automaton whose base-to-base loops spell powers of the given word."""
    n = max(1, len(letters))
    trans = frozenset((i, a, (i + 1) % n) for i, a in enumerate(letters))
    return Nfa(n_letters, n, frozenset([0]), frozenset([0]), trans)


# ---------------------------------------------------------------------------
# Parikh images
# ---------------------------------------------------------------------------


def parikh(nfa: Nfa, letter_names: Optional[Sequence[str]] = None,
           star_cap: int = 4000) -> SemilinearRep:
    """Exact Parikh image of L(nfa) in the fixed letter enumeration."""
    if letter_names is None:
        letter_names = tuple(f"a{i}" for i in range(nfa.n_letters))
    vectors = []
    for a in range(nfa.n_letters):
        v = [0] * nfa.n_letters
        v[a] = 1
        vectors.append(tuple(v))
    return parikh_weighted(nfa, tuple(letter_names), vectors, star_cap=star_cap)


def parikh_weighted(nfa: Nfa, names: tuple[str, ...],
                    letter_vectors: Sequence[tuple[int, ...]],
                    star_cap: int = 4000, small_cutoff: int = 8) -> SemilinearRep:
    """Parikh image after mapping each letter to a vector contribution.

    Small automata go through an exact visit-set decomposition (short
    accepting runs per set of visited states, plus the simple cycles inside
    that set as periods), which tolerates dense transition tables.  Larger
    automata, which in this package are sparse corridor-shaped graphs, go
    through commutative state elimination instead.  Zero-vector letters act
    like silent moves and are removed by a closure pass first.
    """
    dim = len(names)
    nfa = trim(nfa)
    if not nfa.n_states or not nfa.initial:
        return rep_empty(names)
    if nfa.n_states <= small_cutoff:
        return _parikh_small(nfa, names, letter_vectors)

    zero = (0,) * dim
    zero_adj: list[set[int]] = [set() for _ in range(nfa.n_states)]
    weighted: list[tuple[int, tuple[int, ...], int]] = []
    for p, a, q in nfa.transitions:
        v = letter_vectors[a]
        if any(v):
            weighted.append((p, v, q))
        else:
            zero_adj[p].add(q)

    closure: list[set[int]] = []
    for s in range(nfa.n_states):
        seen = {s}
        stack = [s]
        while stack:
            x = stack.pop()
            for y in zero_adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        closure.append(seen)

    # nodes: 0 = source, 1 = sink, states shifted by 2
    edges: dict[tuple[int, int], SemilinearRep] = {}

    def add_edge(i: int, j: int, rep: SemilinearRep):
        if rep.is_empty():
            return
        if (i, j) in edges:
            old = edges[(i, j)]
            merged = SemilinearRep(
                old.vars, tuple(dict.fromkeys(old.components + rep.components))
            )
            if len(merged.components) > 24:
                merged = merged.pruned(fuel=300)
            edges[(i, j)] = merged
        else:
            edges[(i, j)] = rep

    eps = rep_point(names, zero)
    finals = set(nfa.finals)
    if any(closure[s] & finals for s in nfa.initial):
        add_edge(0, 1, eps)
    member_of_closure: list[set[int]] = [set() for _ in range(nfa.n_states)]
    for s in range(nfa.n_states):
        for t in closure[s]:
            member_of_closure[t].add(s)
    for p, v, q in weighted:
        rep_v = rep_point(names, v)
        for s in member_of_closure[p]:
            add_edge(s + 2, q + 2, rep_v)
        if any(p in closure[s] for s in nfa.initial):
            add_edge(0, q + 2, rep_v)
    for q in range(nfa.n_states):
        if closure[q] & finals:
            add_edge(q + 2, 1, eps)

    nodes = {i for ij in edges for i in ij}
    nodes.discard(0)
    nodes.discard(1)

    def degree(n: int) -> int:
        ins = sum(1 for (i, j) in edges if j == n and i != n)
        outs = sum(1 for (i, j) in edges if i == n and j != n)
        return ins * outs

    while nodes:
        n = min(nodes, key=degree)
        nodes.discard(n)
        loop = edges.pop((n, n), None)
        loop_star = rep_star(loop, cap=star_cap) if loop is not None else None
        ins = [(i, r) for (i, j), r in list(edges.items()) if j == n]
        outs = [(j, r) for (i, j), r in list(edges.items()) if i == n]
        for (i, j) in [k for k in edges if k[0] == n or k[1] == n]:
            edges.pop((i, j), None)
        for i, rin in ins:
            mid = _rep_minkowski(rin, loop_star) if loop_star is not None else rin
            for j, rout in outs:
                add_edge(i, j, _rep_minkowski(mid, rout))

    return edges.get((0, 1), rep_empty(names)).pruned()


def _parikh_small(nfa: Nfa, names: tuple[str, ...],
                  letter_vectors: Sequence[tuple[int, ...]]) -> SemilinearRep:
    """Exact Parikh image by visit-set decomposition (small automata only).

    Runs visiting exactly the state set S decompose into an accepting run of
    length at most |S|(|S|+1) (shedding cycles whose states also occur
    elsewhere) plus simple cycles of the subgraph induced by S, each
    insertable at a visited state.  One linear set per (visit set, short-run
    Parikh value) is therefore exact.
    """
    n = nfa.n_states
    dim = len(names)
    adj = nfa.out_edges()

    # simple cycles, recorded as (state mask, Parikh vector)
    cycles: set[tuple[int, tuple[int, ...]]] = set()

    def cycle_dfs(start: int, state: int, mask: int, vec: tuple[int, ...]):
        for a, q in adj[state]:
            v = letter_vectors[a]
            nvec = tuple(x + y for x, y in zip(vec, v)) if any(v) else vec
            if q == start:
                if any(nvec):
                    cycles.add((mask, nvec))
            elif q > start and not (mask >> q & 1):
                cycle_dfs(start, q, mask | 1 << q, nvec)

    for s in range(n):
        cycle_dfs(s, s, 1 << s, (0,) * dim)

    # short accepting runs per visit set
    maxlen = n * (n + 1)
    zero = (0,) * dim
    seen: set[tuple[int, int, tuple[int, ...]]] = set()
    level = set()
    for q in nfa.initial:
        level.add((q, 1 << q, zero))
    seen |= level
    accepted: dict[int, set[tuple[int, ...]]] = {}
    for _ in range(maxlen + 1):
        for q, mask, vec in level:
            if q in nfa.finals:
                accepted.setdefault(mask, set()).add(vec)
        nxt = set()
        for q, mask, vec in level:
            for a, r in adj[q]:
                v = letter_vectors[a]
                nvec = tuple(x + y for x, y in zip(vec, v)) if any(v) else vec
                item = (r, mask | 1 << r, nvec)
                if item not in seen:
                    seen.add(item)
                    nxt.add(item)
        level = nxt
        if not level:
            break

    comps: list[LinearSet] = []
    for mask, vecs in accepted.items():
        periods = tuple(sorted({pv for cmask, pv in cycles if cmask & ~mask == 0}))
        bases = sorted(vecs, key=lambda v: (sum(v), v))
        kept: list[tuple[int, ...]] = []
        for b in bases:
            dominated = False
            for b2 in kept:
                d = tuple(x - y for x, y in zip(b, b2))
                if all(x >= 0 for x in d):
                    from .presburger import cone_member

                    if cone_member(d, periods, fuel=4000) is True:
                        dominated = True
                        break
            if not dominated:
                kept.append(b)
        for b in kept:
            comps.append(LinearSet(b, periods))
    return SemilinearRep(names, tuple(comps)).pruned(fuel=800)


_PERIOD_MERGE: dict = {}


def _merge_periods(pa: tuple, pb: tuple) -> tuple:
    if pa == pb or not pb:
        return pa
    if not pa:
        return pb
    key = (pa, pb)
    hit = _PERIOD_MERGE.get(key)
    if hit is None:
        hit = tuple(sorted(set(pa) | set(pb)))
        _PERIOD_MERGE[key] = hit
    return hit


def _rep_minkowski(a: SemilinearRep, b: SemilinearRep) -> SemilinearRep:
    comps = []
    for ca in a.components:
        for cb in b.components:
            comps.append(
                LinearSet(
                    tuple(x + y for x, y in zip(ca.base, cb.base)),
                    _merge_periods(ca.periods, cb.periods),
                )
            )
    out = SemilinearRep(a.vars, tuple(dict.fromkeys(comps)))
    if len(out.components) > 12:
        out = out.pruned(fuel=300)
    return out


# ---------------------------------------------------------------------------
# Transducers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transducer:
    """Asynchronous two-tape automaton: every transition reads on one tape."""

    n_letters: int
    n_states: int
    initial: frozenset[int]
    finals: frozenset[int]
    transitions: frozenset[tuple[int, Optional[int], Optional[int], int]]

    def __post_init__(self):
        for p, a, b, q in self.transitions:
            if (a is None) == (b is None):
                raise ValueError("transition must read on exactly one tape")

    def pairs(self, max_len: int) -> set[tuple[tuple[int, ...], tuple[int, ...]]]:
        """Accepted pairs with both components of length at most max_len."""
        adj: dict[int, list[tuple[Optional[int], Optional[int], int]]] = {}
        for p, a, b, q in self.transitions:
            adj.setdefault(p, []).append((a, b, q))
        out: set[tuple[tuple[int, ...], tuple[int, ...]]] = set()
        seen = set()
        stack = [(p, (), ()) for p in self.initial]
        while stack:
            p, u, v = stack.pop()
            if (p, u, v) in seen:
                continue
            seen.add((p, u, v))
            if p in self.finals:
                out.add((u, v))
            for a, b, q in adj.get(p, []):
                nu = u + (a,) if a is not None else u
                nv = v + (b,) if b is not None else v
                if len(nu) <= max_len and len(nv) <= max_len:
                    stack.append((q, nu, nv))
        return out


def transducer_to_pair_nfa(t: Transducer) -> Nfa:
    """One-tape automaton over the doubled alphabet: second-tape letters are
    shifted by n_letters, so the Parikh image in the doubled enumeration is
    exactly the set of Parikh pairs of the accepted relation."""
    trans = set()
    for p, a, b, q in t.transitions:
        if a is not None:
            trans.add((p, a, q))
        else:
            trans.add((p, b + t.n_letters, q))
    return Nfa(2 * t.n_letters, t.n_states, t.initial, t.finals, frozenset(trans))


def parse_nfa_json(data: dict) -> tuple[Nfa, tuple[str, ...]]:
    """Automaton from the shared JSON fixture format."""
    names = tuple(data["alphabet"])
    index = {a: i for i, a in enumerate(names)}
    trans = frozenset((p, index[a], q) for p, a, q in data["transitions"])
    nfa = Nfa(len(names), data["states"], frozenset(data["initial"]),
              frozenset(data["final"]), trans)
    return nfa, names


def nfa_to_json(nfa: Nfa, names: Sequence[str]) -> dict:
    return {
        "alphabet": list(names),
        "states": nfa.n_states,
        "initial": sorted(nfa.initial),
        "final": sorted(nfa.finals),
        "transitions": sorted([p, names[a], q] for p, a, q in nfa.transitions),
    }
