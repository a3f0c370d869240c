"""Finitely generated subgroups of free groups via folded core graphs.

A subgroup graph is a based, edge-labelled graph that is folded (no vertex
has two equally-labelled outgoing edges) and core (every non-base vertex has
degree at least two).  Membership is tracing the reduced word; the reduced
base-to-base path labels form the subgroup's regular language of geodesics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .automata import Nfa, trim
from .words import Alphabet, Word, free_reduce, inv_letter, is_reduced


class StallingsGraph:
    def __init__(self, alphabet: Alphabet, edges: list[dict[int, int]], base: int = 0):
        self.alphabet = alphabet
        self.edges = edges  # edges[v][letter] = w, stored in both directions
        self.base = base

    @property
    def n_vertices(self) -> int:
        return len(self.edges)

    def step(self, v: int, letter: int) -> Optional[int]:
        return self.edges[v].get(letter)

    def contains(self, w: Word) -> bool:
        """True iff the element represented by w lies in the subgroup."""
        v = self.base
        for a in free_reduce(w).letters:
            nxt = self.edges[v].get(a)
            if nxt is None:
                return False
            v = nxt
        return v == self.base

    def canonical_signature(self) -> tuple:
        """Isomorphism invariant: BFS renumbering from the base (graphs are
        deterministic once folded, so the numbering is canonical)."""
        order = {self.base: 0}
        queue = [self.base]
        sig = []
        i = 0
        while i < len(queue):
            v = queue[i]
            i += 1
            row = []
            for a in range(self.alphabet.size):
                w = self.edges[v].get(a)
                if w is None:
                    row.append(-1)
                    continue
                if w not in order:
                    order[w] = len(queue)
                    queue.append(w)
                row.append(order[w])
            sig.append(tuple(row))
        return tuple(sig)

    def language(self) -> Nfa:
        """Automaton of the freely reduced base-to-base path labels.

        States are (vertex, last letter) pairs so immediate backtracking is
        impossible; in a folded graph the non-backtracking paths carry
        exactly the reduced words.  Nonempty words accept at one dedicated
        final state, the empty word at the initial state.
        """
        k = self.alphabet.size
        n = self.n_vertices
        START, FINAL = n * k, n * k + 1

        def sid(v: int, last: int) -> int:
            return v * k + last

        trans = set()
        for v in range(n):
            for a, w in self.edges[v].items():
                if v == self.base:
                    trans.add((START, a, sid(w, a)))
                    if w == self.base:
                        trans.add((START, a, FINAL))
                for last in range(k):
                    if last != inv_letter(a):
                        trans.add((sid(v, last), a, sid(w, a)))
                        if w == self.base:
                            trans.add((sid(v, last), a, FINAL))
        nfa = Nfa(k, n * k + 2, frozenset([START]), frozenset([START, FINAL]),
                  frozenset(trans))
        return trim(nfa)


def stallings_build(gens: Sequence[Word]) -> StallingsGraph:
    """Folded core graph of the subgroup generated by the given words."""
    if not gens:
        raise ValueError("need at least one generator word (possibly trivial)")
    alphabet = gens[0].alphabet
    edges: list[dict[int, int]] = [{}]
    for g in gens:
        r = free_reduce(g)
        v = 0
        for i, a in enumerate(r.letters):
            if i == len(r.letters) - 1:
                w = 0
            else:
                edges.append({})
                w = len(edges) - 1
            edges[v][a] = w
            edges[w][inv_letter(a)] = v
            v = w
    _fold(edges)
    _core(edges, base=0)
    return StallingsGraph(alphabet, edges)


def _fold(edges: list[dict[int, int]]):
    """Identify targets of equally-labelled edges until deterministic.

    Vertices are merged through a union-find; edge dictionaries may
    transiently hold several targets per label in a worklist.
    """
    parent = list(range(len(edges)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    multi: list[dict[int, set[int]]] = [
        {a: {w} for a, w in e.items()} for e in edges
    ]

    def union(x: int, y: int):
        x, y = find(x), find(y)
        if x == y:
            return
        if len(multi[x]) < len(multi[y]):
            x, y = y, x
        parent[y] = x
        for a, ws in multi[y].items():
            multi[x].setdefault(a, set()).update(ws)
        multi[y] = {}
        queue.append(x)

    queue = list(range(len(edges)))
    while queue:
        v = find(queue.pop())
        for a, ws in list(multi[v].items()):
            ws = {find(w) for w in ws}
            multi[v][a] = ws
            if len(ws) > 1:
                it = iter(ws)
                first = next(it)
                for other in it:
                    union(first, other)
                queue.append(v)
                break

    # rebuild deterministic edge maps over representatives
    reps = sorted({find(v) for v in range(len(edges))})
    remap = {r: i for i, r in enumerate(reps)}
    new_edges: list[dict[int, int]] = [{} for _ in reps]
    for v in range(len(edges)):
        fv = find(v)
        for a, ws in multi[fv].items():
            for w in ws:
                new_edges[remap[fv]][a] = remap[find(w)]
    # base must stay vertex 0
    b = remap[find(0)]
    if b != 0:
        perm = {b: 0, 0: b}
        swapped: list[dict[int, int]] = [
            {a: perm.get(w, w) for a, w in new_edges[perm.get(v, v)].items()}
            for v in range(len(new_edges))
        ]
        new_edges = swapped
    edges[:] = new_edges


def _core(edges: list[dict[int, int]], base: int):
    """Iteratively remove degree-one vertices other than the base."""
    while True:
        victim = None
        for v in range(len(edges)):
            if v != base and len(edges[v]) == 1:
                victim = v
                break
        if victim is None:
            return
        ((a, w),) = edges[victim].items()
        del edges[w][inv_letter(a)]
        edges[victim] = {}
        # compact: drop empty dicts, remap indices
        alive = [v for v in range(len(edges)) if edges[v] or v == base]
        remap = {v: i for i, v in enumerate(alive)}
        edges[:] = [
            {a: remap[w] for a, w in edges[v].items()} for v in alive
        ]


def trivial_subgroup(alphabet: Alphabet) -> StallingsGraph:
    return StallingsGraph(alphabet, [{}])


def whole_group(alphabet: Alphabet) -> StallingsGraph:
    edges = [{a: 0 for a in range(alphabet.size)}]
    return StallingsGraph(alphabet, edges)


def contains(graph: StallingsGraph, w: Word) -> bool:
    return graph.contains(w)


def subgroup_language(graph: StallingsGraph) -> Nfa:
    return graph.language()


def primitive_root(w: Word) -> Word:
    """Primitive root of a nontrivial element: r with w = r^m, r not a proper power.

    Computed on the cyclically reduced core; the conjugator is reapplied.
    """
    from .words import cyclic_decompose

    s, c = cyclic_decompose(w)
    n = len(c)
    if n == 0:
        raise ValueError("trivial element has no primitive root")
    for d in range(1, n + 1):
        if n % d == 0:
            cand = c[:d]
            if cand.letters * (n // d) == c.letters:
                return free_reduce(s * cand * s.inverse())
    raise AssertionError("unreachable")


def is_power_of(w: Word, root: Word) -> bool:
    r = free_reduce(w)
    if not r:
        return True
    for signed in (root, root.inverse()):
        acc = root.alphabet.epsilon()
        while len(acc) <= len(r):
            if acc.letters == r.letters:
                return True
            acc = free_reduce(acc * signed)
            if not acc:
                break
    return False


WHOLE = "WHOLE"
CYCLIC = "CYCLIC"
TRIVIAL = "TRIVIAL"


def centralizer(elements: Sequence[Word]) -> tuple[str, Optional[Word], StallingsGraph]:
    """Centralizer of a finite set in the free group.

    Returns (kind, root, graph): the whole group when every element is
    trivial, the maximal cyclic subgroup over the common primitive root when
    one exists, and the trivial subgroup otherwise.
    """
    if not elements:
        raise ValueError("need the alphabet; pass at least one word (may be trivial)")
    alphabet = elements[0].alphabet
    nontrivial = [w for w in elements if free_reduce(w)]
    if not nontrivial:
        return WHOLE, None, whole_group(alphabet)
    root = primitive_root(nontrivial[0])
    for w in nontrivial[1:]:
        if not is_power_of(w, root):
            return TRIVIAL, None, trivial_subgroup(alphabet)
    return CYCLIC, root, stallings_build([root])
