"""Independent brute-force ground truth for the extension word problem.

This module decides trivialities by exhaustive pin rewriting over all
positions and orders; deliberately it shares nothing with the reduction
strategies of the solver layers beyond the word substrate.  Subgroup
membership is decided on a Nielsen-reduced generating set by closure search,
not by graph folding.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

from .presburger import EffortExceeded
from .words import Alphabet, KnapsackExpr, Word, free_reduce, inv_letter


def nielsen_reduce(gens: Sequence[Word]) -> list[Word]:
    """Nielsen-reduced basis of the subgroup generated by the given words.

    Repeatedly drops trivial or duplicate generators and replaces a
    generator by a shorter product with another; the total length strictly
    decreases, so the loop terminates.  The result is a free basis with the
    Nielsen property: products of distinct basis elements do not cancel past
    the middle of any factor.
    """
    basis = [free_reduce(g) for g in gens]
    basis = [g for g in basis if g]
    changed = True
    while changed:
        changed = False
        basis = [g for g in basis if g]
        basis.sort(key=lambda g: (len(g), g.letters))
        for i in range(len(basis)):
            for j in range(len(basis)):
                if i == j:
                    continue
                a, b = basis[i], basis[j]
                for bb in (b, b.inverse()):
                    for cand in (free_reduce(a * bb), free_reduce(bb * a)):
                        if len(cand) < len(basis[i]):
                            basis[i] = cand
                            changed = True
                if changed:
                    break
            if changed:
                break
        seen: set[tuple[int, ...]] = set()
        dedup = []
        for g in basis:
            if not g.letters:
                changed = True
                continue
            key = min(g.letters, g.inverse().letters)
            if key in seen:
                changed = True
                continue
            seen.add(key)
            dedup.append(g)
        basis = dedup
    return basis


class SubgroupOracle:
    """Membership by bounded closure over a Nielsen-reduced basis."""

    def __init__(self, gens: Sequence[Word]):
        if not gens:
            raise ValueError("pass at least one word (may be trivial)")
        self.alphabet = gens[0].alphabet
        self.basis = nielsen_reduce(gens)
        self._balls: dict[int, set[tuple[int, ...]]] = {}

    def ball(self, max_len: int) -> set[tuple[int, ...]]:
        """Reduced words of subgroup elements of length at most max_len.

        With a Nielsen-reduced basis, every element of length L is a product
        whose prefixes stay within L plus one generator length, so closure
        with that margin is complete.
        """
        margin = max((len(g) for g in self.basis), default=0)
        cap = max_len + margin
        if max_len in self._balls:
            return self._balls[max_len]
        seen: set[tuple[int, ...]] = {()}
        frontier = [()]
        while frontier:
            nxt = []
            for t in frontier:
                w = Word(self.alphabet, t)
                for g in self.basis:
                    for gg in (g, g.inverse()):
                        r = free_reduce(w * gg).letters
                        if len(r) <= cap and r not in seen:
                            seen.add(r)
                            nxt.append(r)
            frontier = nxt
        out = {t for t in seen if len(t) <= max_len}
        self._balls[max_len] = out
        return out

    def contains(self, w: Word) -> bool:
        r = free_reduce(w).letters
        return r in self.ball(len(r))


def brute_subgroup_ball(gens: Sequence[Word], max_len: int) -> set[tuple[int, ...]]:
    return SubgroupOracle(gens).ball(max_len)


class HnnOracle:
    """Word problem by exhaustive rewriting; built from raw data so that no
    solver-side structures are reused."""

    def __init__(self, base: Alphabet, stables: Sequence[tuple[str, Sequence[Word]]]):
        self.base = base
        self.alphabet = base.extend([name for name, _ in stables])
        self.n_base = base.size
        self.subgroups = [SubgroupOracle(list(gens) or [base.epsilon()])
                          for _, gens in stables]

    def is_stable(self, letter: int) -> bool:
        return letter >= self.n_base

    def _pin_targets(self, letters: tuple[int, ...]):
        """All single pin eliminations, every position."""
        n = len(letters)
        for i in range(n):
            a = letters[i]
            if not self.is_stable(a):
                continue
            for j in range(i + 1, n):
                b = letters[j]
                if self.is_stable(b):
                    if b != inv_letter(a):
                        break
                    seg = letters[i + 1: j]
                    word = Word(self.base, seg)
                    idx = (a - self.n_base) >> 1
                    if self.subgroups[idx].contains(word):
                        yield letters[:i] + seg + letters[j + 1:]
                    break

    def wp_bfs(self, w: Word, effort: int = 200_000) -> bool:
        """Is w trivial in the extension?  Explores pin eliminations in all
        positions and orders with memoization."""
        start = tuple(w.letters)
        seen = {start}
        frontier = [start]
        visited = 0
        while frontier:
            nxt = []
            for letters in frontier:
                visited += 1
                if visited > effort:
                    raise EffortExceeded("word-problem search exceeded effort", visited)
                moves = False
                for target in self._pin_targets(letters):
                    moves = True
                    if target not in seen:
                        seen.add(target)
                        nxt.append(target)
                if not moves:
                    if not any(self.is_stable(a) for a in letters):
                        if not free_reduce(Word(self.base, letters)):
                            return True
            frontier = nxt
        return False

    def wp_random_order(self, w: Word, rng, effort: int = 100_000) -> bool:
        """Single randomized maximal rewrite; agrees with wp_bfs."""
        letters = tuple(w.letters)
        steps = 0
        while True:
            steps += 1
            if steps > effort:
                raise EffortExceeded("rewrite limit", steps)
            targets = list(self._pin_targets(letters))
            if not targets:
                break
            letters = targets[rng.randrange(len(targets))]
        if any(self.is_stable(a) for a in letters):
            return False
        return not free_reduce(Word(self.base, letters))

    def brute_solutions(self, e: KnapsackExpr, box: int,
                        threads: Optional[int] = None) -> set[tuple[int, ...]]:
        """All solutions of e = 1 with every variable at most box."""
        vars = e.var_names
        points = list(itertools.product(range(box + 1), repeat=len(vars)))

        def check(vals):
            sigma = dict(zip(vars, vals))
            return vals if self.wp_bfs(e.instantiate(sigma).retype(self.alphabet)) else None

        if threads is None:
            threads = int(os.environ.get("EXPOKNAP_THREADS", "1") or 1)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(check, points))
        else:
            results = [check(v) for v in points]
        return {v for v in results if v is not None}
