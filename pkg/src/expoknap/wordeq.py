"""Solver for the two-power word equation p q^x r = s u^y v over a free monoid.

Literal word equality, no group reduction.  The solution set is always a
finite union of points and single arithmetic progressions in (x, y):

* the length equation |p| + x|q| + |r| = |s| + y|u| + |v| confines solutions
  to one line family;
* candidates with x up to X0 = |p|+|r|+|s|+|v| + 2*lcm(|q|,|u|) are tested by
  direct substitution;
* beyond X0 both sides overlap in a stretch long enough for the periodicity
  theorem of Fine and Wilf, so solutions recur with x-step lcm(|q|,|u|)/|q|.
  A candidate progression head found in the last step-window is verified by
  re-substitution at two further steps and then emitted as a progression.

Degenerate exponents (|q| = 0 or |u| = 0) reduce to direct comparisons where
one side is a fixed word.
"""

from __future__ import annotations

import math

from .presburger import LinearSet, SemilinearRep, SolutionSet
from .words import Word


def _concat(*parts: Word) -> tuple[int, ...]:
    out: list[int] = []
    for p in parts:
        out.extend(p.letters)
    return tuple(out)


def two_power_eq(p: Word, q: Word, r: Word, s: Word, u: Word, v: Word) -> SolutionSet:
    """Exact solution set of p q^x r = s u^y v over {x, y}."""
    comps: list[LinearSet] = []

    def lhs(x: int) -> tuple[int, ...]:
        return _concat(p, q ** x, r)

    def rhs(y: int) -> tuple[int, ...]:
        return _concat(s, u ** y, v)

    if not q and not u:
        if lhs(0) == rhs(0):
            comps.append(LinearSet((0, 0), ((1, 0), (0, 1))))
    elif not q:
        target = lhs(0)
        rest = len(target) - len(s) - len(v)
        if rest >= 0 and rest % max(1, len(u)) == 0:
            y0 = rest // len(u)
            if rhs(y0) == target:
                comps.append(LinearSet((0, y0), ((1, 0),)))
    elif not u:
        target = rhs(0)
        rest = len(target) - len(p) - len(r)
        if rest >= 0 and rest % max(1, len(q)) == 0:
            x0 = rest // len(q)
            if lhs(x0) == target:
                comps.append(LinearSet((x0, 0), ((0, 1),)))
    else:
        lcm = math.lcm(len(q), len(u))
        dx, dy = lcm // len(q), lcm // len(u)
        x_cut = len(p) + len(r) + len(s) + len(v) + 2 * lcm
        offset = len(p) + len(r) - len(s) - len(v)
        for x in range(x_cut + 1):
            rest = offset + x * len(q)
            if rest < 0 or rest % len(u):
                continue
            y = rest // len(u)
            if lhs(x) != rhs(y):
                continue
            if x > x_cut - dx:
                # progression head; verify two further period steps
                assert lhs(x + dx) == rhs(y + dy) and lhs(x + 2 * dx) == rhs(y + 2 * dy), (
                    "periodicity window violated; cutoff too small"
                )
                comps.append(LinearSet((x, y), ((dx, dy),)))
            else:
                comps.append(LinearSet((x, y), ()))

    rep = SemilinearRep(("x", "y"), tuple(comps)).pruned()
    return SolutionSet(("x", "y"), rep=rep)


def brute_two_power(p: Word, q: Word, r: Word, s: Word, u: Word, v: Word,
                    box: int) -> set[tuple[int, int]]:
    """Reference solver by direct substitution on [0, box]^2."""
    out = set()
    for x in range(box + 1):
        left = _concat(p, q ** x, r)
        for y in range(box + 1):
            if left == _concat(s, u ** y, v):
                out.add((x, y))
    return out
