"""Group alphabets with formal inverses, and words over them.

A letter is an int: letter ``2*i`` is the i-th generator, ``2*i + 1`` its
formal inverse, so inversion is a single xor.  The enumeration of the full
symmetric alphabet (generator, inverse, generator, inverse, ...) is fixed at
construction time and every Parikh coordinate in the package refers to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence


def inv_letter(letter: int) -> int:
    """Formal inverse of a letter (sign flip)."""
    return letter ^ 1


@dataclass(frozen=True)
class Alphabet:
    """Ordered generator names; the symmetric alphabet has ``2 * len(gens)`` letters."""

    gens: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.gens)) != len(self.gens):
            raise ValueError("duplicate generator names")
        for g in self.gens:
            if not g or any(c.isspace() for c in g) or "^" in g:
                raise ValueError(f"bad generator name {g!r}")

    @property
    def size(self) -> int:
        return 2 * len(self.gens)

    def letter_name(self, letter: int, style: str = "caret") -> str:
        g = self.gens[letter >> 1]
        if letter & 1 == 0:
            return g
        if style == "upper" and len(g) == 1 and g.islower():
            return g.upper()
        return g + "^-1"

    def letter_names(self, style: str = "caret") -> tuple[str, ...]:
        return tuple(self.letter_name(a, style) for a in range(self.size))

    def letter(self, token: str) -> int:
        """Letter id for a token: ``a``, ``a^-1``, or ``A`` for the inverse of ``a``."""
        if token.endswith("^-1"):
            base = token[:-3]
            if base in self.gens:
                return 2 * self.gens.index(base) + 1
        if token in self.gens:
            return 2 * self.gens.index(token)
        low = token.lower()
        if len(token) == 1 and token.isupper() and low in self.gens and token not in self.gens:
            return 2 * self.gens.index(low) + 1
        raise ValueError(f"unknown letter {token!r}")

    def word(self, text: str) -> "Word":
        """Parse a space-separated word; ``1`` denotes the empty word."""
        text = text.strip()
        if text in ("", "1"):
            return Word(self, ())
        return Word(self, tuple(self.letter(tok) for tok in text.split()))

    def epsilon(self) -> "Word":
        return Word(self, ())

    def extend(self, extra: Sequence[str]) -> "Alphabet":
        """Alphabet with generators appended; existing letter ids are preserved."""
        return Alphabet(self.gens + tuple(extra))


@dataclass(frozen=True)
class Word:
    """A word over a fixed alphabet; reducedness is a predicate, not an invariant."""

    alphabet: Alphabet
    letters: tuple[int, ...]

    def __post_init__(self):
        for a in self.letters:
            if not (0 <= a < self.alphabet.size):
                raise ValueError(f"letter {a} outside alphabet")

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self) -> Iterator[int]:
        return iter(self.letters)

    def __bool__(self) -> bool:
        return bool(self.letters)

    def __mul__(self, other: "Word") -> "Word":
        if other.alphabet != self.alphabet:
            raise ValueError("alphabet mismatch")
        return Word(self.alphabet, self.letters + other.letters)

    def __pow__(self, n: int) -> "Word":
        if n < 0:
            return self.inverse() ** (-n)
        return Word(self.alphabet, self.letters * n)

    def __getitem__(self, idx) -> "Word":
        if isinstance(idx, slice):
            return Word(self.alphabet, self.letters[idx])
        raise TypeError("use slices; letters are ints via .letters")

    def inverse(self) -> "Word":
        return Word(self.alphabet, tuple(inv_letter(a) for a in reversed(self.letters)))

    def __str__(self) -> str:
        return self.display()

    def display(self, style: str = "caret") -> str:
        if not self.letters:
            return "1"
        return " ".join(self.alphabet.letter_name(a, style) for a in self.letters)

    def retype(self, alphabet: Alphabet) -> "Word":
        """Reinterpret over another alphabet sharing a generator prefix."""
        if alphabet.gens[: len(self.alphabet.gens)] != self.alphabet.gens:
            if self.alphabet.gens[: len(alphabet.gens)] != alphabet.gens:
                raise ValueError("alphabets do not share a prefix")
        return Word(alphabet, self.letters)


def invert(w: Word) -> Word:
    return w.inverse()


def free_reduce(w: Word) -> Word:
    """Unique reduced word equal to w in the free group (single stack pass)."""
    stack: list[int] = []
    for a in w.letters:
        if stack and stack[-1] == inv_letter(a):
            stack.pop()
        else:
            stack.append(a)
    return Word(w.alphabet, tuple(stack))


def is_reduced(w: Word) -> bool:
    return all(w.letters[i + 1] != inv_letter(w.letters[i]) for i in range(len(w.letters) - 1))


def project(w: Word, sub: Iterable[int]) -> Word:
    """Delete letters outside ``sub`` (a set of letter ids closed under inversion)."""
    keep = frozenset(sub)
    return Word(w.alphabet, tuple(a for a in w.letters if a in keep))


def cyclic_decompose(u: Word) -> tuple[Word, Word]:
    """Split red(u) = s c s^-1 with c cyclically reduced.

    Then red(u^x) = red(s c^x s^-1) for every x >= 0, and c is empty exactly
    when u is trivial in the free group.
    """
    r = free_reduce(u).letters
    i, j = 0, len(r)
    while j - i >= 2 and r[i] == inv_letter(r[j - 1]):
        i += 1
        j -= 1
    return Word(u.alphabet, r[:i]), Word(u.alphabet, r[i:j])


def is_cyclically_reduced(w: Word) -> bool:
    if not is_reduced(w):
        return False
    return not w.letters or w.letters[0] != inv_letter(w.letters[-1])


def parikh_vector(w: Word) -> tuple[int, ...]:
    """Occurrence counts in the alphabet's fixed letter enumeration."""
    counts = [0] * w.alphabet.size
    for a in w.letters:
        counts[a] += 1
    return tuple(counts)


@dataclass(frozen=True)
class KnapsackExpr:
    """v0 u1^x1 v1 ... uk^xk vk with natural-number exponent variables.

    Repeated variable names make it an exponent expression; with pairwise
    distinct names it is a knapsack expression.
    """

    consts: tuple[Word, ...]
    powers: tuple[Word, ...]
    variables: tuple[str, ...]

    def __post_init__(self):
        if len(self.consts) != len(self.powers) + 1:
            raise ValueError("need one more constant than powers")
        if len(self.powers) != len(self.variables):
            raise ValueError("one variable per power")

    @property
    def alphabet(self) -> Alphabet:
        return self.consts[0].alphabet

    @property
    def var_names(self) -> tuple[str, ...]:
        """Distinct variables in order of first occurrence."""
        seen: list[str] = []
        for x in self.variables:
            if x not in seen:
                seen.append(x)
        return tuple(seen)

    def is_knapsack(self) -> bool:
        return len(set(self.variables)) == len(self.variables)

    def instantiate(self, valuation: dict[str, int]) -> Word:
        w = self.consts[0]
        for u, x, v in zip(self.powers, self.variables, self.consts[1:]):
            w = w * (u ** valuation[x]) * v
        return w

    def project(self, sub: Iterable[int]) -> "KnapsackExpr":
        keep = frozenset(sub)
        return KnapsackExpr(
            tuple(project(c, keep) for c in self.consts),
            tuple(project(u, keep) for u in self.powers),
            self.variables,
        )

    def __str__(self) -> str:
        parts = []
        if self.consts[0]:
            parts.append(str(self.consts[0]))
        for u, x, v in zip(self.powers, self.variables, self.consts[1:]):
            parts.append(f"({u})^{x}")
            if v:
                parts.append(str(v))
        return " ".join(parts) if parts else "1"


def expr(alphabet: Alphabet, *parts) -> KnapsackExpr:
    """Build an expression from alternating words and (word, varname) power pairs.

    Strings are parsed over ``alphabet``; adjacent constants are merged.
    """
    consts: list[Word] = [alphabet.epsilon()]
    powers: list[Word] = []
    variables: list[str] = []
    for part in parts:
        if isinstance(part, str):
            part = alphabet.word(part)
        if isinstance(part, Word):
            consts[-1] = consts[-1] * part
        else:
            base, var = part
            if isinstance(base, str):
                base = alphabet.word(base)
            powers.append(base)
            variables.append(var)
            consts.append(alphabet.epsilon())
    return KnapsackExpr(tuple(consts), tuple(powers), tuple(variables))
