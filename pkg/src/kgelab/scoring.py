"""Signed-term algebra for translational scoring functions.

A scoring function (SF) is a signed sum of vector terms built from seven
embedding parts: two per entity endpoint (``e0h``/``e1h`` for the head,
``e0t``/``e1t`` for the tail) and three per relation (``r0``/``r1``/``r2``).
A term is either a bare part or a Hadamard (element-wise) product of two
parts; each term carries a coefficient of +1 or -1, and absent terms have
coefficient 0.  The score of a triple is the negated L1 norm of the summed
vector, so a spec here is pure structure: which terms appear, with which
sign.

There are 7 first-order terms and 7 x 7 = 49 ordered products, 56 slots in
total; with three coefficient choices per slot the space holds 3**56
functions.  Because the Hadamard product commutes, only 35 terms are
distinct, and :func:`distinct_search_space_size` reports the corresponding
3**35 count.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import SFParseError

__all__ = [
    "VectorPart",
    "Term",
    "SFSpec",
    "CATALOG_NAMES",
    "enumerate_terms",
    "search_space_size",
    "distinct_search_space_size",
    "parse_sf",
    "print_sf",
    "catalog",
    "uses_head",
]


class VectorPart(enum.Enum):
    """One of the seven embedding parts an SF term can reference.

    The member order (entity parts before relation parts) defines the
    canonical term ordering used by :func:`enumerate_terms` and
    :func:`print_sf`; products print entity-first, e.g. ``e0t*r2``.
    """

    E0H = 0
    E1H = 1
    E0T = 2
    E1T = 3
    R0 = 4
    R1 = 5
    R2 = 6

    @property
    def token(self) -> str:
        """Lower-case grammar token, e.g. ``"e0h"``."""
        return self.name.lower()


_PART_BY_TOKEN = {p.token: p for p in VectorPart}

_HEAD_PARTS = frozenset({VectorPart.E0H, VectorPart.E1H})


@dataclass(frozen=True, eq=False)
class Term:
    """A first-order part or an ordered Hadamard product of two parts.

    The operand order is kept as given (it matters for printing the original
    text), but equality and hashing are commutative: ``e0t*r2`` and
    ``r2*e0t`` are the same term.
    """

    left: VectorPart
    right: VectorPart | None = None

    @property
    def is_product(self) -> bool:
        return self.right is not None

    def parts(self) -> tuple[VectorPart, ...]:
        """The parts this term reads, in stored order."""
        if self.right is None:
            return (self.left,)
        return (self.left, self.right)

    def _key(self) -> tuple[int, ...]:
        if self.right is None:
            return (self.left.value,)
        a, b = self.left.value, self.right.value
        return (a, b) if a <= b else (b, a)

    def canonical_index(self) -> int:
        """Position of this term (operands sorted) in :func:`enumerate_terms`."""
        key = self._key()
        if len(key) == 1:
            return key[0]
        return 7 + key[0] * 7 + key[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Term):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __str__(self) -> str:
        if self.right is None:
            return self.left.token
        return f"{self.left.token}*{self.right.token}"


@dataclass(frozen=True, eq=False)
class SFSpec:
    """A scoring function: a non-empty set of signed terms.

    ``terms`` holds ``(coefficient, term)`` pairs with coefficients in
    {+1, -1}; a zero coefficient is represented by the term being absent.
    No two entries may share a term under commutative equality.  Specs
    compare equal as signed-term sets, so the storage order of ``terms``
    (kept for faithful inspection) does not affect equality.
    """

    terms: tuple[tuple[int, Term], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("scoring function must have at least one term")
        seen: set[Term] = set()
        for coef, term in self.terms:
            if coef not in (1, -1):
                raise ValueError(f"coefficient must be +1 or -1, got {coef!r}")
            if term in seen:
                raise ValueError(f"duplicate term {term}")
            seen.add(term)

    def _signed_set(self) -> frozenset[tuple[int, tuple[int, ...]]]:
        return frozenset((coef, term._key()) for coef, term in self.terms)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SFSpec):
            return NotImplemented
        return self._signed_set() == other._signed_set()

    def __hash__(self) -> int:
        return hash(self._signed_set())

    def __str__(self) -> str:
        return print_sf(self)

    def __len__(self) -> int:
        return len(self.terms)


_FIRST_ORDER = tuple(Term(p) for p in VectorPart)
_SECOND_ORDER = tuple(Term(a, b) for a in VectorPart for b in VectorPart)
_ALL_TERMS = _FIRST_ORDER + _SECOND_ORDER


def enumerate_terms() -> list[Term]:
    """All 56 term slots in a fixed order.

    The 7 first-order terms come first, in :class:`VectorPart` order,
    followed by the 49 ordered products in row-major (left part major)
    order.  Self-products such as ``e0t*e0t`` are included; nothing in the
    7 x 7 arithmetic excludes the diagonal.
    """
    return list(_ALL_TERMS)


def search_space_size() -> int:
    """Number of coefficient assignments over all 56 ordered slots: 3**56."""
    return 3 ** 56


def distinct_search_space_size() -> int:
    """Assignment count over the 35 commutatively distinct terms: 3**35.

    The ordered count 3**56 treats ``a*b`` and ``b*a`` as separate slots;
    collapsing each unordered pair leaves 7 + 28 = 35 distinct terms.
    """
    return 3 ** 35


_TOKEN_RE = re.compile(r"[+\-*]|[A-Za-z0-9_]+|\S")


def _tokenize(text: str) -> list[tuple[str, int]]:
    return [(m.group(0), m.start()) for m in _TOKEN_RE.finditer(text)]


def parse_sf(text: str) -> SFSpec:
    """Parse an SF string such as ``"e0h - e0t + r0"``.

    Grammar: signed terms joined by ``+`` / ``-``; a term is a part token
    (``e0h|e1h|r0|r1|r2|e0t|e1t``) or a product of two part tokens joined by
    ``*``; the leading sign is optional and defaults to ``+``; whitespace is
    insignificant.

    Raises :class:`~kgelab.errors.SFParseError` (with the character
    position) on unknown tokens, malformed syntax, an empty spec, or a
    duplicate term.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise SFParseError("empty scoring function", 0)

    def parse_factor(i: int) -> tuple[VectorPart, int]:
        if i >= len(tokens):
            raise SFParseError("expected a part token, found end of input", len(text))
        tok, pos = tokens[i]
        part = _PART_BY_TOKEN.get(tok)
        if part is None:
            raise SFParseError(f"unknown token {tok!r}", pos)
        return part, i + 1

    terms: list[tuple[int, Term]] = []
    seen: dict[Term, int] = {}
    i = 0
    while i < len(tokens):
        coef = 1
        tok, pos = tokens[i]
        if tok in ("+", "-"):
            coef = 1 if tok == "+" else -1
            i += 1
        elif terms:
            raise SFParseError(f"expected '+' or '-' before {tok!r}", pos)
        term_pos = tokens[i][1] if i < len(tokens) else len(text)
        left, i = parse_factor(i)
        right = None
        if i < len(tokens) and tokens[i][0] == "*":
            right, i = parse_factor(i + 1)
        term = Term(left, right)
        if term in seen:
            raise SFParseError(f"duplicate term {term}", term_pos)
        seen[term] = term_pos
        terms.append((coef, term))
    return SFSpec(tuple(terms))


def print_sf(spec: SFSpec) -> str:
    """Canonical text for a spec, e.g. ``"+e0h -e0t +r0"``.

    Terms are emitted in :func:`enumerate_terms` order with product operands
    sorted into :class:`VectorPart` order, and every sign is explicit, so
    equal specs always print identically and the output re-parses to an
    equal spec.
    """
    def canonical(term: Term) -> Term:
        if term.right is None:
            return term
        a, b = term.left, term.right
        return Term(a, b) if a.value <= b.value else Term(b, a)

    ordered = sorted(spec.terms, key=lambda ct: ct[1].canonical_index())
    pieces = []
    for coef, term in ordered:
        sign = "+" if coef > 0 else "-"
        pieces.append(f"{sign}{canonical(term)}")
    return " ".join(pieces)


_CATALOG = {
    "transe": "e0h - e0t + r0",
    "interht": "e0h*e1t - e1h*e0t + r0",
    "triplere": "e0h*r1 - e0t*r2 + r0",
    "pairre": "e0h*r1 - e0t*r2",
    "trans": "e0h*e1t - e1h*e0t + r0 + e0h*r1 + e0t*r2",
    "autoweird": "-e1t*r2 + e0t*r0 + e0t*r2 - r0",
}

CATALOG_NAMES = tuple(_CATALOG)


def catalog(name: str) -> SFSpec:
    """The spec for a named model: one of transe, interht, triplere,
    pairre, trans, autoweird."""
    try:
        text = _CATALOG[name]
    except KeyError:
        known = ", ".join(CATALOG_NAMES)
        raise ValueError(f"unknown model {name!r}; known models: {known}") from None
    return parse_sf(text)


def uses_head(spec: SFSpec) -> bool:
    """True iff any term reads a head part (``e0h`` or ``e1h``).

    Head-independent specs score every head identically for a fixed
    (relation, tail), which is what lets tail-popularity artifacts win
    under sampled evaluation.
    """
    return any(
        part in _HEAD_PARTS for _, term in spec.terms for part in term.parts()
    )
