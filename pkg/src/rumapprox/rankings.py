"""Strict rankings, their vertex choice rules, and the mixture polytope.

A ranking orders all alternatives best to worst and induces the vertex
choice rule that picks its top member of every menu with probability 1.
Mixtures of these vertices over a probability measure on rankings form
the polytope of rational stochastic choice; the functions here build its
vertices, targets used by the fitting pipelines, its dimension, and the
adjacency certificates separating a ranking pair (pi, reverse of pi)
from every other vertex.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from .errors import DataError, NumericError
from .space import StochasticChoice

MAX_ALTERNATIVES = 10
CERT_TOL = 1e-9


@dataclass(frozen=True)
class Ranking:
    """A strict ranking, stored as alternative indices from best to worst."""

    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        object.__setattr__(self, "order", order)
        if sorted(order) != list(range(len(order))):
            raise DataError(f"{order} is not a permutation of 0..{len(order) - 1}")

    @cached_property
    def _position(self):
        return {alt: i for i, alt in enumerate(self.order)}

    @property
    def n(self):
        return len(self.order)

    def rank(self, alternative):
        """Rank in 1..n, higher is better."""
        return self.n - self._position[alternative]

    def best_of(self, members):
        return min(members, key=self._position.__getitem__)

    def reverse(self):
        return Ranking(self.order[::-1])

    def word(self):
        """Compact label: 1-based positions, best first, e.g. ``"3124"``."""
        if self.n <= 9:
            return "".join(str(i + 1) for i in self.order)
        return ",".join(str(i + 1) for i in self.order)

    @classmethod
    def from_word(cls, text, n=None):
        text = text.strip()
        if "," in text:
            parts = [p for p in text.replace(" ", "").split(",") if p]
        else:
            parts = list(text)
        try:
            order = tuple(int(p) - 1 for p in parts)
        except ValueError:
            raise DataError(f"cannot parse ranking word {text!r}") from None
        if n is not None and len(order) != n:
            raise DataError(f"ranking word {text!r} should list {n} alternatives")
        return cls(order)

    def __str__(self):
        return self.word()


def reverse(ranking):
    return ranking.reverse()


def _space_size(space_or_n):
    n = space_or_n if isinstance(space_or_n, int) else space_or_n.n
    if not 1 <= n <= MAX_ALTERNATIVES:
        raise DataError(
            f"ranking enumeration supports 1..{MAX_ALTERNATIVES} alternatives, got {n}"
        )
    return n


def enumerate_rankings(space_or_n):
    """All |X|! rankings in lexicographic order of their orderings."""
    n = _space_size(space_or_n)
    return [Ranking(p) for p in itertools.permutations(range(n))]


def vertex_choice(ranking, space):
    """The degenerate choice rule: probability 1 on the best member."""
    if ranking.n != space.n:
        raise DataError("ranking and space disagree on the number of alternatives")
    ranks = np.empty(space.n)
    for pos, alt in enumerate(ranking.order):
        ranks[alt] = space.n - pos
    flat = np.zeros(space.flat_size)
    for start, _, members in space.layout():
        flat[start + int(np.argmax(ranks[members]))] = 1.0
    return StochasticChoice._trusted(space, flat)


def mixture_target(ranking, alpha, space):
    """The blend alpha * vertex(pi) + (1 - alpha) * vertex(reverse pi)."""
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must lie strictly between 0 and 1, got {alpha}")
    fwd = vertex_choice(ranking, space).values
    bwd = vertex_choice(ranking.reverse(), space).values
    return StochasticChoice._trusted(space, alpha * fwd + (1.0 - alpha) * bwd)


def rum_from_measure(measure, space):
    """Mix vertex rules under a probability measure on rankings.

    ``measure`` is either a mapping from Ranking to weight or a sequence
    aligned with :func:`enumerate_rankings` order.  Weights must be
    nonnegative and sum to 1 (drift up to 1e-9 is renormalized).
    """
    if isinstance(measure, Mapping):
        items = list(measure.items())
    else:
        weights = np.asarray(measure, dtype=float)
        rankings = enumerate_rankings(space)
        if weights.shape != (len(rankings),):
            raise DataError(
                f"expected {len(rankings)} weights in enumeration order, "
                f"got {weights.shape}"
            )
        items = [(r, w) for r, w in zip(rankings, weights) if w != 0.0]
    total = float(sum(w for _, w in items))
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"measure weights sum to {total!r}, not 1")
    flat = np.zeros(space.flat_size)
    for ranking, weight in items:
        if weight < -1e-12:
            raise DataError(f"negative weight {weight!r} on {ranking}")
        if weight > 0.0:
            flat += (weight / total) * vertex_choice(ranking, space).values
    return StochasticChoice._trusted(space, flat)


def polytope_dimension(space):
    """Dimension of the mixture polytope: one row simplex per menu."""
    return sum(len(m) - 1 for m in space.menus)


@dataclass
class AdjacencyCertificate:
    """Linear functional t with t(vertex(pi)) = t(vertex(reverse pi)) = level
    and t(vertex(sigma)) > level for every other ranking sigma."""

    ranking: Ranking
    entries: dict
    level: float
    margin: float

    def vector(self, space):
        flat = np.zeros(space.flat_size)
        for (menu, alt), value in self.entries.items():
            i = space.menu_index(menu)
            flat[space.offsets[i] + space.menus[i].index(alt)] += value
        return flat


def _certificate_value(entries, order):
    position = {alt: i for i, alt in enumerate(order)}
    total = 0.0
    for (menu, alt), value in entries.items():
        if min(menu, key=position.__getitem__) == alt:
            total += value
    return total


def adjacency_certificate(ranking, space, a=1.0, b=2.0):
    """Build the separating functional for (pi, reverse pi) by induction.

    The three-alternative base uses parameters b > a > 0; each extension
    step spends half of the current verified separation margin.  The
    result is verified exhaustively over all |X|! rankings, which is
    what limits this to small alternative sets.
    """
    if not 0.0 < a < b:
        raise DataError(f"need b > a > 0, got a={a}, b={b}")
    n = _space_size(space)
    if ranking.n != n:
        raise DataError("ranking and space disagree on the number of alternatives")
    if n < 3:
        raise DataError("adjacency certificates need at least 3 alternatives")

    labels = ranking.order  # x_1 (best) .. x_n (worst)
    entries = {}

    def put(menu, alt, value, accumulate=False):
        key = (tuple(sorted(menu)), alt)
        space.menu_index(key[0])  # raises DataError when the menu is missing
        if accumulate and key in entries:
            entries[key] += value
        else:
            entries[key] = value

    x1, x2, x3 = labels[0], labels[1], labels[2]
    put((x1, x2), x1, a)
    put((x2, x3), x2, -b)
    put((x1, x3), x1, b - a)
    put((x1, x2, x3), x2, a + b)

    for m in range(4, n + 1):
        head = labels[: m - 1]
        margin = min(
            _certificate_value(entries, order)
            for order in itertools.permutations(head)
            if order != head and order != head[::-1]
        )
        if margin <= 0.0:
            raise NumericError(f"induction margin collapsed at stage {m}")
        eps = margin / 2.0
        new = labels[m - 1]
        put((x1, x2), x1, eps, accumulate=True)
        for other in head:
            put((other, new), other, -eps / (m - 1))
        put((labels[m - 3], labels[m - 2], new), labels[m - 2], 2.0 * eps)

    pair_value = _certificate_value(entries, labels)
    reverse_value = _certificate_value(entries, labels[::-1])
    others = [
        _certificate_value(entries, order)
        for order in itertools.permutations(range(n))
        if order != tuple(labels) and order != tuple(labels[::-1])
    ]
    margin = min(others)
    if abs(pair_value) > CERT_TOL or abs(reverse_value) > CERT_TOL:
        raise NumericError("certificate does not vanish on the target pair")
    if margin <= CERT_TOL:
        raise NumericError("certificate margin is not strictly positive")
    return AdjacencyCertificate(ranking=ranking, entries=entries, level=0.0, margin=margin)
