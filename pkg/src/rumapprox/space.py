"""Finite choice environments and stochastic choice data.

A choice environment is a finite set of alternatives, each described by a
vector of observable characteristics, together with a family of menus
(subsets of the alternatives presented to a decision maker).  Stochastic
choice data assigns to every menu a probability row over its members.

Rows are stored in one flat vector ordered menu by menu, which keeps the
distance computation and all downstream linear algebra simple: the vector
has one entry per (menu, member) pair and nothing else.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .serialize import dumps_compact

ROW_SUM_TOL = 1e-12
INGEST_TOL = 1e-9

ALL_NONSINGLETON = "all-nonsingleton-subsets"
SINGLE_SET = "single-set-X"


@dataclass(frozen=True)
class Alternative:
    """One alternative: an identifier plus its characteristic vector."""

    id: str
    chars: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "chars", tuple(float(c) for c in self.chars))
        if not self.id:
            raise DataError("alternative id must be a non-empty string")
        if len(self.chars) == 0:
            raise DataError(f"alternative {self.id!r} has no characteristics")
        if not all(np.isfinite(self.chars)):
            raise DataError(f"alternative {self.id!r} has non-finite characteristics")


class ChoiceSpace:
    """Alternatives plus an ordered menu family.

    Menus are kept in canonical order: each menu is a sorted tuple of
    alternative indices and the family is sorted lexicographically.  Use
    :func:`build_space` instead of calling this constructor with raw
    index tuples.

    Attributes
    ----------
    alternatives : tuple of Alternative
    menus : tuple of tuple of int
        Sorted member indices, lexicographically ordered.
    chars : ndarray, shape (n, k)
        Characteristic matrix, one row per alternative.
    """

    def __init__(self, alternatives, menus):
        self.alternatives = tuple(alternatives)
        if not self.alternatives:
            raise DataError("a choice space needs at least one alternative")
        ids = [a.id for a in self.alternatives]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate alternative ids: {dupes}")
        ks = {len(a.chars) for a in self.alternatives}
        if len(ks) != 1:
            raise DataError("alternatives disagree on characteristic length")
        self.ids = tuple(ids)
        self.k = ks.pop()
        self.n = len(self.alternatives)
        self.chars = np.array([a.chars for a in self.alternatives], dtype=float)

        canon = []
        seen = set()
        for menu in menus:
            m = tuple(sorted(menu))
            if len(m) == 0:
                raise DataError("empty menu")
            if len(set(m)) != len(m):
                raise DataError(f"menu {menu} repeats an alternative")
            if m[0] < 0 or m[-1] >= self.n:
                raise DataError(f"menu {menu} references an unknown alternative")
            if m in seen:
                raise DataError(f"duplicate menu {m}")
            seen.add(m)
            canon.append(m)
        if not canon:
            raise DataError("a choice space needs at least one menu")
        self.menus = tuple(sorted(canon))

        # Flat layout: offsets into the stacked (menu, member) vector.
        sizes = [len(m) for m in self.menus]
        self.offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(sizes)]))
        self.flat_size = self.offsets[-1]
        self.nonsingleton_menu_count = sum(1 for m in self.menus if len(m) >= 2)
        self._members = [np.array(m, dtype=np.intp) for m in self.menus]
        self._index = {m: i for i, m in enumerate(self.menus)}
        self._id_index = {a: i for i, a in enumerate(self.ids)}

    # -- lookups -------------------------------------------------------

    def index_of(self, alternative_id):
        try:
            return self._id_index[alternative_id]
        except KeyError:
            raise DataError(f"unknown alternative id {alternative_id!r}") from None

    def menu_index(self, menu):
        try:
            return self._index[tuple(sorted(menu))]
        except KeyError:
            raise DataError(f"menu {menu} is not in this space") from None

    def layout(self):
        """Yield (start, stop, members) for every menu in order."""
        for i, members in enumerate(self._members):
            yield self.offsets[i], self.offsets[i + 1], members

    @property
    def is_rich(self):
        """True when every 2- and 3-element subset of X is a menu."""
        need = itertools.chain(
            itertools.combinations(range(self.n), 2),
            itertools.combinations(range(self.n), 3),
        )
        return all(m in self._index for m in need)

    def __eq__(self, other):
        return (
            isinstance(other, ChoiceSpace)
            and self.ids == other.ids
            and self.menus == other.menus
            and np.array_equal(self.chars, other.chars)
        )

    def __hash__(self):
        return hash((self.ids, self.menus))

    def __repr__(self):
        return f"ChoiceSpace({self.n} alternatives, {len(self.menus)} menus)"


def build_space(alternatives, menus=ALL_NONSINGLETON):
    """Assemble a :class:`ChoiceSpace`.

    Parameters
    ----------
    alternatives : sequence of Alternative
    menus : str or iterable
        Either the string ``"all-nonsingleton-subsets"`` (every subset of
        size >= 2), the string ``"single-set-X"`` (only the grand set), or
        an explicit iterable of menus given as alternative ids or indices.
    """
    alternatives = tuple(alternatives)
    if isinstance(menus, str):
        n = len(alternatives)
        if menus == ALL_NONSINGLETON:
            fam = itertools.chain.from_iterable(
                itertools.combinations(range(n), r) for r in range(2, n + 1)
            )
        elif menus == SINGLE_SET:
            fam = [tuple(range(n))]
        else:
            raise DataError(f"unknown menu family {menus!r}")
        return ChoiceSpace(alternatives, fam)

    id_index = {a.id: i for i, a in enumerate(alternatives)}
    resolved = []
    for menu in menus:
        members = []
        for entry in menu:
            if isinstance(entry, str):
                if entry not in id_index:
                    raise DataError(f"unknown alternative id {entry!r} in menu {menu}")
                members.append(id_index[entry])
            else:
                members.append(int(entry))
        resolved.append(tuple(members))
    return ChoiceSpace(alternatives, resolved)


class StochasticChoice:
    """Choice probabilities for every menu of a space.

    ``values`` is the flat stacked vector; ``row(i)`` views menu ``i``.
    Construction renormalizes rows whose sums drift from 1 by at most
    1e-9 and rejects anything worse, so a successfully built object
    always satisfies the row-sum invariant to 1e-12.
    """

    def __init__(self, space, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (space.flat_size,):
            raise DataError(
                f"expected {space.flat_size} stacked probabilities, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite choice probability")
        if values.min() < -INGEST_TOL or values.max() > 1.0 + INGEST_TOL:
            raise DataError("choice probabilities outside [0, 1]")
        values = values.copy()
        for start, stop, _ in space.layout():
            total = values[start:stop].sum()
            if abs(total - 1.0) > INGEST_TOL:
                raise DataError(
                    f"menu row starting at {start} sums to {total!r}, not 1"
                )
            if abs(total - 1.0) > ROW_SUM_TOL:
                values[start:stop] /= total
        np.clip(values, 0.0, 1.0, out=values)
        self.space = space
        self.values = values

    @classmethod
    def _trusted(cls, space, values):
        # Internal fast path for rows produced by our own algebra.
        obj = cls.__new__(cls)
        obj.space = space
        obj.values = np.asarray(values, dtype=float)
        return obj

    @classmethod
    def from_rows(cls, space, rows):
        rows = list(rows)
        if len(rows) != len(space.menus):
            raise DataError(f"expected {len(space.menus)} rows, got {len(rows)}")
        flat = np.empty(space.flat_size)
        for (start, stop, _), row in zip(space.layout(), rows):
            row = np.asarray(row, dtype=float)
            if row.shape != (stop - start,):
                raise DataError(f"row starting at {start} has wrong length")
            flat[start:stop] = row
        return cls(space, flat)

    def row(self, menu_index):
        start = self.space.offsets[menu_index]
        stop = self.space.offsets[menu_index + 1]
        return self.values[start:stop]

    def rows(self):
        return [self.row(i) for i in range(len(self.space.menus))]

    def prob(self, menu, alternative_id):
        i = self.space.menu_index(menu)
        members = self.space.menus[i]
        return float(self.row(i)[members.index(self.space.index_of(alternative_id))])

    def copy(self):
        return StochasticChoice._trusted(self.space, self.values.copy())

    def to_json(self):
        payload = {
            "ids": list(self.space.ids),
            "menus": [list(m) for m in self.space.menus],
            "values": list(self.values),
        }
        return dumps_compact(payload)

    @classmethod
    def from_json(cls, space, text):
        payload = json.loads(text)
        if payload.get("menus") != [list(m) for m in space.menus]:
            raise DataError("serialized menus do not match the given space")
        return cls(space, np.array(payload["values"], dtype=float))

    def __repr__(self):
        return f"StochasticChoice({len(self.space.menus)} menus)"


@dataclass
class ValidationReport:
    ok: bool
    issues: list


def validate(rho):
    """Check row sums and probability ranges; list offending menus."""
    issues = []
    for i, (start, stop, _) in enumerate(rho.space.layout()):
        row = rho.values[start:stop]
        total = row.sum()
        if abs(total - 1.0) > ROW_SUM_TOL:
            issues.append((i, f"row sums to {total!r}"))
        if row.min() < -ROW_SUM_TOL or row.max() > 1.0 + ROW_SUM_TOL:
            issues.append((i, "entry outside [0, 1]"))
    return ValidationReport(ok=not issues, issues=issues)


def _require_same_space(a, b):
    if a.space is not b.space and a.space != b.space:
        raise DataError("stochastic choices live on different spaces")


def distance(rho, sigma):
    """L2 distance between two stochastic choice functions.

    The Euclidean norm over all stacked (menu, member) entries divided by
    the number of menus with at least two members.  Singleton menus carry
    forced probability 1 on both sides and contribute nothing.
    """
    _require_same_space(rho, sigma)
    return float(
        np.linalg.norm(rho.values - sigma.values) / rho.space.nonsingleton_menu_count
    )
