"""Dataset loading and the builtin fishing-site data."""

import csv

from .errors import DataError
from .space import ALL_NONSINGLETON, Alternative, build_space

# Four recreational fishing sites: (id, price, catch rate).
_FISHING = (
    ("beach", 103.422, 0.2410113),
    ("boat", 55.256, 0.1712146),
    ("charter", 84.379, 0.6293679),
    ("pier", 103.422, 0.1622237),
)


def builtin_fishing():
    """The builtin 4-alternative fishing dataset (price, catch rate)."""
    return tuple(Alternative(i, (p, c)) for i, p, c in _FISHING)


def fishing_space(menus=ALL_NONSINGLETON):
    return build_space(builtin_fishing(), menus)


def load_dataset(path):
    """Read alternatives from CSV with header ``id,<char_1>,...,<char_k>``.

    Errors carry the 1-based line (and column where it applies) of the
    offending cell.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0].lower() != "id":
            raise DataError(f"{path}: line 1: header must be id,<char_1>,...")
        width = len(header)
        alternatives = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # blank line
            if len(row) != width:
                raise DataError(
                    f"{path}: line {lineno}: expected {width} cells, got {len(row)}"
                )
            ident = row[0].strip()
            if not ident:
                raise DataError(f"{path}: line {lineno}: empty id")
            if ident in seen:
                raise DataError(f"{path}: line {lineno}: duplicate id {ident!r}")
            seen.add(ident)
            chars = []
            for col, cell in enumerate(row[1:], start=2):
                try:
                    chars.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {col}: "
                        f"non-numeric cell {cell.strip()!r}"
                    ) from None
            alternatives.append(Alternative(ident, tuple(chars)))
    if not alternatives:
        raise DataError(f"{path}: no alternatives")
    return tuple(alternatives)


def save_dataset(alternatives, path):
    alternatives = tuple(alternatives)
    k = len(alternatives[0].chars)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"char_{j + 1}" for j in range(k)])
        for alt in alternatives:
            writer.writerow([alt.id] + [f"{c:.17g}" for c in alt.chars])
