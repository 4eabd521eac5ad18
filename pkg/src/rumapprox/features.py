"""Monomial feature maps and point-configuration diagnostics.

The degree-d feature map sends a characteristic vector x in R^k to the
vector of all monomials of total degree 1 through d.  Whether the mapped
alternatives are affinely independent (and, for a single grand menu,
convexly independent) is exactly what separates environments where
degree-d random-coefficient logit mixtures are dense from those where
they are not, so both diagnostics report enough detail to audit the
verdict.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from .errors import DataError, NumericError

LP_TOL = 1e-9


@lru_cache(maxsize=None)
def _exponent_table(degree, k):
    if degree < 1 or k < 1:
        raise DataError("degree and k must be positive")
    table = [
        e
        for e in itertools.product(range(degree + 1), repeat=k)
        if 1 <= sum(e) <= degree
    ]
    # Graded order; within a grade, earlier characteristics carry the
    # higher powers first, so degree-1 terms come out in x1, x2, ... order.
    table.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
    return tuple(table)


class FeatureMap:
    """All monomials of total degree 1..degree in k characteristics."""

    def __init__(self, degree, k):
        self.degree = int(degree)
        self.k = int(k)
        self.exponents = _exponent_table(self.degree, self.k)
        self.dim = len(self.exponents)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.k,):
            raise DataError(f"expected a length-{self.k} characteristic vector")
        return self.matrix(x[None, :])[0]

    def matrix(self, points):
        """Map an (m, k) array of characteristic vectors to (m, dim)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.k:
            raise DataError(f"expected an (m, {self.k}) array of points")
        out = np.empty((points.shape[0], self.dim))
        for j, exps in enumerate(self.exponents):
            col = np.ones(points.shape[0])
            for axis, power in enumerate(exps):
                if power:
                    col = col * points[:, axis] ** power
            out[:, j] = col
        return out

    def __repr__(self):
        return f"FeatureMap(degree={self.degree}, k={self.k}, dim={self.dim})"


def monomial_features(x, degree):
    """Feature vector of one point; degree 1 is the identity map."""
    x = np.asarray(x, dtype=float)
    return FeatureMap(degree, x.shape[0]).apply(x)


def standardize_characteristics(points):
    """Per-column affine rescale to mean 0 and max-abs 1.

    Applied to characteristics before the monomial map when explicitly
    requested.  Note this changes representability verdicts for
    degree >= 2 (monomials do not commute with affine maps), which is
    why it is opt-in everywhere.
    """
    points = np.asarray(points, dtype=float)
    offset = points.mean(axis=0)
    centered = points - offset
    scale = np.abs(centered).max(axis=0)
    scale[scale == 0.0] = 1.0
    return centered / scale, offset, scale


@dataclass
class AffineIndependenceReport:
    independent: bool
    rank: int
    required: int
    singular_values: np.ndarray
    threshold: float
    smallest_retained: float | None
    largest_rejected: float | None

    def __bool__(self):
        return self.independent


def affine_independent(points, rel_tol=1e-9):
    """Rank test on the difference vectors point_i - point_0.

    m points are affinely independent iff the m-1 differences have full
    rank.  Singular values below rel_tol times the largest are treated
    as zero; both sides of the cut are reported so borderline calls can
    be audited.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DataError("need a non-empty (m, p) array of points")
    required = points.shape[0] - 1
    if required == 0:
        return AffineIndependenceReport(True, 0, 0, np.empty(0), 0.0, None, None)
    diffs = points[1:] - points[0]
    s = np.linalg.svd(diffs, compute_uv=False)
    threshold = rel_tol * (s[0] if s[0] > 0 else 1.0)
    kept = s[s > threshold]
    dropped = s[s <= threshold]
    return AffineIndependenceReport(
        independent=kept.size == required,
        rank=int(kept.size),
        required=required,
        singular_values=s,
        threshold=float(threshold),
        smallest_retained=float(kept.min()) if kept.size else None,
        largest_rejected=float(dropped.max()) if dropped.size else None,
    )


@dataclass
class ConvexIndependenceReport:
    independent: bool
    witness: int | None
    weights: np.ndarray | None

    def __bool__(self):
        return self.independent


def convex_independent(points, tol=LP_TOL):
    """Check that no point is a convex combination of the others.

    One feasibility LP per point, in column-rescaled coordinates (hull
    membership is invariant under invertible affine maps, so rescaling
    only helps conditioning).  The first point inside the hull of the
    rest is returned as witness together with the mixing weights.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DataError("need a non-empty (m, p) array of points")
    m = points.shape[0]
    if m == 1:
        return ConvexIndependenceReport(True, None, None)
    offset = points.mean(axis=0)
    scale = np.abs(points - offset).max(axis=0)
    scale[scale == 0.0] = 1.0
    scaled = (points - offset) / scale

    options = {
        "primal_feasibility_tolerance": tol,
        "dual_feasibility_tolerance": tol,
    }
    for i in range(m):
        others = np.delete(scaled, i, axis=0)
        a_eq = np.vstack([others.T, np.ones(m - 1)])
        b_eq = np.append(scaled[i], 1.0)
        res = linprog(
            c=np.zeros(m - 1),
            A_eq=a_eq,
            b_eq=b_eq,
            bounds=(0.0, None),
            method="highs",
            options=options,
        )
        if res.status == 0:
            return ConvexIndependenceReport(False, i, res.x)
        if res.status != 2:  # anything but "infeasible" is a solver problem
            raise NumericError(f"hull membership LP failed: {res.message}")
    return ConvexIndependenceReport(True, None, None)


@dataclass
class GenericBound:
    holds: bool
    n: int
    capacity: int

    def __bool__(self):
        return self.holds


def generic_bound(n_alternatives, degree, k):
    """Counting condition |X| <= C(degree + k, k).

    Generic configurations of that many points have affinely independent
    degree-d images; beyond the bound independence is impossible.
    """
    capacity = math.comb(degree + k, k)
    return GenericBound(n_alternatives <= capacity, n_alternatives, capacity)
