"""Which rankings admit a linear-in-features utility representation.

A ranking is degree-d representable when some coefficient vector beta
orders the alternatives by beta . p_d(x) exactly as the ranking does.
With every pair present as a menu this reduces to the chain of
consecutive-gap inequalities along the ranking, checked here two ways:

* primal: maximize the smallest consecutive gap subject to a box on
  beta (an LP; representable iff the optimum clears a small threshold);
* dual: search for a nonnegative combination of the telescoped feature
  differences that collapses to zero, which exists exactly when no
  separating beta does.

The two routes run through different formulations and different solver
codes on purpose; agreement between them is part of the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import DataError, NumericError
from .features import FeatureMap
from .rankings import Ranking, enumerate_rankings

REP_EPS = 1e-7  # primal margin below this counts as "no"
DUAL_TOL = 1e-8  # telescoped identity must hold this tightly
_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}


def _require_pairs(space):
    for i in range(space.n):
        for j in range(i + 1, space.n):
            if (i, j) not in space._index:
                raise DataError(
                    "representability needs every pair menu; "
                    f"({space.ids[i]}, {space.ids[j]}) is missing"
                )


def _scaled_features(space, degree):
    feats = FeatureMap(degree, space.k).matrix(space.chars)
    scale = np.abs(feats).max(axis=0)
    scale[scale == 0.0] = 1.0
    return feats / scale, scale


@dataclass
class RepresentabilityResult:
    representable: bool
    ranking: Ranking
    degree: int
    margin: float
    beta: np.ndarray | None
    dual_certificate: np.ndarray | None

    def __bool__(self):
        return self.representable


def is_representable(ranking, degree, space, eps=REP_EPS):
    """Max-margin LP over the consecutive-gap chain of the ranking.

    Returns a result whose ``beta`` (when representable) is rescaled so
    the smallest consecutive utility gap equals 1, and whose
    ``dual_certificate`` (when not) is the nonnegative combination
    witnessing impossibility.  ``margin`` is the LP optimum in
    column-rescaled feature coordinates; only its comparison against
    ``eps`` is meaningful across datasets.
    """
    if ranking.n != space.n:
        raise DataError("ranking and space disagree on the number of alternatives")
    _require_pairs(space)
    scaled, scale = _scaled_features(space, degree)
    order = np.array(ranking.order)
    diffs = scaled[order[:-1]] - scaled[order[1:]]
    m, p = diffs.shape
    if m == 0:
        return RepresentabilityResult(True, ranking, degree, np.inf, np.zeros(p), None)

    cost = np.zeros(p + 1)
    cost[-1] = -1.0  # maximize the margin variable
    a_ub = np.hstack([-diffs, np.ones((m, 1))])
    res = linprog(
        cost,
        A_ub=a_ub,
        b_ub=np.zeros(m),
        bounds=[(-1.0, 1.0)] * p + [(None, None)],
        method="highs",
        options=_LP_OPTIONS,
    )
    if res.status != 0:
        raise NumericError(f"representability LP failed: {res.message}")
    margin = float(res.x[-1])
    if margin > eps:
        beta_scaled = res.x[:p]
        gaps = diffs @ beta_scaled
        beta = (beta_scaled / scale) / gaps.min()
        return RepresentabilityResult(True, ranking, degree, margin, beta, None)
    lam, residual = _dual_search(ranking, degree, space)
    certificate = lam if residual <= DUAL_TOL else None
    return RepresentabilityResult(False, ranking, degree, margin, None, certificate)


def _dual_search(ranking, degree, space):
    """Best nonnegative, sum-one combination collapsing the telescoped sum.

    Builds the coefficient matrix exactly as the telescoped identity
    groups it: the worst alternative enters with the first weight, each
    middle alternative with a difference of adjacent weights, the best
    with the last weight negated.  Returns the weights (in raw feature
    coordinates, renormalized to sum 1) and the achieved residual.
    """
    scaled, _ = _scaled_features(space, degree)
    order = ranking.order
    n = len(order)
    p = scaled.shape[1]
    coef = np.zeros((p, n - 1))
    coef[:, 0] += scaled[order[0]]
    for i in range(2, n):
        mid = scaled[order[i - 1]]
        coef[:, i - 1] += mid
        coef[:, i - 2] -= mid
    coef[:, n - 2] -= scaled[order[-1]]

    norms = np.linalg.norm(coef, axis=0)
    degenerate = norms <= 1e-15
    if degenerate.any():
        # A vanishing difference vector is already an exact certificate.
        lam = np.zeros(n - 1)
        lam[int(np.argmax(degenerate))] = 1.0
        return lam, 0.0
    unit = coef / norms
    system = np.vstack([unit, np.ones((1, n - 1))])
    target = np.zeros(p + 1)
    target[-1] = 1.0
    weights, _ = nnls(system, target)
    total = weights.sum()
    if total <= 1e-12:
        return np.zeros(n - 1), np.inf
    # Judge feasibility on the sum-one rescaling; the raw nnls residual
    # mixes in the normalization row and can be tiny at weights near 0.
    residual = float(np.linalg.norm(unit @ (weights / total)))
    # Undo the column normalization so the identity holds for the raw
    # telescoped coefficients, then renormalize the weights.
    lam = weights / norms
    lam = lam / lam.sum()
    return lam, residual


def condition_star_oracle(ranking, degree, space, tol=DUAL_TOL):
    """True iff no nonnegative combination collapses the telescoped sum,
    which is exactly when the ranking is representable."""
    if ranking.n != space.n:
        raise DataError("ranking and space disagree on the number of alternatives")
    _require_pairs(space)
    if space.n == 1:
        return True
    _, residual = _dual_search(ranking, degree, space)
    return residual > tol


@dataclass
class CensusResult:
    degree: int
    results: tuple

    @property
    def representable(self):
        return [r.ranking for r in self.results if r.representable]

    @property
    def unrepresentable(self):
        return [r.ranking for r in self.results if not r.representable]


def _census_task(args):
    space, degree, order = args
    return is_representable(Ranking(order), degree, space)


def census(degree, space, jobs=1):
    """Classify every ranking of the space at the given degree."""
    rankings = enumerate_rankings(space)
    tasks = [(space, degree, r.order) for r in rankings]
    if jobs and jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = tuple(pool.map(_census_task, tasks))
    else:
        results = tuple(_census_task(t) for t in tasks)
    return CensusResult(degree=degree, results=results)
