"""Representability of rankings by linear-in-features utilities."""

import numpy as np
import pytest

from rumapprox.datasets import fishing_space
from rumapprox.errors import DataError
from rumapprox.features import FeatureMap
from rumapprox.rankings import Ranking, enumerate_rankings
from rumapprox.represent import census, condition_star_oracle, is_representable
from rumapprox.space import Alternative, build_space

UNREPRESENTABLE_DEGREE_ONE = {
    "1234", "1243", "1324", "1423", "2134", "2143",
    "3241", "3412", "3421", "4231", "4312", "4321",
}


def random_space(rng, n=4, k=2):
    alts = [Alternative(f"x{i}", rng.normal(size=k)) for i in range(n)]
    return build_space(alts)


def test_fishing_census_degree_one():
    result = census(1, fishing_space())
    assert {r.word() for r in result.unrepresentable} == UNREPRESENTABLE_DEGREE_ONE
    assert len(result.representable) == 12


def test_fishing_census_degree_two_all_representable():
    result = census(2, fishing_space())
    assert result.unrepresentable == []
    assert len(result.representable) == 24


def test_census_partitions_all_rankings():
    result = census(1, fishing_space())
    words = sorted(r.word() for r in result.representable + result.unrepresentable)
    assert words == sorted(r.word() for r in enumerate_rankings(4))


def test_collinear_middle_point_ranked_last():
    # Three collinear characteristic points; no linear utility can put
    # the middle one strictly below both endpoints.
    alts = [
        Alternative("lo", (0.0, 0.0)),
        Alternative("mid", (1.0, 1.0)),
        Alternative("hi", (2.0, 2.0)),
    ]
    space = build_space(alts)
    pi = Ranking((0, 2, 1))  # lo > hi > mid
    res = is_representable(pi, 1, space)
    assert not res
    assert not condition_star_oracle(pi, 1, space)
    assert res.dual_certificate is not None
    # And a ranking consistent with the line direction is fine.
    assert is_representable(Ranking((2, 1, 0)), 1, space)


def test_witness_orders_every_menu_not_just_consecutive_pairs():
    space = fishing_space()
    fmap = FeatureMap(1, space.k)
    feats = fmap.matrix(space.chars)
    result = census(1, space)
    for res in result.results:
        if not res.representable:
            continue
        utilities = feats @ res.beta
        order = res.ranking.order
        gaps = utilities[np.array(order[:-1])] - utilities[np.array(order[1:])]
        assert np.isclose(gaps.min(), 1.0)  # witness normalized to unit gap
        for menu in space.menus:
            best = res.ranking.best_of(menu)
            for other in menu:
                if other != best:
                    assert utilities[best] > utilities[other]


def test_dual_certificate_satisfies_telescoped_identity():
    space = fishing_space()
    fmap = FeatureMap(1, space.k)
    feats = fmap.matrix(space.chars)
    res = is_representable(Ranking.from_word("1234"), 1, space)
    lam = res.dual_certificate
    assert lam is not None
    assert lam.min() >= 0.0 and np.isclose(lam.sum(), 1.0)
    order = res.ranking.order
    diffs = feats[np.array(order[:-1])] - feats[np.array(order[1:])]
    assert np.abs(lam @ diffs).max() <= 1e-8


def test_reversal_symmetry():
    rng = np.random.default_rng(5)
    spaces = [fishing_space()] + [random_space(rng) for _ in range(10)]
    for space in spaces:
        for pi in enumerate_rankings(4)[:8]:
            fwd = bool(is_representable(pi, 1, space))
            bwd = bool(is_representable(pi.reverse(), 1, space))
            assert fwd == bwd


def test_primal_and_dual_routes_agree():
    rng = np.random.default_rng(17)
    for trial in range(60):
        space = random_space(rng, n=rng.integers(3, 6), k=rng.integers(1, 4))
        degree = int(rng.integers(1, 3))
        for pi in rng.permutation(enumerate_rankings(space.n))[:6]:
            primal = bool(is_representable(pi, degree, space))
            dual = condition_star_oracle(pi, degree, space)
            assert primal == dual


def test_representable_is_monotone_in_degree():
    rng = np.random.default_rng(29)
    for _ in range(20):
        space = random_space(rng, n=4, k=2)
        for pi in enumerate_rankings(4)[::5]:
            if is_representable(pi, 1, space):
                assert is_representable(pi, 2, space)


def test_representability_needs_all_pairs():
    space = build_space(
        [Alternative(f"x{i}", (float(i),)) for i in range(3)],
        [("x0", "x1"), ("x0", "x2")],
    )
    with pytest.raises(DataError):
        is_representable(Ranking((0, 1, 2)), 1, space)
