"""Rankings, vertex rules, RUM mixtures, adjacency certificates."""

import itertools

import numpy as np
import pytest

from rumapprox.datasets import fishing_space
from rumapprox.errors import DataError
from rumapprox.rankings import (
    AdjacencyCertificate,
    Ranking,
    adjacency_certificate,
    enumerate_rankings,
    mixture_target,
    polytope_dimension,
    reverse,
    rum_from_measure,
    vertex_choice,
)
from rumapprox.space import Alternative, build_space


def small_space(n, menus="all-nonsingleton-subsets"):
    alts = [Alternative(f"x{i}", (float(i), float(i * i))) for i in range(n)]
    return build_space(alts, menus)


def evaluate_certificate(cert, order):
    """Independent oracle: dot product of t with the vertex rule of order."""
    pos = {alt: i for i, alt in enumerate(order)}
    total = 0.0
    for (menu, alt), value in cert.entries.items():
        best = min(menu, key=pos.__getitem__)
        if best == alt:
            total += value
    return total


def test_enumeration_is_lexicographic_and_guarded():
    rankings = enumerate_rankings(3)
    assert [r.order for r in rankings] == list(itertools.permutations(range(3)))
    assert len(enumerate_rankings(4)) == 24
    assert enumerate_rankings(4)[0].word() == "1234"
    assert enumerate_rankings(4)[-1].word() == "4321"
    with pytest.raises(DataError):
        enumerate_rankings(11)


def test_ranking_basics():
    pi = Ranking((2, 0, 1, 3))
    assert pi.rank(2) == 4 and pi.rank(3) == 1
    assert pi.best_of((0, 1, 3)) == 0
    assert reverse(pi).order == (3, 1, 0, 2)
    assert reverse(reverse(pi)) == pi
    assert Ranking.from_word("3124") == pi
    assert pi.word() == "3124"
    with pytest.raises(DataError):
        Ranking((0, 0, 1))


def test_vertex_choice_puts_mass_on_the_best_member():
    space = fishing_space()
    pi = Ranking((1, 2, 0, 3))  # boat > charter > beach > pier
    rho = vertex_choice(pi, space)
    for i, menu in enumerate(space.menus):
        best = max(menu, key=pi.rank)
        row = rho.row(i)
        assert row.sum() == 1.0
        assert row[menu.index(best)] == 1.0


def test_mixture_target_is_a_convex_combination():
    space = fishing_space()
    pi = Ranking((0, 1, 2, 3))
    mix = mixture_target(pi, 0.5, space)
    half = 0.5 * (vertex_choice(pi, space).values + vertex_choice(reverse(pi), space).values)
    assert np.allclose(mix.values, half)
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(DataError):
            mixture_target(pi, bad, space)


def test_uniform_rum_has_uniform_rows():
    # With equal weight on every ranking, each member of a menu is best
    # equally often, so every row is uniform.
    space = fishing_space()
    rankings = enumerate_rankings(4)
    rho = rum_from_measure({r: 1 / 24 for r in rankings}, space)
    for i, menu in enumerate(space.menus):
        assert np.allclose(rho.row(i), 1.0 / len(menu))


def test_rum_from_measure_accepts_sequences_and_validates():
    space = small_space(3)
    weights = np.zeros(6)
    weights[4] = 1.0  # point mass on the fifth ranking in lex order
    rho = rum_from_measure(weights, space)
    target = vertex_choice(enumerate_rankings(3)[4], space)
    assert np.array_equal(rho.values, target.values)
    with pytest.raises(DataError):
        rum_from_measure(np.full(6, 0.2), space)  # sums to 1.2
    with pytest.raises(DataError):
        rum_from_measure({Ranking((0, 1, 2)): 1.5, Ranking((2, 1, 0)): -0.5}, space)


def test_polytope_dimension_counts_free_coordinates():
    assert polytope_dimension(fishing_space()) == 17
    assert polytope_dimension(small_space(4, "single-set-X")) == 3
    assert polytope_dimension(small_space(3, [("x0", "x1"), ("x0", "x2"), ("x1", "x2")])) == 3
    # Singleton menus add nothing.
    with_singleton = small_space(3, [("x0",), ("x0", "x1"), ("x0", "x2"), ("x1", "x2")])
    assert polytope_dimension(with_singleton) == 3


def test_base_certificate_values():
    space = small_space(3)
    pi = Ranking((0, 1, 2))
    cert = adjacency_certificate(pi, space)
    assert cert.level == 0.0
    assert cert.entries[((0, 1), 0)] == 1.0
    assert cert.entries[((1, 2), 1)] == -2.0
    assert cert.entries[((0, 2), 0)] == 1.0
    assert cert.entries[((0, 1, 2), 1)] == 3.0
    assert len(cert.entries) == 4
    assert np.isclose(cert.margin, 1.0)


def test_certificates_vanish_on_the_pair_and_separate_everything_else():
    for n in (3, 4, 5):
        space = small_space(n)
        rng = np.random.default_rng(n)
        orders = list(itertools.permutations(range(n)))
        for _ in range(3):
            pi = Ranking(tuple(rng.permutation(n)))
            cert = adjacency_certificate(pi, space)
            for order in orders:
                value = evaluate_certificate(cert, order)
                if order == pi.order or order == reverse(pi).order:
                    assert abs(value) <= 1e-9
                else:
                    assert value > 1e-9
            assert cert.margin > 1e-9


def test_certificate_vector_agrees_with_entry_evaluation():
    space = small_space(4)
    pi = Ranking((2, 0, 3, 1))
    cert = adjacency_certificate(pi, space)
    vec = cert.vector(space)
    assert vec.shape == (space.flat_size,)
    for sigma in enumerate_rankings(4):
        dot = float(vec @ vertex_choice(sigma, space).values)
        assert np.isclose(dot, evaluate_certificate(cert, sigma.order), atol=1e-12)


def test_certificate_needs_rich_menus_and_three_alternatives():
    with pytest.raises(DataError):
        adjacency_certificate(Ranking((0, 1)), small_space(2))
    sparse = small_space(4, [("x0", "x1"), ("x0", "x2")])
    with pytest.raises(DataError):
        adjacency_certificate(Ranking((0, 1, 2, 3)), sparse)
