"""Tabular reports: per-ranking error tables, the fixed-effect table,
and the dataset diagnosis.

Every builder returns a plain value object with ``to_text``, ``to_csv``
and ``to_json`` renderings.  Errors are kept at full precision in the
rows and rounded to three decimals only in the text layout, and every
builder is deterministic for a fixed seed, so renderings are
byte-for-byte reproducible.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .features import FeatureMap, affine_independent, convex_independent, generic_bound
from .fitters import EmConfig, GreedyConfig, GridSpec, em_fit, fixed_effect_search, greedy_fit
from .logit import mixture_bound
from .rankings import mixture_target, polytope_dimension, vertex_choice
from .represent import census
from .serialize import dumps_compact


@dataclass
class TableRow:
    ranking: str
    degree: int
    engine: str
    error: float
    seed: int
    steps: int
    eta: np.ndarray | None = None  # winning fixed effects, when searched
    representable: bool = False


@dataclass
class TableReport:
    title: str
    rows: list
    with_eta: bool = False
    group_degree: int = 1  # census degree behind the block labels

    def to_csv(self):
        out = io.StringIO()
        head = "ranking,degree,engine,error,seed,steps"
        out.write(head + (",eta\n" if self.with_eta else "\n"))
        for r in self.rows:
            line = f"{r.ranking},{r.degree},{r.engine},{r.error:.17g},{r.seed},{r.steps}"
            if self.with_eta:
                eta = " ".join(f"{v:g}" for v in r.eta) if r.eta is not None else ""
                line += f",{eta}"
            out.write(line + "\n")
        return out.getvalue()

    def to_json(self):
        rows = []
        for r in self.rows:
            row = {
                "ranking": r.ranking,
                "degree": r.degree,
                "engine": r.engine,
                "error": r.error,
                "seed": r.seed,
                "steps": r.steps,
            }
            if self.with_eta:
                row["eta"] = r.eta
            rows.append(row)
        return dumps_compact({"title": self.title, "rows": rows})

    def to_text(self):
        degrees = sorted({r.degree for r in self.rows})
        engines = []
        for r in self.rows:
            if r.engine not in engines:
                engines.append(r.engine)
        cell = {(r.ranking, r.degree, r.engine): r.error for r in self.rows}
        words, blocks = [], {}
        for r in self.rows:
            if r.ranking not in blocks:
                words.append(r.ranking)
                blocks[r.ranking] = r.representable

        out = io.StringIO()
        out.write(self.title + "\n\n")
        head = f"{'ranking':<10}" + "".join(
            f"{f'd={d} {e}':>12}" for d in degrees for e in engines
        )
        out.write(head + "\n")
        out.write("-" * len(head) + "\n")

        def block(label, members):
            if not members:
                return
            out.write(label + "\n")
            for word in members:
                line = f"{word:<10}" + "".join(
                    f"{cell[(word, d, e)]:>12.3f}" for d in degrees for e in engines
                )
                out.write(line + "\n")

        unrep = [w for w in words if not blocks[w]]
        rep = [w for w in words if blocks[w]]
        block(f"unrepresentable at degree {self.group_degree}:", unrep)
        if unrep and rep:
            out.write("\n")
        block(f"representable at degree {self.group_degree}:", rep)
        return out.getvalue()


def _fit_cell(args):
    engine, target, degree, cfg = args
    fit = greedy_fit if engine == "greedy" else em_fit
    return fit(target, degree, cfg)


def _run_cells(tasks, jobs):
    if jobs and jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_fit_cell, tasks))
    return [_fit_cell(t) for t in tasks]


def run_table1(space, degrees=(1, 2), greedy_config=None, em_config=None, jobs=1):
    """Per-ranking approximation errors, both engines, eta = 0.

    Rankings are grouped with the degree-1 unrepresentable ones first
    (lexicographic inside each group), one row per ranking with one
    error column per (degree, engine).
    """
    greedy_config = greedy_config if greedy_config is not None else GreedyConfig()
    em_config = em_config if em_config is not None else EmConfig()
    split = census(min(degrees), space, jobs=jobs)
    ordered = [(r, False) for r in split.unrepresentable] + [
        (r, True) for r in split.representable
    ]

    tasks, meta = [], []
    for degree in degrees:
        for ranking, rep in ordered:
            target = vertex_choice(ranking, space)
            for engine, cfg in (("greedy", greedy_config), ("em", em_config)):
                tasks.append((engine, target, degree, cfg))
                meta.append((ranking, rep, degree, engine))
    fits = _run_cells(tasks, jobs)

    rows = [
        TableRow(
            ranking=ranking.word(),
            degree=degree,
            engine=engine,
            error=fit.error,
            seed=fit.seed,
            steps=fit.steps,
            representable=rep,
        )
        for (ranking, rep, degree, engine), fit in zip(meta, fits)
    ]
    return TableReport(
        title="approximation error to single-ranking targets",
        rows=rows,
        group_degree=min(degrees),
    )


def table2_rankings(space, jobs=1):
    """Unrepresentable rankings lexicographically below their reverses.

    Each unordered {pi, reverse(pi)} pair of degree-1 unrepresentable
    rankings appears exactly once, represented by its smaller word.
    """
    unrep = {r.word(): r for r in census(1, space, jobs=jobs).unrepresentable}
    picked = []
    for word, ranking in sorted(unrep.items()):
        partner = ranking.reverse().word()
        if partner in unrep and word > partner:
            continue
        picked.append(ranking)
    return picked


def run_table2(space, degrees=(1, 2), grid=None, greedy_config=None,
               em_config=None, jobs=1):
    """Fixed-effect search errors for reversed-pair mixture targets.

    One row per unrepresentable reversed pair (half weight on each
    ranking of the pair), one error column per (degree, engine); the
    winning fixed-effect vector is kept on each row.
    """
    grid = grid if grid is not None else GridSpec()
    greedy_config = greedy_config if greedy_config is not None else GreedyConfig()
    em_config = em_config if em_config is not None else EmConfig()

    rows = []
    for ranking in table2_rankings(space, jobs=jobs):
        target = mixture_target(ranking, 0.5, space)
        for degree in degrees:
            for engine, cfg in (("greedy", greedy_config), ("em", em_config)):
                fit = fixed_effect_search(
                    target, degree, engine, grid=grid, config=cfg, jobs=jobs
                )
                rows.append(
                    TableRow(
                        ranking=ranking.word(),
                        degree=degree,
                        engine=engine,
                        error=fit.error,
                        seed=cfg.seed,
                        steps=fit.steps,
                        eta=fit.eta,
                    )
                )
    return TableReport(
        title="approximation error to reversed-pair mixtures (searched fixed effects)",
        rows=rows,
        with_eta=True,
    )


@dataclass
class DiagnoseReport:
    ids: tuple
    k: int
    degree: int
    generic: object
    affine: object
    convex: object
    dimension: int
    bound: int
    census: object

    def to_text(self):
        g, a, c = self.generic, self.affine, self.convex
        unrep = self.census.unrepresentable
        out = io.StringIO()
        out.write(
            f"alternatives: {len(self.ids)} ({', '.join(map(str, self.ids))}); "
            f"k={self.k}; degree={self.degree}\n"
        )
        out.write(
            f"generic spanning bound: {'holds' if g.holds else 'violated'} "
            f"({g.n} alternatives vs capacity {g.capacity})\n"
        )
        out.write(
            f"feature images affinely independent: {'yes' if a.independent else 'no'} "
            f"(rank {a.rank} of {a.required})\n"
        )
        witness = "" if c.independent else f" (alternative index {c.witness} is interior)"
        out.write(
            f"feature images convex independent: "
            f"{'yes' if c.independent else 'no'}{witness}\n"
        )
        out.write(f"mixture polytope dimension: {self.dimension}\n")
        out.write(f"sufficient mixture components: {self.bound}\n")
        out.write(
            f"census: {len(unrep)} of {len(self.census.results)} rankings "
            f"unrepresentable at degree {self.degree}\n"
        )
        if unrep:
            out.write("  " + " ".join(r.word() for r in unrep) + "\n")
        return out.getvalue()

    def to_json(self):
        return dumps_compact(
            {
                "ids": list(self.ids),
                "k": self.k,
                "degree": self.degree,
                "generic_bound": {
                    "holds": self.generic.holds,
                    "n": self.generic.n,
                    "capacity": self.generic.capacity,
                },
                "affine_independent": self.affine.independent,
                "convex_independent": self.convex.independent,
                "polytope_dimension": self.dimension,
                "mixture_bound": self.bound,
                "unrepresentable": [r.word() for r in self.census.unrepresentable],
                "representable": [r.word() for r in self.census.representable],
            }
        )

    to_csv = to_text  # the diagnosis is narrative; csv output mirrors text


def run_diagnose(space, degree, jobs=1):
    """Independence diagnostics plus the representability census."""
    images = FeatureMap(degree, space.k).matrix(space.chars)
    return DiagnoseReport(
        ids=space.ids,
        k=space.k,
        degree=degree,
        generic=generic_bound(space.n, degree, space.k),
        affine=affine_independent(images),
        convex=convex_independent(images),
        dimension=polytope_dimension(space),
        bound=mixture_bound(space),
        census=census(degree, space, jobs=jobs),
    )
