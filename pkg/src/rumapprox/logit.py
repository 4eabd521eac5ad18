"""Logit choice components and finite mixtures of them.

Utilities are linear in the monomial features plus a per-alternative
fixed effect shared by all mixture components.  Softmax rows are
computed with the usual max-shift so arbitrarily large coefficients
saturate cleanly instead of overflowing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .features import FeatureMap
from .rankings import polytope_dimension
from .serialize import dumps_compact
from .space import StochasticChoice

FEATURE_ORDER = "graded-then-lex"
PROB_FLOOR = 1e-300


def _utilities(betas, eta, feats):
    """(M, p) coefficients against (n, p) features -> (M, n) utilities."""
    return betas @ feats.T + eta[None, :]


def _softmax_rows(utilities, space, out=None):
    """Stack per-menu softmax rows of (B, n) utilities into (B, L)."""
    B = utilities.shape[0]
    if out is None:
        out = np.empty((B, space.flat_size))
    for start, stop, members in space.layout():
        u = utilities[:, members]
        u = u - u.max(axis=1, keepdims=True)
        np.exp(u, out=u)
        out[:, start:stop] = u / u.sum(axis=1, keepdims=True)
    return out


@dataclass
class MixtureModel:
    """A finite mixture of logit components with shared fixed effects.

    weights: (M,) nonnegative, summing to 1 (1e-9 drift renormalized);
    betas: (M, p) feature coefficients, rows aligned with weights;
    eta: (n,) per-alternative fixed effects.
    """

    degree: int
    weights: np.ndarray
    betas: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        self.betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        self.eta = np.asarray(self.eta, dtype=float)
        if self.betas.shape[0] != self.weights.shape[0]:
            raise DataError("one beta row per mixture weight required")
        if not (
            np.all(np.isfinite(self.weights))
            and np.all(np.isfinite(self.betas))
            and np.all(np.isfinite(self.eta))
        ):
            raise DataError("model parameters must be finite")
        if self.weights.min() < -1e-12:
            raise DataError(f"negative mixture weight {self.weights.min()!r}")
        total = self.weights.sum()
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"mixture weights sum to {total!r}, not 1")
        self.weights = np.clip(self.weights / total, 0.0, None)

    @property
    def components(self):
        return self.weights.shape[0]

    def to_json(self):
        return dumps_compact(
            {
                "degree": self.degree,
                "feature_order": FEATURE_ORDER,
                "weights": self.weights,
                "beta": self.betas.reshape(-1),  # row-major
                "eta": self.eta,
            }
        )

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        if payload.get("feature_order") != FEATURE_ORDER:
            raise DataError("unknown feature ordering tag")
        weights = np.array(payload["weights"], dtype=float)
        beta = np.array(payload["beta"], dtype=float)
        return cls(
            degree=int(payload["degree"]),
            weights=weights,
            betas=beta.reshape(weights.shape[0], -1),
            eta=np.array(payload["eta"], dtype=float),
        )


def _check_against_space(model, space):
    fmap = FeatureMap(model.degree, space.k)
    if model.betas.shape[1] != fmap.dim:
        raise DataError(
            f"beta rows have {model.betas.shape[1]} entries, "
            f"degree {model.degree} in {space.k} characteristics needs {fmap.dim}"
        )
    if model.eta.shape != (space.n,):
        raise DataError(f"eta must have one entry per alternative ({space.n})")
    return fmap


def model_choice(model, space):
    """Choice probabilities implied by the mixture on every menu."""
    fmap = _check_against_space(model, space)
    feats = fmap.matrix(space.chars)
    rows = _softmax_rows(_utilities(model.betas, model.eta, feats), space)
    return StochasticChoice._trusted(space, model.weights @ rows)


def logit_prob(beta, eta, space, degree, menu, x):
    """Probability that a single logit component picks x from menu."""
    beta = np.asarray(beta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    menu_idx = menu if isinstance(menu, int) else space.menu_index(
        tuple(space.index_of(m) if isinstance(m, str) else int(m) for m in menu)
    )
    x_idx = space.index_of(x) if isinstance(x, str) else int(x)
    members = space.menus[menu_idx]
    if x_idx not in members:
        raise DataError(f"alternative {x!r} is not in menu {menu!r}")
    rho = model_choice(MixtureModel(degree, [1.0], beta[None, :], eta), space)
    return float(rho.row(menu_idx)[members.index(x_idx)])


def log_likelihood(rhohat, model):
    """Weighted log likelihood of the target frequencies under the model.

    Entries with zero target probability contribute exactly zero; model
    probabilities are floored at 1e-300 so saturated components cannot
    produce -inf.
    """
    probs = model_choice(model, rhohat.space).values
    w = rhohat.values
    support = w > 0.0
    return float(w[support] @ np.log(np.maximum(probs[support], PROB_FLOOR)))


def mixture_bound(space):
    """Components sufficient for any point of the mixture polytope."""
    return polytope_dimension(space) + 1
