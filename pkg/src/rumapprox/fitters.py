"""Fitting engines: conditional-gradient greedy and EM.

Both engines approximate a target stochastic choice function by a finite
mixture of logit components with shared fixed effects.  The greedy
engine adds one component per step, mixing it in with a step size drawn
from the classic shrinking grid and keeping the iterate when nothing
improves; the EM engine runs batched likelihood sweeps from several
random starts.  Everything is vectorized across restarts / inits /
grid points because the target hosts for this code are small machines.

The greedy step-1 component is searched hard (direction-magnitude sweep
plus multi-start descent in unit-RMS feature coordinates); later steps
sample a seeded standard-normal restart cloud scaled by {0.1, 1, 10} in
raw coordinates and take the best candidate under the joint
weight-component objective.  When the residual's own ranking order is
realizable at the current degree, the cloud also carries one directed
candidate: the saturated atom of the best realizable ranking by linear
improvement, which is the exact linear-minimization step over ranking
atoms and is what lets mixtures of rankings be recovered instead of
merely approached.  EM initializes each coefficient uniformly on [0, 1)
divided by the feature's root-mean-square over X (unscaled draws
saturate the softmax when characteristics are large), runs its sweeps
in column-standardized coordinates (an exact reparameterization of the
model class), and maps the fit back to raw coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DataError, NumericError
from .features import FeatureMap
from .logit import MixtureModel, _softmax_rows, log_likelihood, mixture_bound, model_choice
from .rankings import Ranking, enumerate_rankings, vertex_choice
from .represent import is_representable
from .serialize import dumps_compact
from .space import StochasticChoice, distance

WEIGHT_FLOOR = 1e-12  # EM components below this are frozen
PRUNE_TOL = 1e-15  # greedy drops components lighter than this
ATOM_GAP = 60.0  # utility gap of a saturated ranking atom; swamps fixed
# effects on the default grid (|eta| <= 10 moves a gap by at most 20)
# while staying far from exp overflow


# ---------------------------------------------------------------------------
# shared problem setup


class _Problem:
    """Precomputed geometry for one (space, degree, eta) fitting task."""

    def __init__(self, space, degree, eta=None):
        self.space = space
        self.degree = degree
        self.fmap = FeatureMap(degree, space.k)
        self.feats = self.fmap.matrix(space.chars)
        center = self.feats.mean(axis=0)
        spread = np.sqrt(np.mean((self.feats - center) ** 2, axis=0))
        spread[spread == 0.0] = 1.0
        self.center = center
        self.scale = spread
        self.feats_std = (self.feats - center) / spread
        # Unit-RMS columns: plain root-mean-square of each feature over
        # X, so a coefficient of size t moves utilities by about t.
        rms = np.sqrt(np.mean(self.feats**2, axis=0))
        rms[rms == 0.0] = 1.0
        self.init_scale = rms
        self.feats_unit = self.feats / rms
        if eta is None:
            eta = np.zeros(space.n)
        self.eta = np.asarray(eta, dtype=float)
        if self.eta.shape != (space.n,):
            raise DataError(f"eta must have one entry per alternative ({space.n})")
        self.layout = list(space.layout())
        self.flat_size = space.flat_size
        self.denom = space.nonsingleton_menu_count
        # Gather / scatter matrices turning per-menu softmax work into
        # dense matmuls: member[l] is the alternative at flat slot l,
        # menu_ind sums slots of one menu, spread copies a per-menu
        # value back to its slots.
        member = np.concatenate([m for _, _, m in self.layout])
        self.member = member
        self.menu_starts = np.array([start for start, _, _ in self.layout])
        menu_ind = np.zeros((self.flat_size, len(self.layout)))
        for j, (start, stop, _) in enumerate(self.layout):
            menu_ind[start:stop, j] = 1.0
        self.menu_ind = menu_ind
        alt_ind = np.zeros((self.flat_size, space.n))
        alt_ind[np.arange(self.flat_size), member] = 1.0
        self.alt_ind = alt_ind

    def fast_rows(self, utilities):
        """Per-menu softmax of (B, n) utilities without a Python loop.

        Matches the exact per-menu max shift: each menu's largest entry
        exponentiates to 1, so denominators never underflow.
        """
        gathered = utilities[:, self.member]
        shift = np.maximum.reduceat(gathered, self.menu_starts, axis=1)
        e = np.exp(gathered - shift @ self.menu_ind.T)
        denom = (e @ self.menu_ind) @ self.menu_ind.T
        return e / denom

    def raw_beta(self, beta_std):
        return np.asarray(beta_std) / self.scale

    def probs(self, beta_rows, eta_rows=None):
        """(B, p) raw coefficients -> (B, L) stacked choice rows."""
        eta = self.eta if eta_rows is None else eta_rows
        utilities = beta_rows @ self.feats.T + np.atleast_2d(eta)
        return _softmax_rows(utilities, self.space)


def _seed_of(*parts):
    return np.random.SeedSequence(tuple(int(p) for p in parts))


# ---------------------------------------------------------------------------
# configs and reports


@dataclass
class GreedyConfig:
    steps: int = 1000
    restarts: int = 20
    inner_iters: int = 500
    seed: int = 0
    stop_tol: float = 0.0
    eta: Optional[np.ndarray] = None


@dataclass
class EmConfig:
    mixtures: Optional[int] = None  # default: mixture_bound(space)
    inits: int = 10
    tol: float = 1e-6  # sweep-to-sweep change of the L2 distance
    max_sweeps: int = 5000
    newton_steps: int = 6
    seed: int = 0
    eta: Optional[np.ndarray] = None


@dataclass
class FitReport:
    engine: str
    degree: int
    error: float
    model: MixtureModel
    trace: np.ndarray
    steps: int
    seed: int
    eta: np.ndarray
    config: dict = field(default_factory=dict)
    bound_trace: Optional[np.ndarray] = None
    likelihood_trace: Optional[np.ndarray] = None

    def to_json(self):
        payload = {
            "engine": self.engine,
            "degree": self.degree,
            "error": self.error,
            "steps": self.steps,
            "seed": self.seed,
            "eta": self.eta,
            "trace": self.trace,
            "config": {k: v for k, v in self.config.items()},
            "model": json.loads(self.model.to_json()),
        }
        if self.bound_trace is not None:
            payload["bound_trace"] = self.bound_trace
        if self.likelihood_trace is not None:
            payload["likelihood_trace"] = self.likelihood_trace
        return dumps_compact(payload)


def _config_echo(cfg):
    out = {}
    for key, value in vars(cfg).items():
        if isinstance(value, np.ndarray):
            value = [float(v) for v in value]
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# greedy engine


def greedy_bound(steps, space):
    """Worst-case error gap of the greedy iterate after ``steps`` steps."""
    if steps < 1:
        raise DataError("steps must be at least 1")
    t_norm = 8.0 / space.nonsingleton_menu_count
    return float(np.sqrt(t_norm / (steps + 1)))


def _restart_cloud(rng, count, p):
    scales = np.array([0.1, 1.0, 10.0])[np.arange(count) % 3]
    return rng.standard_normal((count, p)) * scales[:, None]


def _direction_sweep(rng, prob, n_dirs=256, n_mags=25):
    """Coarse global grid for the single-component fit.

    Unit directions (an exact angular grid when p == 2, random otherwise)
    crossed with log-spaced magnitudes, expressed in unit-RMS feature
    coordinates so a point of size t moves every utility by about t.
    """
    p = prob.feats.shape[1]
    if p == 2:
        angles = np.linspace(0.0, 2.0 * np.pi, n_dirs, endpoint=False)
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        dirs = rng.standard_normal((n_dirs, p))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    mags = np.logspace(-2.0, 3.0, n_mags)
    grid = dirs[:, None, :] * mags[None, :, None]
    return grid.reshape(-1, p)


def _propensity_anchor(prob, target):
    """Closed-form candidate directions for the first component.

    Each alternative's net propensity (observed minus uniform share,
    summed over its menus) is mapped onto the feature span by least
    squares.  When the features are affinely independent the image
    reproduces any score vector exactly, so scaling the direction up
    recovers every representable target; otherwise it is still a solid
    starting direction.  Returned over the usual magnitude ladder.
    """
    sizes = prob.menu_ind.sum(axis=0)
    uniform = prob.menu_ind @ (1.0 / sizes)
    scores = prob.alt_ind.T @ (target - uniform)
    scores = scores - scores.mean()
    gamma, *_ = np.linalg.lstsq(prob.feats_unit, scores, rcond=None)
    norm = np.linalg.norm(gamma)
    if norm < 1e-12:
        return np.zeros((0, prob.feats.shape[1]))
    mags = np.logspace(-2.0, 3.0, 25)
    return (gamma / norm)[None, :] * mags[:, None]


class _RankingAtoms:
    """Saturated logit atoms of the realizable rankings of a space.

    For each ranking realizable at the degree, the max-margin coefficient
    vector scaled to utility gaps of ATOM_GAP gives a component whose
    choice probabilities equal the ranking's degenerate choice function
    to machine precision.  ``direct`` returns the exact linear-
    minimization atom over that dictionary for a residual, but only when
    the residual's own ranking order is realizable: a residual pinned to
    an unrealizable order has no single atom for its missing face, and
    the sampled cloud explores instead.
    """

    # The dictionary is factorial in the alternative count; past this
    # many rankings the directed candidate is skipped entirely.
    LIMIT = 720

    def __init__(self, space, degree):
        if math.factorial(space.n) > self.LIMIT:
            self.index = None
            return
        rankings = enumerate_rankings(space)
        self.vertices = np.array([vertex_choice(r, space).values for r in rankings])
        betas = []
        for r in rankings:
            try:
                res = is_representable(r, degree, space)
            except DataError:  # realizability needs pair menus
                self.index = None
                return
            betas.append(ATOM_GAP * res.beta if res.representable else None)
        self.betas = betas
        self.realizable = np.array([b is not None for b in betas])
        self.index = {tuple(r.order): i for i, r in enumerate(rankings)}

    def direct(self, alt_ind, residual):
        if self.index is None:
            return None
        scores = alt_ind.T @ residual
        implied = tuple(int(i) for i in np.argsort(-scores, kind="stable"))
        if not self.realizable[self.index[implied]]:
            return None
        lin = self.vertices @ residual
        lin[~self.realizable] = -np.inf
        return self.betas[int(np.argmax(lin))]


def _best_grid_alpha(lin, quad, n_grid, rr):
    """Minimize rr - 2*alpha*lin + alpha^2*quad over alpha in {2/(k+1)}.

    Convex in alpha, so only the grid neighbors of the unconstrained
    minimizer need checking.  Returns (alpha, value) arrays.
    """
    safe_quad = np.where(quad > 0.0, quad, 1.0)
    ideal = np.where(quad > 0.0, lin / safe_quad, 0.0)
    # Grid index k for alpha = 2/(k+1); clamp into [1, n_grid].
    with np.errstate(divide="ignore", over="ignore"):
        k_hat = np.where(ideal > 0.0, 2.0 / np.maximum(ideal, 1e-300) - 1.0, n_grid)
    alpha_lo = 2.0 / (np.clip(np.floor(k_hat), 1, n_grid) + 1.0)
    alpha_hi = 2.0 / (np.clip(np.ceil(k_hat), 1, n_grid) + 1.0)
    value_lo = rr - 2.0 * alpha_lo * lin + alpha_lo**2 * quad
    value_hi = rr - 2.0 * alpha_hi * lin + alpha_hi**2 * quad
    hi_wins = value_hi < value_lo
    alpha = np.where(hi_wins, alpha_hi, alpha_lo)
    value = np.where(hi_wins, value_hi, value_lo)
    return alpha, value


class _InnerObjective:
    """min over grid alpha of || r - alpha (q(beta) - rho_prev) ||^2."""

    _STEPS = 0.5 ** np.arange(20)  # backtracking ladder, reset every iteration

    def __init__(self, prob, residual, rho_prev, n_grid, feats=None):
        self.prob = prob
        self.feats = prob.feats if feats is None else feats
        self.r = residual
        self.rho_prev = rho_prev
        self.n_grid = n_grid
        self.rr = float(residual @ residual)

    def evaluate(self, beta_rows):
        q = self.prob.fast_rows(beta_rows @ self.feats.T + self.prob.eta)
        s = q - self.rho_prev
        lin = s @ self.r
        quad = np.einsum("bl,bl->b", s, s)
        alpha, value = _best_grid_alpha(lin, quad, self.n_grid, self.rr)
        return value, alpha, q, s

    def gradient(self, q, s, alpha):
        # d/dq of ||r - alpha s||^2 is -2 alpha (r - alpha s); chain rule
        # through each softmax row, then into beta.
        err = self.r[None, :] - alpha[:, None] * s
        dq = (-2.0 * alpha)[:, None] * err
        prob = self.prob
        inner = ((q * dq) @ prob.menu_ind) @ prob.menu_ind.T
        grad_u = (q * (dq - inner)) @ prob.alt_ind
        return grad_u @ self.feats


def _inner_descent(objective, starts, max_iters, patience=3):
    """Batched gradient descent with classic backtracking.

    Each iteration tries the full halving ladder from step 1 at once and
    keeps every row's first candidate passing the sufficient-decrease
    test.  Rows retire when the gradient vanishes, no ladder step
    passes, or the value has been flat for ``patience`` iterations.
    """
    beta = starts.copy()
    value, alpha, q, s = objective.evaluate(beta)
    best_beta = beta.copy()
    best_value = value.copy()
    best_alpha = alpha.copy()

    n_rows, p = beta.shape
    steps = objective._STEPS
    n_steps = steps.size
    stale = np.zeros(n_rows, dtype=int)
    anchor = value.copy()  # value at the last significant improvement
    active = np.ones(n_rows, dtype=bool)
    grad = objective.gradient(q, s, alpha)
    for _ in range(max_iters):
        idx = np.where(active)[0]
        if idx.size == 0:
            break
        g = grad[idx]
        gnorm2 = np.einsum("bp,bp->b", g, g)
        live = gnorm2 > 1e-20
        active[idx[~live]] = False
        idx = idx[live]
        if idx.size == 0:
            break
        g = g[live]
        gnorm2 = gnorm2[live]
        ladder = beta[idx, None, :] - steps[None, :, None] * g[:, None, :]
        c_value, c_alpha, c_q, c_s = objective.evaluate(ladder.reshape(-1, p))
        flat_size = c_q.shape[1]
        c_q = c_q.reshape(idx.size, n_steps, flat_size)
        c_s = c_s.reshape(idx.size, n_steps, flat_size)
        c_value = c_value.reshape(idx.size, n_steps)
        c_alpha = c_alpha.reshape(idx.size, n_steps)
        ok = c_value <= value[idx, None] - 1e-4 * steps[None, :] * gnorm2[:, None]
        any_ok = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        hit = idx[any_ok]
        if hit.size:
            rows = np.where(any_ok)[0]
            chosen = first[any_ok]
            beta[hit] = ladder[rows, chosen]
            value[hit] = c_value[rows, chosen]
            alpha[hit] = c_alpha[rows, chosen]
            progressed = value[hit] < anchor[hit] * (1.0 - 1e-6)
            anchor[hit] = np.where(progressed, value[hit], anchor[hit])
            stale[hit] = np.where(progressed, 0, stale[hit] + 1)
            better = value[hit] < best_value[hit]
            upd = hit[better]
            best_beta[upd] = beta[upd]
            best_value[upd] = value[upd]
            best_alpha[upd] = alpha[upd]
            active[hit[stale[hit] > patience]] = False
        active[idx[~any_ok]] = False
        still = any_ok & active[idx]
        if still.any():
            rows = np.where(still)[0]
            chosen = first[still]
            grad[idx[still]] = objective.gradient(
                c_q[rows, chosen], c_s[rows, chosen], alpha[idx[still]]
            )
    winner = int(np.argmin(best_value))
    return best_beta[winner], float(best_value[winner]), float(best_alpha[winner])


def greedy_fit(rhohat, degree, config=None):
    """Conditional-gradient mixture fit.

    Step 1 fits the best single logit component to the target; each
    later step jointly picks a new component and a mixing weight from
    the shrinking grid {2/(k+1)}, retaining the current iterate when no
    candidate improves, so the error trace never increases.
    """
    cfg = config if config is not None else GreedyConfig()
    if cfg.steps < 1:
        raise DataError("greedy needs at least one step")
    prob = _Problem(rhohat.space, degree, cfg.eta)
    target = rhohat.values
    rng = np.random.default_rng(_seed_of(cfg.seed))
    p = prob.feats.shape[1]

    # Step 1: single-component fit (alpha pinned to 1).  The best single
    # component anchors the whole mixture, so it gets a real search: a
    # global direction-magnitude sweep seeds multi-start descent, all in
    # unit-RMS feature coordinates where the gradient is well scaled.
    objective = _InnerObjective(prob, target, np.zeros_like(target), 1,
                                feats=prob.feats_unit)
    sweep = np.vstack([_direction_sweep(rng, prob), _propensity_anchor(prob, target)])
    sweep_value, _, _, _ = objective.evaluate(sweep)
    order = np.argsort(sweep_value, kind="stable")[: cfg.restarts]
    starts = np.vstack([sweep[order], _restart_cloud(rng, cfg.restarts, p)])
    gamma, value, _ = _inner_descent(objective, starts, cfg.inner_iters)
    beta = gamma / prob.init_scale
    rho = prob.probs(beta[None, :])[0]
    comp_beta = [beta]
    weights = np.array([1.0])

    # Later steps: the shrinking weight grid only needs some improving
    # direction, so the inner problem is sampled (best restart-cloud
    # candidate under the joint alpha-component objective), not
    # descended.  The cloud carries one directed candidate whenever the
    # residual's ranking order is realizable (see _RankingAtoms).
    atoms = _RankingAtoms(rhohat.space, degree) if cfg.steps > 1 else None
    trace = [float(np.linalg.norm(target - rho)) / prob.denom]
    for step_index in range(2, cfg.steps + 1):
        if trace[-1] <= cfg.stop_tol:
            break
        residual = target - rho
        objective = _InnerObjective(prob, residual, rho, step_index)
        cloud = _restart_cloud(rng, cfg.restarts, p)
        directed = atoms.direct(prob.alt_ind, residual)
        if directed is not None:
            cloud = np.vstack([cloud, directed[None, :]])
        values, alphas, q_rows, _ = objective.evaluate(cloud)
        pick = int(np.argmin(values))
        beta, value, alpha = cloud[pick], values[pick], alphas[pick]
        if value < objective.rr * (1.0 - 1e-12):
            rho_new = q_rows[pick]
            rho = rho + alpha * (rho_new - rho)
            weights = weights * (1.0 - alpha)
            weights = np.append(weights, alpha)
            comp_beta.append(beta)
            keep = weights > PRUNE_TOL
            if not keep.all():
                weights = weights[keep]
                comp_beta = [b for b, k in zip(comp_beta, keep) if k]
        trace.append(float(np.linalg.norm(target - rho)) / prob.denom)

    model = MixtureModel(
        degree,
        weights / weights.sum(),
        np.vstack(comp_beta),
        prob.eta.copy(),
    )
    error = distance(rhohat, model_choice(model, prob.space))
    steps_taken = len(trace)
    bound_trace = np.sqrt((8.0 / prob.denom) / (np.arange(steps_taken) + 2.0))
    return FitReport(
        engine="greedy",
        degree=degree,
        error=error,
        model=model,
        trace=np.array(trace),
        steps=steps_taken,
        seed=cfg.seed,
        eta=prob.eta.copy(),
        config=_config_echo(cfg),
        bound_trace=bound_trace,
    )


# ---------------------------------------------------------------------------
# EM engine


def _mixture_probs(prob, beta, eta_rows):
    """(I, M, p) coefficients -> (I, M, L) stacked component rows."""
    n_inits, n_comp, _ = beta.shape
    utilities = beta @ prob.feats_std.T + eta_rows[:, None, :]
    flat = _softmax_rows(utilities.reshape(n_inits * n_comp, -1), prob.space)
    return flat.reshape(n_inits, n_comp, prob.flat_size)


class _EmRun:
    def __init__(self, lam, beta, dist, loglik, sweeps, dist_traces, ll_traces):
        self.lam = lam
        self.beta = beta
        self.dist = dist
        self.loglik = loglik
        self.sweeps = sweeps
        self.dist_traces = dist_traces
        self.ll_traces = ll_traces


def _em_core(prob, target, n_comp, beta, lam, eta_rows, tol, max_sweeps,
             newton_steps, track=False):
    """Batched EM sweeps; one row of the init axis per independent run.

    E-step responsibilities and the weight update are exact; the beta
    update takes damped Newton steps on each component's concave
    weighted logit likelihood, accepting only non-decreasing moves, so
    every sweep is a generalized EM step and the likelihood trace is
    monotone.  A run stops when the Euclidean distance between model and
    target changes by less than ``tol`` between sweeps.
    """
    beta = beta.copy()
    lam = lam.copy()
    n_inits = beta.shape[0]
    support = np.where(target > 0.0)[0]
    w_sup = target[support]
    eye = np.eye(beta.shape[2])

    def support_loglik(probs_sup, vw):
        return (vw * np.log(np.maximum(probs_sup, 1e-300))).sum(axis=2)

    probs = _mixture_probs(prob, beta, eta_rows)
    mix = np.einsum("im,iml->il", lam, probs)
    dist = np.linalg.norm(target[None, :] - mix, axis=1)
    loglik = (w_sup * np.log(np.maximum(mix[:, support], 1e-300))).sum(axis=1)

    sweeps = np.zeros(n_inits, dtype=int)
    dist_traces = [[] for _ in range(n_inits)] if track else None
    ll_traces = [[] for _ in range(n_inits)] if track else None
    active = np.arange(n_inits)

    for _ in range(max_sweeps):
        if active.size == 0:
            break
        a = active
        q_a = probs[a]
        lam_a = lam[a]
        beta_a = beta[a]
        eta_a = eta_rows[a]

        # E-step on the support, then the exact weight update.
        mix_sup = np.einsum("im,ims->is", lam_a, q_a[:, :, support])
        resp = lam_a[:, :, None] * q_a[:, :, support] / np.maximum(
            mix_sup[:, None, :], 1e-300
        )
        vw = resp * w_sup[None, None, :]
        counts = vw.sum(axis=2)
        lam_a = counts / counts.sum(axis=1, keepdims=True)
        frozen = lam_a < WEIGHT_FLOOR

        # Per-menu constants of the weighted logit objective.
        stacked = np.zeros((a.size, n_comp, prob.flat_size))
        stacked[:, :, support] = vw
        menu_w = []
        menu_t = []
        for start, stop, members in prob.layout:
            block = stacked[:, :, start:stop]
            menu_w.append(block.sum(axis=2))
            menu_t.append(block @ prob.feats_std[members])

        qobj = support_loglik(q_a[:, :, support], vw)
        for _ in range(newton_steps):
            grad = np.zeros_like(beta_a)
            hess = np.zeros(beta_a.shape + (beta_a.shape[2],))
            for j, (start, stop, members) in enumerate(prob.layout):
                q_menu = q_a[:, :, start:stop]
                feats_menu = prob.feats_std[members]
                mean_feat = q_menu @ feats_menu
                grad += menu_t[j] - menu_w[j][:, :, None] * mean_feat
                second = np.einsum(
                    "imd,da,db->imab", q_menu, feats_menu, feats_menu
                )
                cov = second - mean_feat[:, :, :, None] * mean_feat[:, :, None, :]
                hess += menu_w[j][:, :, None, None] * cov
            ridge = 1e-9 * np.einsum("imaa->im", hess) / hess.shape[2] + 1e-12
            hess += ridge[:, :, None, None] * eye
            try:
                delta = np.linalg.solve(hess, grad[..., None])[..., 0]
            except np.linalg.LinAlgError:
                delta = grad
            norms = np.linalg.norm(delta, axis=2, keepdims=True)
            delta *= np.minimum(1.0, 20.0 / np.maximum(norms, 1e-300))
            delta[frozen] = 0.0

            # Backtracking: accept each component's step only when its
            # own weighted objective does not decrease.
            tau = np.ones(qobj.shape)
            accepted = np.zeros(qobj.shape, dtype=bool) | frozen
            for _ in range(6):
                if accepted.all():
                    break
                trial = beta_a + tau[:, :, None] * delta
                trial_probs = _mixture_probs(prob, trial, eta_a)
                trial_obj = support_loglik(trial_probs[:, :, support], vw)
                good = (~accepted) & (trial_obj >= qobj - 1e-12)
                beta_a[good] = trial[good]
                qobj[good] = trial_obj[good]
                accepted |= good
                tau[~accepted] *= 0.5
            q_a = _mixture_probs(prob, beta_a, eta_a)

        beta[a] = beta_a
        lam[a] = lam_a
        probs[a] = q_a
        mix_a = np.einsum("im,iml->il", lam_a, q_a)
        new_dist = np.linalg.norm(target[None, :] - mix_a, axis=1)
        loglik[a] = (w_sup * np.log(np.maximum(mix_a[:, support], 1e-300))).sum(axis=1)
        sweeps[a] += 1
        if track:
            for row, i in enumerate(a):
                dist_traces[i].append(float(new_dist[row]))
                ll_traces[i].append(float(loglik[i]))
        settled = np.abs(new_dist - dist[a]) < tol
        dist[a] = new_dist
        active = a[~settled]

    return _EmRun(lam, beta, dist, loglik, sweeps, dist_traces, ll_traces)


def em_fit(rhohat, degree, config=None):
    """Best-of-several-starts EM fit of a logit mixture.

    Runs ``inits`` independent starts (batched), each sweeping until the
    implied distance to the target stalls, and reports the start whose
    final distance-metric error is smallest.
    """
    cfg = config if config is not None else EmConfig()
    prob = _Problem(rhohat.space, degree, cfg.eta)
    n_comp = cfg.mixtures if cfg.mixtures is not None else mixture_bound(prob.space)
    if n_comp < 1 or cfg.inits < 1:
        raise DataError("EM needs at least one component and one init")
    rng = np.random.default_rng(_seed_of(cfg.seed, 1))
    p = prob.feats_std.shape[1]
    # Uniform [0, 1) raw-coordinate draws scaled by feature RMS,
    # expressed in the standardized coordinates the sweeps run in.
    beta0 = rng.random((cfg.inits, n_comp, p)) * (prob.scale / prob.init_scale)
    lam0 = np.full((cfg.inits, n_comp), 1.0 / n_comp)
    eta_rows = np.tile(prob.eta, (cfg.inits, 1))
    run = _em_core(
        prob, rhohat.values, n_comp, beta0, lam0, eta_rows,
        cfg.tol, cfg.max_sweeps, cfg.newton_steps, track=True,
    )
    winner = int(np.argmin(run.dist))
    model = MixtureModel(
        degree,
        run.lam[winner] / run.lam[winner].sum(),
        run.beta[winner] / prob.scale,
        prob.eta.copy(),
    )
    error = distance(rhohat, model_choice(model, prob.space))
    return FitReport(
        engine="em",
        degree=degree,
        error=error,
        model=model,
        trace=np.array(run.dist_traces[winner]) / prob.denom,
        steps=int(run.sweeps[winner]),
        seed=cfg.seed,
        eta=prob.eta.copy(),
        config=_config_echo(cfg),
        likelihood_trace=np.array(run.ll_traces[winner]),
    )


# ---------------------------------------------------------------------------
# fixed-effect grid search


@dataclass
class GridSpec:
    eta_min: float = -10.0
    eta_max: float = 10.0
    eta_step: float = 1.0

    def values(self):
        count = int(round((self.eta_max - self.eta_min) / self.eta_step)) + 1
        if count < 1:
            raise DataError("empty fixed-effect grid")
        return self.eta_min + self.eta_step * np.arange(count)

    def points(self, n_alternatives):
        """All grid combinations with the last fixed effect pinned to 0."""
        axes = [self.values()] * (n_alternatives - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        free = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return np.hstack([free, np.zeros((free.shape[0], 1))])


COARSE_CHUNK = 1536  # grid points per vectorized block; caps peak memory


def _coarse_greedy_block(prob, target, eta_grid, steps, atoms):
    n_grid_pts = eta_grid.shape[0]
    n_all = atoms.shape[0]
    utilities = (atoms @ prob.feats.T)[None, :, :] + eta_grid[:, None, :]
    qa = _softmax_rows(
        utilities.reshape(n_grid_pts * n_all, -1), prob.space
    ).reshape(n_grid_pts, n_all, prob.flat_size)

    diff = qa - target[None, None, :]
    start_err = np.einsum("gal,gal->ga", diff, diff)
    first = np.argmin(start_err, axis=1)
    rows = np.arange(n_grid_pts)
    rho = qa[rows, first].copy()
    rr = start_err[rows, first]
    for step_index in range(2, steps + 1):
        residual = target[None, :] - rho
        shift = qa - rho[:, None, :]
        lin = np.einsum("gal,gl->ga", shift, residual)
        quad = np.einsum("gal,gal->ga", shift, shift)
        alpha, value = _best_grid_alpha(lin, quad, step_index, rr[:, None])
        best = np.argmin(value, axis=1)
        best_value = value[rows, best]
        best_alpha = alpha[rows, best]
        moved = best_value < rr * (1.0 - 1e-12)
        if moved.any():
            m = rows[moved]
            rho[m] += best_alpha[moved, None] * (qa[m, best[moved]] - rho[m])
            rr[m] = np.einsum("gl,gl->g", target[None, :] - rho[m], target[None, :] - rho[m])
    return np.sqrt(np.maximum(rr, 0.0)) / prob.denom


def _coarse_greedy_errors(prob, target, eta_grid, steps, n_atoms, seed):
    """Cheap greedy pass, vectorized over grid points in blocks.

    Same conditional-gradient outer loop as greedy_fit, but the inner
    oracle only scans a fixed dictionary of candidate components, which
    is all the accuracy ranking grid points needs.  Blocking over grid
    points changes nothing (points are independent; the dictionary is
    drawn once).
    """
    rng = np.random.default_rng(_seed_of(seed, 7))
    p = prob.feats.shape[1]
    atoms = _restart_cloud(rng, n_atoms, p)
    atoms = np.vstack([np.zeros(p), atoms])
    return np.concatenate([
        _coarse_greedy_block(prob, target, eta_grid[lo : lo + COARSE_CHUNK], steps, atoms)
        for lo in range(0, eta_grid.shape[0], COARSE_CHUNK)
    ])


def _coarse_em_errors(prob, target, eta_grid, n_comp, sweeps, newton_steps, seed):
    rng = np.random.default_rng(_seed_of(seed, 8))
    n_grid_pts = eta_grid.shape[0]
    p = prob.feats_std.shape[1]
    beta0 = rng.random((n_grid_pts, n_comp, p)) * (prob.scale / prob.init_scale)
    lam0 = np.full((n_grid_pts, n_comp), 1.0 / n_comp)
    dist = [
        _em_core(
            prob, target, n_comp,
            beta0[lo : lo + COARSE_CHUNK], lam0[lo : lo + COARSE_CHUNK],
            eta_grid[lo : lo + COARSE_CHUNK],
            tol=1e-4, max_sweeps=sweeps, newton_steps=newton_steps,
        ).dist
        for lo in range(0, n_grid_pts, COARSE_CHUNK)
    ]
    return np.concatenate(dist) / prob.denom


def _run_engine(args):
    engine, rhohat, degree, cfg = args
    if engine == "greedy":
        return greedy_fit(rhohat, degree, cfg)
    return em_fit(rhohat, degree, cfg)


def fixed_effect_search(rhohat, degree, engine, grid=None, config=None, jobs=1,
                        refine_top=12):
    """Minimize the fit error over a grid of fixed-effect vectors.

    Every grid point gets a cheap engine pass; the most promising
    ``refine_top`` points (plus the all-zero point when the grid
    contains it) are re-run at moderate effort, and the two best of
    those at the full configuration.  The winner is the lowest achieved
    error among all refined runs; its error is always recomputed from
    the returned model, so a cheap stage can only win by genuinely
    fitting better.
    """
    if engine not in ("greedy", "em"):
        raise DataError(f"unknown engine {engine!r}")
    grid = grid if grid is not None else GridSpec()
    space = rhohat.space
    base = _Problem(space, degree)
    points = grid.points(space.n)
    target = rhohat.values

    if engine == "greedy":
        cfg = config if config is not None else GreedyConfig()
        coarse = _coarse_greedy_errors(
            base, target, points, steps=100, n_atoms=63, seed=cfg.seed
        )
    else:
        cfg = config if config is not None else EmConfig()
        n_comp = cfg.mixtures if cfg.mixtures is not None else mixture_bound(space)
        coarse = _coarse_em_errors(
            base, target, points, n_comp, sweeps=50,
            newton_steps=min(cfg.newton_steps, 2), seed=cfg.seed,
        )

    order = np.argsort(coarse, kind="stable")
    shortlist = list(order[: min(refine_top, len(order))])
    zero_rows = np.where(~points.any(axis=1))[0]
    if zero_rows.size and zero_rows[0] not in shortlist:
        shortlist.append(int(zero_rows[0]))

    def stage_config(point_index, full):
        seed = int(_seed_of(cfg.seed, point_index).generate_state(1)[0] % 2**31)
        if engine == "greedy":
            if full:
                return replace(cfg, seed=seed, eta=points[point_index])
            return replace(
                cfg, seed=seed, eta=points[point_index],
                steps=min(cfg.steps, 250), restarts=min(cfg.restarts, 8),
                stop_tol=max(cfg.stop_tol, 1e-4),
            )
        if full:
            return replace(cfg, seed=seed, eta=points[point_index])
        return replace(
            cfg, seed=seed, eta=points[point_index],
            inits=min(cfg.inits, 2), max_sweeps=min(cfg.max_sweeps, 400),
            tol=max(cfg.tol, 1e-5),
        )

    def run_stage(indices, full):
        tasks = [(engine, rhohat, degree, stage_config(i, full)) for i in indices]
        if jobs and jobs > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=jobs) as pool:
                return list(pool.map(_run_engine, tasks))
        return [_run_engine(t) for t in tasks]

    mid_reports = run_stage(shortlist, full=False)
    mid_errors = np.array([r.error for r in mid_reports])
    finalists = [shortlist[i] for i in np.argsort(mid_errors, kind="stable")[:2]]
    final_reports = run_stage(finalists, full=True)

    candidates = list(zip(shortlist, mid_reports)) + list(zip(finalists, final_reports))
    best_index, best = min(candidates, key=lambda pair: pair[1].error)
    best.config["grid"] = {
        "eta_min": grid.eta_min,
        "eta_max": grid.eta_max,
        "eta_step": grid.eta_step,
        "points": int(points.shape[0]),
        "refine_top": int(refine_top),
        "winning_point": int(best_index),
    }
    return best
