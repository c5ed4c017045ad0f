"""MCMC sampler for the static unfolding model.

One sweep updates, in fixed order: the latent triples (systematic scan), the
ideal points (conjugate normal draws), the item parameter pairs (conjugate
truncated-normal / normal scans), and the branch indicators via two
Metropolis-Hastings moves whose acceptance uses the Bernoulli likelihood with
the latent triples integrated out.  An accepted branch move re-imputes that
item's triples from their exact conditional, which makes the pair
(parameter proposal, latent refresh) a valid joint proposal.

Identification: the posterior is invariant under a global sign flip of
(beta, alpha, delta, z); draws are reflected at storage time so the
designated legislator's position is non-negative.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .kernels import RngStream, bvn_cdf, sample_trunc_normal
from .latent import exact_draw, scan_update
from .model import (
    ControlParams,
    DataError,
    Hyperparams,
    VoteMatrix,
    sample_item_prior,
)

__all__ = ["ChainState", "PosteriorSamples", "StaticSampler", "fit_static"]

_SQRT2 = np.sqrt(2.0)


@dataclass
class ChainState:
    """Mutable sampler state: current parameters plus latent triples, the
    latter stored flat over observed cells (row-major)."""

    beta: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    z: np.ndarray
    ystar: np.ndarray
    rho: float | None = None

    def copy(self) -> "ChainState":
        return ChainState(
            self.beta.copy(), self.alpha.copy(), self.delta.copy(),
            self.z.copy(), self.ystar.copy(), self.rho,
        )


@dataclass
class PosteriorSamples:
    """Thinned post-burn-in draws plus run metadata.

    ``beta`` is draws x positions; for static fits positions are legislators
    and ``beta_columns`` holds ``(label, None)`` pairs, for dynamic fits one
    column per served (legislator, term) pair.  Memory for the draw arrays is
    S * (P + 5J) doubles.
    """

    beta: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    z: np.ndarray
    row_labels: list[str]
    col_labels: list[str]
    beta_columns: list[tuple[str, object]]
    hyper: Hyperparams
    control: ControlParams
    rho: np.ndarray | None = None
    terms: list | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def beta_for(self, label: str, term=None) -> np.ndarray:
        key = (label, term)
        for idx, col in enumerate(self.beta_columns):
            if col == key:
                return self.beta[:, idx]
        raise KeyError(f"no stored position for {key}")


def cell_means(beta_cell, alpha, delta, obs_j):
    """Latent-triple outer-coordinate means for the given cells."""
    a1 = alpha[obs_j, 0]
    a2 = alpha[obs_j, 1]
    m1 = -a1 * (beta_cell - delta[obs_j, 0])
    m3 = -a2 * (beta_cell - delta[obs_j, 1])
    return m1, m3


def cell_theta(beta_cell, alpha, delta, obs_j):
    """Yes-probabilities for the given cells."""
    lim1 = alpha[obs_j, 0] * (beta_cell - delta[obs_j, 0]) / _SQRT2
    lim2 = alpha[obs_j, 1] * (beta_cell - delta[obs_j, 1]) / _SQRT2
    return bvn_cdf(lim1, lim2, 0.5)


def item_loglik(theta, yes, obs_j, n_items):
    """Collapsed Bernoulli log-likelihood summed per item."""
    with np.errstate(divide="ignore"):
        ll = np.where(yes, np.log(theta), np.log1p(-theta))
    return np.bincount(obs_j, weights=ll, minlength=n_items)


def beta_obs_contributions(ystar, alpha, delta, obs_j):
    """Per-cell Gaussian evidence about the voter position: the two outer
    latent coordinates are unit-noise regressions on it, giving each cell a
    precision and an information contribution."""
    a1 = alpha[obs_j, 0]
    a2 = alpha[obs_j, 1]
    prec = a1 * a1 + a2 * a2
    info = -a1 * (ystar[:, 0] - a1 * delta[obs_j, 0]) - a2 * (
        ystar[:, 2] - a2 * delta[obs_j, 1]
    )
    return prec, info


def beta_gibbs_draw(ystar, alpha, delta, obs_i, obs_j, n_leg, hyper, rng):
    """Conjugate posterior draw of every voter position given the latents."""
    prec_cell, info_cell = beta_obs_contributions(ystar, alpha, delta, obs_j)
    prec = 1.0 / hyper.beta_var + np.bincount(obs_i, weights=prec_cell, minlength=n_leg)
    info = hyper.beta_mean / hyper.beta_var + np.bincount(
        obs_i, weights=info_cell, minlength=n_leg
    )
    return info / prec + rng.gen.standard_normal(n_leg) / np.sqrt(prec)


def item_gibbs_update(ystar, beta_cell, alpha, delta, z, obs_j, n_items, hyper, rng):
    """Conjugate scan over item parameters, in place.

    Each discrimination component regresses its latent coordinate on the
    (location-centred, sign-flipped) positions under a half-line truncated
    normal prior; each location component then has a conjugate normal draw.
    """
    n_j = np.bincount(obs_j, minlength=n_items).astype(float)
    w2 = hyper.alpha_scale**2
    k2 = hyper.delta_scale**2
    zf = z.astype(float)
    pos = z == 1
    for comp, ycol in ((0, 0), (1, 2)):
        am = hyper.alpha_mean[comp] * zf
        mu = hyper.delta_mean[comp] * zf
        yv = ystar[:, ycol]

        x = -(beta_cell - delta[obs_j, comp])
        sxx = np.bincount(obs_j, weights=x * x, minlength=n_items)
        sxy = np.bincount(obs_j, weights=x * yv, minlength=n_items)
        prec = 1.0 / w2 + sxx
        mean = (am / w2 + sxy) / prec
        # quadrant half-line: component 0 shares the sign of z, component 1 opposes it
        wants_pos = pos if comp == 0 else ~pos
        lo = np.where(wants_pos, 0.0, -np.inf)
        hi = np.where(wants_pos, np.inf, 0.0)
        alpha[:, comp] = sample_trunc_normal(mean, 1.0 / np.sqrt(prec), lo, hi, rng)

        a = alpha[obs_j, comp]
        r = yv + a * beta_cell
        sar = np.bincount(obs_j, weights=a * r, minlength=n_items)
        prec_d = 1.0 / k2 + n_j * alpha[:, comp] ** 2
        mean_d = (mu / k2 + sar) / prec_d
        delta[:, comp] = mean_d + rng.gen.standard_normal(n_items) / np.sqrt(prec_d)


def z_move_update(
    ystar, beta_cell, alpha, delta, z, yes, obs_j, n_items, hyper, flip_rate, rng
):
    """One branch move per item: sign flip or fresh prior draw in the opposite
    quadrant, accepted on the collapsed likelihood ratio (prior and proposal
    terms cancel for both move types).  Accepted items get their latent
    triples re-imputed exactly.  Returns per-move (attempts, acceptances)."""
    ll_cur = item_loglik(cell_theta(beta_cell, alpha, delta, obs_j), yes, obs_j, n_items)

    use_flip = rng.gen.random(n_items) < flip_rate
    z_prop = -z
    alpha_prop, delta_prop = sample_item_prior(hyper, z_prop, rng)
    alpha_prop = np.where(use_flip[:, None], -alpha, alpha_prop)
    delta_prop = np.where(use_flip[:, None], -delta, delta_prop)

    ll_prop = item_loglik(
        cell_theta(beta_cell, alpha_prop, delta_prop, obs_j), yes, obs_j, n_items
    )
    with np.errstate(invalid="ignore"):
        log_ratio = ll_prop - ll_cur
        accept = np.log(rng.gen.random(n_items)) < log_ratio  # NaN compares False

    if np.any(accept):
        alpha[accept] = alpha_prop[accept]
        delta[accept] = delta_prop[accept]
        z[accept] = z_prop[accept]
        cells = accept[obs_j]
        m1, m3 = cell_means(beta_cell[cells], alpha, delta, obs_j[cells])
        ystar[cells] = exact_draw(yes[cells], m1, m3, rng)

    n_flip = int(use_flip.sum())
    return {
        "flip": (n_flip, int((accept & use_flip).sum())),
        "prior": (n_items - n_flip, int((accept & ~use_flip).sum())),
    }


class StaticSampler:
    """Sweep engine bound to one vote matrix."""

    def __init__(self, votes: VoteMatrix, hyper: Hyperparams):
        obs = votes.observed
        if not obs.any(axis=1).all():
            raise DataError("vote matrix has a legislator with no observed votes")
        if not obs.any(axis=0).all():
            raise DataError("vote matrix has an item with no observed votes")
        self.votes = votes
        self.hyper = hyper
        self.n_leg = votes.I
        self.n_items = votes.J
        self.obs_i, self.obs_j = np.nonzero(obs)
        self.yes = votes.yes[self.obs_i, self.obs_j]

    # -- sweep steps ------------------------------------------------------

    def init_state(self, rng: RngStream, frozen_items=None) -> ChainState:
        beta = rng.gen.standard_normal(self.n_leg)
        if frozen_items is None:
            z = np.where(rng.gen.random(self.n_items) < 0.5, 1, -1).astype(np.int8)
            alpha, delta = sample_item_prior(self.hyper, z, rng)
        else:
            alpha, delta, z = _item_arrays(frozen_items)
        m1, m3 = cell_means(beta[self.obs_i], alpha, delta, self.obs_j)
        ystar = exact_draw(self.yes, m1, m3, rng)
        return ChainState(beta, alpha, delta, z, ystar)

    def gibbs_ystar(self, state: ChainState, rng: RngStream):
        m1, m3 = cell_means(
            state.beta[self.obs_i], state.alpha, state.delta, self.obs_j
        )
        scan_update(state.ystar, self.yes, m1, m3, rng)

    def gibbs_beta(self, state: ChainState, rng: RngStream):
        state.beta = beta_gibbs_draw(
            state.ystar, state.alpha, state.delta,
            self.obs_i, self.obs_j, self.n_leg, self.hyper, rng,
        )

    def gibbs_item(self, state: ChainState, rng: RngStream):
        item_gibbs_update(
            state.ystar, state.beta[self.obs_i], state.alpha, state.delta,
            state.z, self.obs_j, self.n_items, self.hyper, rng,
        )

    def mh_z_moves(self, state: ChainState, flip_rate: float, rng: RngStream):
        return z_move_update(
            state.ystar, state.beta[self.obs_i], state.alpha, state.delta, state.z,
            self.yes, self.obs_j, self.n_items, self.hyper, flip_rate, rng,
        )

    def sweep(self, state: ChainState, flip_rate: float, rng: RngStream, frozen=False):
        self.gibbs_ystar(state, rng)
        self.gibbs_beta(state, rng)
        if not frozen:
            self.gibbs_item(state, rng)
            return self.mh_z_moves(state, flip_rate, rng)
        return None

    def collapsed_loglik(self, state: ChainState) -> float:
        theta = cell_theta(state.beta[self.obs_i], state.alpha, state.delta, self.obs_j)
        with np.errstate(divide="ignore"):
            ll = np.where(self.yes, np.log(theta), np.log1p(-theta))
        return float(ll.sum())


def _item_arrays(items):
    """(alpha, delta, z) arrays from a list of ItemParams or an array triple."""
    if isinstance(items, tuple) and len(items) == 3:
        alpha, delta, z = items
        return (
            np.array(alpha, dtype=float),
            np.array(delta, dtype=float),
            np.array(z, dtype=np.int8),
        )
    alpha = np.array([it.alpha for it in items], dtype=float)
    delta = np.array([it.delta for it in items], dtype=float)
    z = np.array([it.z for it in items], dtype=np.int8)
    return alpha, delta, z


def _accumulate(counters, update):
    for key, (att, acc) in update.items():
        a, c = counters.get(key, (0, 0))
        counters[key] = (a + att, c + acc)


def _acceptance_rates(counters):
    return {
        key: (acc / att if att else float("nan"))
        for key, (att, acc) in counters.items()
    }


def fit_static(
    votes: VoteMatrix,
    hyper: Hyperparams,
    control: ControlParams,
    pos_leg: int | None,
    *,
    frozen_items=None,
    stream_id: int = 0,
) -> PosteriorSamples:
    """Run the full static sampler and return thinned stored draws.

    ``pos_leg`` names the legislator whose position pins the sign of the
    latent scale; each stored draw is reflected when that position is
    negative.  ``frozen_items`` (debugging aid) fixes the item parameters,
    skipping item and branch updates; reflection is skipped too since frozen
    items break the flip symmetry.
    """
    frozen = frozen_items is not None
    if not frozen:
        if pos_leg is None:
            raise ValueError("pos_leg is required")
        if not 0 <= pos_leg < votes.I:
            raise ValueError(f"pos_leg {pos_leg} out of range for {votes.I} legislators")

    sampler = StaticSampler(votes, hyper)
    rng = RngStream(control.seed, stream_id)
    state = sampler.init_state(rng, frozen_items=frozen_items)

    n_stored = control.n_stored
    S, I, J = n_stored, votes.I, votes.J
    out_beta = np.empty((S, I))
    out_alpha = np.empty((S, J, 2))
    out_delta = np.empty((S, J, 2))
    out_z = np.empty((S, J), dtype=np.int8)

    counters: dict = {}
    t0 = time.perf_counter()
    stored = 0
    report_every = max(1, control.num_iter // 20)
    for it in range(1, control.num_iter + 1):
        moves = sampler.sweep(state, control.flip_rate, rng, frozen=frozen)
        if moves:
            _accumulate(counters, moves)
        if it > control.burn_in and (it - control.burn_in) % control.keep_iter == 0:
            flip = (not frozen) and state.beta[pos_leg] < 0.0
            sign = -1.0 if flip else 1.0
            out_beta[stored] = sign * state.beta
            out_alpha[stored] = sign * state.alpha
            out_delta[stored] = sign * state.delta
            out_z[stored] = (int(sign) * state.z).astype(np.int8)
            stored += 1
        if control.verbose and it % report_every == 0:
            print(f"sweep {it}/{control.num_iter} ({stored} stored)", file=sys.stderr)

    assert stored == n_stored
    return PosteriorSamples(
        beta=out_beta,
        alpha=out_alpha,
        delta=out_delta,
        z=out_z,
        row_labels=list(votes.row_labels),
        col_labels=list(votes.col_labels),
        beta_columns=[(lab, None) for lab in votes.row_labels],
        hyper=hyper,
        control=control,
        meta={
            "model": "static",
            "pos_leg": pos_leg,
            "acceptance": _acceptance_rates(counters),
            "wall_time_s": time.perf_counter() - t0,
            "frozen_items": frozen,
        },
    )
