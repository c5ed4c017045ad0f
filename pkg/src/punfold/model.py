"""Model data types, the unfolding response probability, priors, and a
ground-truth synthetic vote generator.

The response model: a voter at position ``beta`` faces an item offering one
"Yes" position flanked by two "No" positions.  Choice utilities are quadratic
losses plus independent standard Gaussian shocks, which makes the probability
of "Yes" a bivariate normal orthant probability with correlation 1/2 and
standardized limits ``alpha_c * (beta - delta_c) / sqrt(2)``.  Discrimination
pairs live in one of two sign quadrants, tracked by the branch indicator
``z``; flipping ``(alpha, delta, z)`` and ``beta`` together leaves every
probability unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import RngStream, bvn_cdf, trunc_normal_logpdf

__all__ = [
    "YES",
    "NO",
    "MISSING",
    "VoteMatrix",
    "ItemParams",
    "SyntheticTruth",
    "Hyperparams",
    "ControlParams",
    "theta_prob",
    "theta_prob_matrix",
    "log_item_prior",
    "log_beta_prior_static",
    "log_ar1_transition",
    "simulate_votes",
    "simulate_latents",
    "sample_item_prior",
]

YES = np.int8(1)
NO = np.int8(0)
MISSING = np.int8(-1)

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class DataError(ValueError):
    """Raised for malformed or inconsistent vote data."""


@dataclass
class VoteMatrix:
    """Legislators x items outcomes over {Yes, No, Missing}.

    ``outcomes`` holds int8 codes (1 yes, 0 no, -1 missing); ``time_index``,
    when present, assigns each item a sortable term identifier and enables the
    dynamic model; ``meta`` carries optional per-legislator attribute columns
    (party, state, ...), each a list aligned with ``row_labels``.
    """

    outcomes: np.ndarray
    row_labels: list[str]
    col_labels: list[str]
    time_index: list | None = None
    meta: dict[str, list] | None = None

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=np.int8)
        if self.outcomes.ndim != 2:
            raise DataError("outcomes must be a 2-D matrix")
        n_rows, n_cols = self.outcomes.shape
        if n_rows < 1 or n_cols < 1:
            raise DataError("vote matrix must be non-empty")
        if len(self.row_labels) != n_rows or len(self.col_labels) != n_cols:
            raise DataError("label lengths do not match matrix shape")
        if len(set(self.row_labels)) != n_rows:
            raise DataError("duplicate legislator labels")
        if len(set(self.col_labels)) != n_cols:
            raise DataError("duplicate item labels")
        bad = ~np.isin(self.outcomes, (YES, NO, MISSING))
        if bad.any():
            raise DataError("outcomes must be coded 1 (yes), 0 (no) or -1 (missing)")
        if self.time_index is not None:
            if len(self.time_index) != n_cols:
                raise DataError("time_index length must equal item count")
            try:
                sorted(set(self.time_index))
            except TypeError as exc:
                raise DataError("time_index terms must be mutually sortable") from exc
        if self.meta is not None:
            for key, col in self.meta.items():
                if len(col) != n_rows:
                    raise DataError(f"meta column {key!r} has wrong length")

    @property
    def I(self) -> int:  # noqa: E743 - domain convention
        return self.outcomes.shape[0]

    @property
    def J(self) -> int:
        return self.outcomes.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.outcomes != MISSING

    @property
    def yes(self) -> np.ndarray:
        return self.outcomes == YES

    def subset(self, rows=None, cols=None) -> "VoteMatrix":
        rows = np.arange(self.I) if rows is None else np.asarray(rows)
        cols = np.arange(self.J) if cols is None else np.asarray(cols)
        meta = None
        if self.meta is not None:
            meta = {k: [v[i] for i in rows] for k, v in self.meta.items()}
        ti = None
        if self.time_index is not None:
            ti = [self.time_index[j] for j in cols]
        return VoteMatrix(
            self.outcomes[np.ix_(rows, cols)],
            [self.row_labels[i] for i in rows],
            [self.col_labels[j] for j in cols],
            time_index=ti,
            meta=meta,
        )


@dataclass(frozen=True)
class ItemParams:
    """Discrimination pair, location pair and sign-quadrant indicator."""

    alpha: tuple[float, float]
    delta: tuple[float, float]
    z: int

    def __post_init__(self):
        a1, a2 = self.alpha
        if self.z == 1:
            ok = a1 > 0.0 and a2 < 0.0
        elif self.z == -1:
            ok = a1 < 0.0 and a2 > 0.0
        else:
            raise ValueError("z must be +1 or -1")
        if not ok:
            raise ValueError(
                f"alpha {self.alpha} violates the quadrant required by z={self.z}"
            )


@dataclass
class SyntheticTruth:
    """Ground truth for the generator: ideal points plus item position triples.

    ``psi[j]`` gives the two "No" positions flanking the "Yes" position; the
    middle entry must lie strictly between the outer two (either orientation).
    """

    beta_true: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        self.beta_true = np.asarray(self.beta_true, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        if self.psi.ndim != 2 or self.psi.shape[1] != 3:
            raise ValueError("psi must be a J x 3 array")
        p1, p2, p3 = self.psi.T
        ascending = (p1 < p2) & (p2 < p3)
        descending = (p3 < p2) & (p2 < p1)
        if not np.all(ascending | descending):
            raise ValueError("each psi row needs its middle entry strictly between the outer two")

    def item_arrays(self):
        """Induced (alpha, delta, z) arrays."""
        p1, p2, p3 = self.psi.T
        alpha = np.stack([2.0 * (p2 - p1), 2.0 * (p2 - p3)], axis=1)
        delta = np.stack([(p1 + p2) / 2.0, (p3 + p2) / 2.0], axis=1)
        z = np.where(alpha[:, 0] > 0.0, 1, -1).astype(np.int8)
        return alpha, delta, z

    def item_params(self) -> list[ItemParams]:
        alpha, delta, z = self.item_arrays()
        return [
            ItemParams((alpha[j, 0], alpha[j, 1]), (delta[j, 0], delta[j, 1]), int(z[j]))
            for j in range(len(z))
        ]


@dataclass(frozen=True)
class Hyperparams:
    """Prior constants.  Defaults give a prior predictive that concentrates
    vote probabilities near 0 and 1, with a tilt toward 1."""

    beta_mean: float = 0.0
    beta_var: float = 1.0
    alpha_mean: tuple[float, float] = (0.0, 0.0)
    alpha_scale: float = 5.0
    delta_mean: tuple[float, float] = (-2.0, 10.0)
    delta_scale: float = math.sqrt(10.0)
    rho_mean: float = 0.9
    rho_sigma: float = 0.04

    def __post_init__(self):
        if self.beta_var <= 0 or self.alpha_scale <= 0 or self.delta_scale <= 0:
            raise ValueError("beta_var, alpha_scale and delta_scale must be positive")
        if self.rho_sigma <= 0:
            raise ValueError("rho_sigma must be positive")
        if not 0.0 < self.rho_mean < 1.0:
            raise ValueError("rho_mean must lie in (0, 1)")


@dataclass(frozen=True)
class ControlParams:
    """Run controls for the samplers."""

    num_iter: int
    burn_in: int
    keep_iter: int = 1
    flip_rate: float = 0.1
    sd_prop_rho: float = 0.1
    seed: int = 0
    verbose: bool = False

    def __post_init__(self):
        if min(self.num_iter, self.keep_iter) < 1 or self.burn_in < 0:
            raise ValueError("num_iter and keep_iter must be positive, burn_in non-negative")
        if self.burn_in >= self.num_iter:
            raise ValueError("burn_in must be smaller than num_iter")
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ValueError("flip_rate must lie in [0, 1]")
        if self.sd_prop_rho <= 0:
            raise ValueError("sd_prop_rho must be positive")

    @property
    def n_stored(self) -> int:
        return (self.num_iter - self.burn_in) // self.keep_iter


def theta_prob(beta: float, item: ItemParams) -> float:
    """Probability of a Yes vote at ideal point ``beta``."""
    a1, a2 = item.alpha
    d1, d2 = item.delta
    lim1 = a1 * (beta - d1) / _SQRT2
    lim2 = a2 * (beta - d2) / _SQRT2
    return float(bvn_cdf(lim1, lim2, 0.5))


def theta_prob_matrix(beta, alpha, delta):
    """Yes-probabilities for every (voter, item) pair.

    ``beta`` is either a length-I vector or a per-cell I x J matrix (the
    dynamic model evaluates each item at the voter's position in the item's
    term); ``alpha``/``delta`` are J x 2.
    """
    beta = np.asarray(beta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    delta = np.asarray(delta, dtype=float)
    b = beta[:, None] if beta.ndim == 1 else beta
    lim1 = alpha[None, :, 0] * (b - delta[None, :, 0]) / _SQRT2
    lim2 = alpha[None, :, 1] * (b - delta[None, :, 1]) / _SQRT2
    return bvn_cdf(lim1, lim2, 0.5)


def _normal_logpdf(x, mean, sd):
    z = (np.asarray(x, dtype=float) - mean) / sd
    return -0.5 * z * z - np.log(sd) - _LOG_SQRT_2PI


def log_item_prior(item: ItemParams, hyper: Hyperparams) -> float:
    """Log density of (alpha, delta) given the branch indicator z.

    Mirror symmetry: the z=-1 branch is the z=+1 branch evaluated at the
    negated parameters, so the value is computed on the canonical quadrant.
    """
    a = item.z * np.asarray(item.alpha, dtype=float)
    d = item.z * np.asarray(item.delta, dtype=float)
    if not (a[0] > 0.0 and a[1] < 0.0):
        return -np.inf
    am = np.asarray(hyper.alpha_mean, dtype=float)
    mu = np.asarray(hyper.delta_mean, dtype=float)
    lp = trunc_normal_logpdf(a[0], am[0], hyper.alpha_scale, 0.0, np.inf)
    lp += trunc_normal_logpdf(a[1], am[1], hyper.alpha_scale, -np.inf, 0.0)
    lp += _normal_logpdf(d[0], mu[0], hyper.delta_scale)
    lp += _normal_logpdf(d[1], mu[1], hyper.delta_scale)
    return float(lp)


def log_beta_prior_static(beta, hyper: Hyperparams):
    out = _normal_logpdf(beta, hyper.beta_mean, math.sqrt(hyper.beta_var))
    return float(out) if np.ndim(beta) == 0 else out


def log_ar1_transition(beta_t, beta_prev, rho: float, gap: int = 1):
    """Log density of one (possibly bridged) step of the stationary AR(1)."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    decay = rho**gap
    var = 1.0 - decay * decay
    out = _normal_logpdf(beta_t, decay * np.asarray(beta_prev, dtype=float), math.sqrt(var))
    return float(out) if np.ndim(beta_t) == 0 else out


def simulate_votes(truth: SyntheticTruth, rng: RngStream, time_index=None) -> VoteMatrix:
    """Draw one vote matrix from the generative model.

    Each voter compares the three shocked quadratic utilities and votes Yes
    exactly when the middle option is the strict maximum.  For dynamic truths
    (``beta_true`` of shape I x T) a per-item ``time_index`` with integer term
    positions 0..T-1 selects the column of the path.
    """
    J = truth.psi.shape[0]
    if truth.beta_true.ndim == 1:
        b_cell = np.broadcast_to(truth.beta_true[:, None], (len(truth.beta_true), J))
    else:
        if time_index is None:
            raise ValueError("dynamic truth requires a time_index")
        ti = np.asarray(time_index)
        b_cell = truth.beta_true[:, ti]
    n_rows = b_cell.shape[0]
    dist = b_cell[..., None] - truth.psi[None, :, :]  # (I, J, 3)
    util = -(dist**2) + rng.gen.standard_normal(dist.shape)
    yes = (util[..., 1] > util[..., 0]) & (util[..., 1] > util[..., 2])
    outcomes = np.where(yes, YES, NO).astype(np.int8)
    return VoteMatrix(
        outcomes,
        [f"L{i:04d}" for i in range(n_rows)],
        [f"V{j:04d}" for j in range(J)],
        time_index=list(time_index) if time_index is not None else None,
    )


def simulate_latents(beta_cell, alpha, delta, rng: RngStream):
    """Joint draw of latent utility triples and implied outcomes given
    item parameters (used for posterior-checking and synthetic recovery;
    equivalent in law to the psi-based generator when the parameters are the
    induced ones)."""
    beta_cell = np.asarray(beta_cell, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    delta = np.asarray(delta, dtype=float)
    shape = beta_cell.shape
    e = rng.gen.standard_normal(shape + (3,))
    ystar = np.empty(shape + (3,))
    ystar[..., 0] = -alpha[None, :, 0] * (beta_cell - delta[None, :, 0]) + e[..., 0]
    ystar[..., 1] = e[..., 1]
    ystar[..., 2] = -alpha[None, :, 1] * (beta_cell - delta[None, :, 1]) + e[..., 2]
    yes = (ystar[..., 1] > ystar[..., 0]) & (ystar[..., 1] > ystar[..., 2])
    outcomes = np.where(yes, YES, NO).astype(np.int8)
    return ystar, outcomes


def sample_item_prior(hyper: Hyperparams, z, rng: RngStream):
    """Draw (alpha, delta) from the prior given branch indicators ``z``.

    Draws are taken on the canonical z=+1 quadrant and mirrored, which
    realizes the two-component mixture exactly.
    """
    from .kernels import sample_trunc_normal

    z = np.asarray(z)
    n = z.shape[0]
    am = hyper.alpha_mean
    mu = hyper.delta_mean
    a1 = sample_trunc_normal(am[0], hyper.alpha_scale, 0.0, np.inf, rng, size=n)
    a2 = sample_trunc_normal(am[1], hyper.alpha_scale, -np.inf, 0.0, rng, size=n)
    d = rng.gen.standard_normal((n, 2)) * hyper.delta_scale + np.asarray(mu)
    alpha = np.stack([a1, a2], axis=1) * z[:, None]
    delta = d * z[:, None]
    return alpha, delta
