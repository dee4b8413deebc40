"""Six-move Gibbs sampler with constrained-HMC block updates.

Each iteration updates, in order: the latent stick-breaking coordinates
(one constrained-HMC step per pixel), the endmember rows (one step per
spectral band), the per-pixel nonlinearity parameters (exact
Bernoulli-Gaussian draws), the per-band noise variances (inverse gamma),
the nonlinearity variance hyperparameter (inverse gamma) and the
nonlinear-pixel weight (beta).

Randomness is drawn from counter-based streams keyed on (seed, iteration,
block), with per-pixel variates generated as arrays in fixed index order
before any parallel work starts, so chains replay bit-for-bit regardless
of scheduling or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .chmc import BOUNDARY_NUDGE, ChmcAdaptState, ChmcConfig, adapt_stepsize
from .model import (
    AbundanceMatrix,
    EndmemberMatrix,
    LatentCoefficients,
    ModelState,
    NoiseVariances,
    NonlinearityVector,
    SpectralImage,
    ppnmm_image,
    stick_breaking_forward,
    stick_breaking_inverse,
)

__all__ = [
    "PriorConfig",
    "SamplerConfig",
    "Chain",
    "UnmixResult",
    "sample_latent",
    "sample_endmembers",
    "sample_nonlinearity",
    "sample_noise_variances",
    "sample_nonlinearity_variance",
    "sample_nonlinearity_weight",
    "initial_state",
    "run",
    "mmse_estimate",
    "check_chain_invariants",
]

# Scale floor for the noise-variance draw; keeps the zero-residual case proper.
SIGMA2_SCALE_FLOOR = 1e-12
# Floor for the least-squares noise-variance initialization.
SIGMA2_INIT_FLOOR = 1e-8

_BLOCK_Z, _BLOCK_M, _BLOCK_B, _BLOCK_SIGMA2, _BLOCK_SIGMA_B2, _BLOCK_W = range(6)


@dataclass
class PriorConfig:
    """Endmember and hyperparameter priors.

    mbar holds the L x R prior means for the endmember rows (typically the
    output of the purest-pixel initializer); s2 is the shared prior variance,
    large by default so the data dominate.  (gamma, nu) parameterize the
    inverse-gamma prior of the nonlinearity variance.
    """

    s2: float = 50.0
    gamma: float = 0.1
    nu: float = 0.1
    mbar: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.s2 <= 0.0 or self.gamma <= 0.0 or self.nu <= 0.0:
            raise ValueError("s2, gamma and nu must be positive")
        if self.mbar is not None:
            self.mbar = np.asarray(self.mbar, dtype=float)
            if self.mbar.ndim != 2:
                raise ValueError("mbar must be an L x R matrix")
            if np.any(self.mbar < 0.0) or np.any(self.mbar > 1.0):
                raise ValueError("mbar entries must lie in [0, 1]")


@dataclass
class SamplerConfig:
    """Chain length, seeding, and per-block constrained-HMC settings."""

    n_mc: int = 5000
    n_burn: int = 2000
    thin: int = 5
    seed: int = 0
    chmc_z: ChmcConfig = field(default_factory=lambda: ChmcConfig(epsilon=0.01))
    chmc_m: ChmcConfig = field(default_factory=lambda: ChmcConfig(epsilon=0.005))
    priors: PriorConfig = field(default_factory=PriorConfig)
    chmc_repeats: int = 1

    def __post_init__(self):
        if not (0 <= self.n_burn < self.n_mc):
            raise ValueError("need 0 <= n_burn < n_mc")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.chmc_repeats < 1:
            raise ValueError("chmc_repeats must be >= 1")

    @property
    def n_kept(self):
        return (self.n_mc - self.n_burn) // self.thin


@dataclass
class Chain:
    """Kept post-burn-in samples plus per-iteration sampler diagnostics."""

    z: np.ndarray             # (K, R-1, N)
    m: np.ndarray             # (K, L, R)
    b: np.ndarray             # (K, N)
    sigma2: np.ndarray        # (K, L)
    sigma_b2: np.ndarray      # (K,)
    w: np.ndarray             # (K,)
    accept_z: np.ndarray      # (n_mc,) mean acceptance over pixels
    accept_m: np.ndarray      # (n_mc,) mean acceptance over rows
    diverged_z: np.ndarray    # (n_mc,) diverged-trajectory counts
    diverged_m: np.ndarray
    eps_z: np.ndarray         # (n_mc,) step size used at each iteration
    eps_m: np.ndarray
    adapt_events: list        # (iteration, block name, old eps, new eps)
    n_burn: int
    thin: int
    seed: int

    @property
    def n_kept(self):
        return self.z.shape[0]


@dataclass
class UnmixResult:
    """Posterior-mean estimates with the per-pixel nonlinearity probability."""

    a_hat: AbundanceMatrix
    m_hat: EndmemberMatrix
    b_hat: np.ndarray
    b_nonzero_prob: np.ndarray
    sigma2_hat: NoiseVariances
    sigma_b2_hat: float
    w_hat: float

    def __post_init__(self):
        sums = self.a_hat.data.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise ValueError("averaged abundances left the simplex")


def _block_rng(seed, iteration, block):
    """Counter-based stream for one (iteration, block) pair."""
    key = np.array(
        [np.uint64(seed), np.uint64((int(iteration) << 3) | block)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Block moves
# ---------------------------------------------------------------------------

def sample_latent(z, y, m, b, sigma2, cfg, rng, epsilon=None, yt=None):
    """One constrained-HMC step per pixel on the latent coordinates.

    z is (R-1, N); pixels are updated independently given (M, b, sigma2).
    Returns (z_next, accepted, diverged) with per-pixel boolean flags.
    """
    z = np.asarray(z, dtype=float)
    rm1, n = z.shape
    eps = cfg.epsilon if epsilon is None else float(epsilon)
    p0 = rng.standard_normal((n, rm1))
    nlf = rng.integers(cfg.nlf_min, cfg.nlf_max + 1, size=n)
    u = rng.random(n)
    zt = np.ascontiguousarray(z.T)
    if yt is None:
        yt = np.ascontiguousarray(np.asarray(y, dtype=float).T)
    inv_sig2 = 1.0 / np.asarray(sigma2, dtype=float)
    out_zt = np.empty_like(zt)
    dh = np.empty(n)
    div = np.empty(n, dtype=np.bool_)
    kernels.latent_block(
        zt, yt, np.ascontiguousarray(m, dtype=float), np.asarray(b, dtype=float),
        inv_sig2, eps, nlf, p0, out_zt, dh, div,
    )
    accepted = np.log(u) < -dh
    z_next = np.where(accepted[None, :], out_zt.T, z)
    return z_next, accepted, div


def sample_endmembers(m, y, a, b, sigma2, s2, mbar, cfg, rng, epsilon=None):
    """One constrained-HMC step per endmember row (spectral band).

    Rows are updated independently given (A, b, sigma2); each row sees its
    own band of the image, its own noise variance and its own prior mean.
    Returns (m_next, accepted, diverged) with per-row boolean flags.
    """
    m = np.asarray(m, dtype=float)
    n_bands, r = m.shape
    eps = cfg.epsilon if epsilon is None else float(epsilon)
    p0 = rng.standard_normal((n_bands, r))
    nlf = rng.integers(cfg.nlf_min, cfg.nlf_max + 1, size=n_bands)
    u = rng.random(n_bands)
    at = np.ascontiguousarray(np.asarray(a, dtype=float).T)
    out_m = np.empty_like(m)
    dh = np.empty(n_bands)
    div = np.empty(n_bands, dtype=np.bool_)
    kernels.endmember_block(
        np.ascontiguousarray(m), np.ascontiguousarray(y, dtype=float), at,
        np.asarray(b, dtype=float), np.asarray(sigma2, dtype=float), float(s2),
        np.ascontiguousarray(mbar, dtype=float), eps, nlf, p0, out_m, dh, div,
    )
    accepted = np.log(u) < -dh
    m_next = np.where(accepted[:, None], out_m, m)
    return m_next, accepted, div


def sample_nonlinearity(y, m, a, sigma2, sigma_b2, w, rng):
    """Exact Bernoulli-Gaussian draw of the nonlinearity parameters.

    For each pixel the conditional is (1 - w*) delta_0 + w* N(mu, s^2) with

        mu  = sigma_b2 * (y - M a)^T Sigma^-1 h / (sigma_b2 h^T Sigma^-1 h + 1)
        s^2 = sigma_b2 / (sigma_b2 h^T Sigma^-1 h + 1)
        w*  = w / (w + (1 - w) * beta),  beta = (sigma_b / s) exp(-mu^2 / (2 s^2))

    where h = (M a) o (M a).  beta < 1 exactly when the data favor the slab.
    """
    if sigma_b2 <= 0.0:
        raise ValueError("sigma_b2 must be positive")
    y = np.asarray(y, dtype=float)
    s = np.asarray(m, dtype=float) @ np.asarray(a, dtype=float)
    h = s * s
    inv_sig2 = 1.0 / np.asarray(sigma2, dtype=float)[:, None]
    quad = np.sum(h * h * inv_sig2, axis=0)
    cross = np.sum((y - s) * h * inv_sig2, axis=0)
    denom = sigma_b2 * quad + 1.0
    s2_post = sigma_b2 / denom
    mu = sigma_b2 * cross / denom
    log_beta = 0.5 * np.log(denom) - 0.5 * mu * mu / s2_post
    beta = np.exp(np.minimum(log_beta, 700.0))
    w_star = w / (w + (1.0 - w) * beta)
    n = y.shape[1]
    nonzero = rng.random(n) < w_star
    draws = mu + np.sqrt(s2_post) * rng.standard_normal(n)
    return np.where(nonzero, draws, 0.0)


def sample_noise_variances(y, x, rng):
    """Per-band inverse-gamma draw: IG(N/2, ||y_l - x_l||^2 / 2 + floor)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    resid = y - x
    scale = 0.5 * np.sum(resid * resid, axis=1) + SIGMA2_SCALE_FLOOR
    n = y.shape[1]
    return scale / rng.standard_gamma(0.5 * n, size=y.shape[0])


def sample_nonlinearity_variance(b, gamma, nu, rng):
    """IG(k/2 + gamma, sum of squared nonzero b / 2 + nu), k = #nonzero."""
    b = np.asarray(b, dtype=float)
    nz = b[b != 0.0]
    shape = 0.5 * nz.size + gamma
    scale = 0.5 * float(np.sum(nz * nz)) + nu
    return float(scale / rng.standard_gamma(shape))


def sample_nonlinearity_weight(b, rng):
    """Beta(k + 1, N - k + 1) draw with k the number of nonlinear pixels."""
    b = np.asarray(b, dtype=float)
    k = int(np.count_nonzero(b))
    return float(rng.beta(k + 1, b.size - k + 1))


# ---------------------------------------------------------------------------
# Chain driver
# ---------------------------------------------------------------------------

def initial_state(y, r, priors):
    """Deterministic starting point inside all constraints.

    Endmembers start at the prior means (nudged strictly inside the box),
    abundances start uniform, nonlinearities start at zero, and the noise
    variances start at the per-band residual variance of an unconstrained
    linear least-squares fit, floored away from zero.
    """
    n_bands, n_pix = y.shape
    mbar = priors.mbar
    m0 = np.clip(mbar, BOUNDARY_NUDGE, 1.0 - BOUNDARY_NUDGE)
    z_col = stick_breaking_inverse(np.full(r, 1.0 / r))
    z0 = np.tile(z_col[:, None], (1, n_pix))
    b0 = np.zeros(n_pix)
    coef, *_ = np.linalg.lstsq(m0, y, rcond=None)
    resid = y - m0 @ coef
    sigma2_0 = np.maximum(np.mean(resid * resid, axis=1), SIGMA2_INIT_FLOOR)
    sigma_b2_0 = priors.nu / priors.gamma
    return z0, m0, b0, sigma2_0, sigma_b2_0, 0.5


def run(y, r, cfg):
    """Run the full sampler on an image and return the stored chain.

    y may be a SpectralImage or a bands-by-pixels array; r is the number of
    endmembers; cfg.priors.mbar must hold the L x R endmember prior means.
    """
    img = y if isinstance(y, SpectralImage) else SpectralImage(np.asarray(y, dtype=float))
    data = img.data
    n_bands, n_pix = data.shape
    if not (2 <= r <= n_bands):
        raise ValueError(f"need 2 <= R <= L, got R={r}, L={n_bands}")
    if cfg.priors.mbar is None:
        raise ValueError("cfg.priors.mbar is required (see init_endmember_prior)")
    if cfg.priors.mbar.shape != (n_bands, r):
        raise ValueError(
            f"mbar shape {cfg.priors.mbar.shape} does not match (L, R)=({n_bands}, {r})"
        )
    n_kept = cfg.n_kept
    if n_kept < 1:
        raise ValueError("config keeps no samples: increase n_mc or reduce thin")

    z, m, b, sigma2, sigma_b2, w = initial_state(data, r, cfg.priors)
    mbar = np.ascontiguousarray(cfg.priors.mbar, dtype=float)
    yt = np.ascontiguousarray(data.T)

    keep_z = np.empty((n_kept, r - 1, n_pix))
    keep_m = np.empty((n_kept, n_bands, r))
    keep_b = np.empty((n_kept, n_pix))
    keep_s2 = np.empty((n_kept, n_bands))
    keep_sb2 = np.empty(n_kept)
    keep_w = np.empty(n_kept)
    accept_z = np.empty(cfg.n_mc)
    accept_m = np.empty(cfg.n_mc)
    diverged_z = np.zeros(cfg.n_mc, dtype=np.int64)
    diverged_m = np.zeros(cfg.n_mc, dtype=np.int64)
    eps_z_log = np.empty(cfg.n_mc)
    eps_m_log = np.empty(cfg.n_mc)

    adapt_z = ChmcAdaptState(epsilon_current=cfg.chmc_z.epsilon)
    adapt_m = ChmcAdaptState(epsilon_current=cfg.chmc_m.epsilon)
    kept = 0
    for t in range(1, cfg.n_mc + 1):
        if t == cfg.n_burn + 1:
            adapt_z.in_burn_in = False
            adapt_m.in_burn_in = False

        eps_z_log[t - 1] = adapt_z.epsilon_current
        rng = _block_rng(cfg.seed, t, _BLOCK_Z)
        rates = 0.0
        for _ in range(cfg.chmc_repeats):
            z, acc, div = sample_latent(
                z, data, m, b, sigma2, cfg.chmc_z, rng,
                epsilon=adapt_z.epsilon_current, yt=yt,
            )
            rates += float(np.mean(acc))
            diverged_z[t - 1] += int(np.sum(div))
        accept_z[t - 1] = rates / cfg.chmc_repeats
        adapt_z.record(accept_z[t - 1])
        adapt_stepsize(adapt_z, cfg.chmc_z, iteration=t)

        a = stick_breaking_forward(z)

        eps_m_log[t - 1] = adapt_m.epsilon_current
        rng = _block_rng(cfg.seed, t, _BLOCK_M)
        rates = 0.0
        for _ in range(cfg.chmc_repeats):
            m, acc, div = sample_endmembers(
                m, data, a, b, sigma2, cfg.priors.s2, mbar, cfg.chmc_m, rng,
                epsilon=adapt_m.epsilon_current,
            )
            rates += float(np.mean(acc))
            diverged_m[t - 1] += int(np.sum(div))
        accept_m[t - 1] = rates / cfg.chmc_repeats
        adapt_m.record(accept_m[t - 1])
        adapt_stepsize(adapt_m, cfg.chmc_m, iteration=t)

        rng = _block_rng(cfg.seed, t, _BLOCK_B)
        b = sample_nonlinearity(data, m, a, sigma2, sigma_b2, w, rng)

        rng = _block_rng(cfg.seed, t, _BLOCK_SIGMA2)
        x = ppnmm_image(m, a, b)
        sigma2 = sample_noise_variances(data, x, rng)

        rng = _block_rng(cfg.seed, t, _BLOCK_SIGMA_B2)
        sigma_b2 = sample_nonlinearity_variance(b, cfg.priors.gamma, cfg.priors.nu, rng)

        rng = _block_rng(cfg.seed, t, _BLOCK_W)
        w = sample_nonlinearity_weight(b, rng)

        if t > cfg.n_burn and (t - cfg.n_burn) % cfg.thin == 0 and kept < n_kept:
            keep_z[kept] = z
            keep_m[kept] = m
            keep_b[kept] = b
            keep_s2[kept] = sigma2
            keep_sb2[kept] = sigma_b2
            keep_w[kept] = w
            kept += 1

    events = [(it, "z", old, new) for it, old, new in adapt_z.events]
    events += [(it, "m", old, new) for it, old, new in adapt_m.events]
    events.sort()
    return Chain(
        z=keep_z[:kept], m=keep_m[:kept], b=keep_b[:kept], sigma2=keep_s2[:kept],
        sigma_b2=keep_sb2[:kept], w=keep_w[:kept],
        accept_z=accept_z, accept_m=accept_m,
        diverged_z=diverged_z, diverged_m=diverged_m,
        eps_z=eps_z_log, eps_m=eps_m_log, adapt_events=events,
        n_burn=cfg.n_burn, thin=cfg.thin, seed=cfg.seed,
    )


def mmse_estimate(chain):
    """Posterior means of the kept samples.

    Latent samples are pushed through the stick-breaking map first and
    averaged in abundance space, so the estimate stays on the simplex.
    The nonlinearity probability is the fraction of kept samples in which
    a pixel's parameter is nonzero.
    """
    if chain.n_kept < 1:
        raise ValueError("chain holds no kept samples")
    a_sum = np.zeros((chain.z.shape[1] + 1, chain.z.shape[2]))
    for k in range(chain.n_kept):
        a_sum += stick_breaking_forward(chain.z[k])
    a_hat = a_sum / chain.n_kept
    return UnmixResult(
        a_hat=AbundanceMatrix(a_hat),
        m_hat=EndmemberMatrix(chain.m.mean(axis=0)),
        b_hat=chain.b.mean(axis=0),
        b_nonzero_prob=(chain.b != 0.0).mean(axis=0),
        sigma2_hat=NoiseVariances(chain.sigma2.mean(axis=0)),
        sigma_b2_hat=float(chain.sigma_b2.mean()),
        w_hat=float(chain.w.mean()),
    )


def check_chain_invariants(chain):
    """Validate every stored sample as a full ModelState; raises on violation."""
    for k in range(chain.n_kept):
        ModelState(
            z=LatentCoefficients(chain.z[k]),
            m=EndmemberMatrix(chain.m[k]),
            b=NonlinearityVector(chain.b[k]),
            sigma2=NoiseVariances(chain.sigma2[k]),
            sigma_b2=float(chain.sigma_b2[k]),
            w=float(chain.w[k]),
        )
    for iteration, _block, _old, _new in chain.adapt_events:
        if iteration > chain.n_burn:
            raise AssertionError(
                f"step-size adaptation event after burn-in at iteration {iteration}"
            )
