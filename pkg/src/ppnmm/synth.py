"""Synthetic hyperspectral scene generation.

Scenes are drawn with pure-pixel-free abundances (uniform on the simplex
truncated by a purity ceiling), mixed under one of three models (plain
linear, second-order post-nonlinear, or generalized bilinear) and corrupted
by i.i.d. Gaussian noise.  Procedural endmember spectra stand in for
library reflectances when none are supplied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalError
from .metrics import sam
from .model import SpectralImage, ppnmm_image

__all__ = [
    "MIXING_MODELS",
    "SynthSpec",
    "GroundTruth",
    "sample_truncated_simplex",
    "truncated_simplex",
    "procedural_endmembers",
    "generate",
]

MIXING_MODELS = ("LMM", "PPNMM", "GBM")


@dataclass
class SynthSpec:
    """Scene geometry, mixing model and noise level for one synthetic image."""

    n_rows: int = 30
    n_cols: int = 30
    r: int = 3
    l: int = 50
    mixing_model: str = "PPNMM"
    a_max: float = 0.9
    noise_sigma2: float = 1e-4
    b_range: tuple = (-0.3, 0.3)
    gamma_range: tuple = (0.0, 1.0)
    endmember_source: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid dimensions must be positive")
        if self.mixing_model not in MIXING_MODELS:
            raise ValueError(f"mixing_model must be one of {MIXING_MODELS}")
        if not (2 <= self.r <= self.l):
            raise ValueError("need 2 <= R <= L")
        if not (1.0 / self.r < self.a_max <= 1.0):
            raise ValueError("a_max must lie in (1/R, 1]")
        if self.noise_sigma2 <= 0.0:
            raise ValueError("noise_sigma2 must be positive")
        if self.b_range[0] > self.b_range[1] or self.gamma_range[0] > self.gamma_range[1]:
            raise ValueError("ranges must be (low, high) with low <= high")
        if self.endmember_source is not None:
            self.endmember_source = np.asarray(self.endmember_source, dtype=float)
            if self.endmember_source.shape != (self.l, self.r):
                raise ValueError("endmember_source must be an L x R matrix")

    @property
    def n_pixels(self):
        return self.n_rows * self.n_cols


@dataclass
class GroundTruth:
    """Generating parameters of a synthetic scene."""

    m_true: np.ndarray
    a_true: np.ndarray
    sigma2_true: float
    b_true: Optional[np.ndarray] = None       # PPNMM only, length N
    gamma_true: Optional[np.ndarray] = None   # GBM only, (R*(R-1)/2, N)


def truncated_simplex(r, n, a_max, rng, max_batches=1000, stats=None):
    """Draw n points uniformly on the simplex with every coordinate < a_max.

    Rejection from the uniform simplex; raises NumericalError with the
    observed acceptance fraction when the proposal budget runs out (which
    only happens for a_max barely above 1/r).  Returns an (r, n) matrix.
    Pass a dict as ``stats`` to receive exact sequential rejection counts
    (proposals consumed up to the n-th acceptance).
    """
    if not (1.0 / r < a_max <= 1.0):
        raise ValueError("a_max must lie in (1/R, 1]")
    out = np.empty((r, n))
    have = 0
    proposed = 0
    for _ in range(max_batches):
        need = n - have
        batch = int(min(max(64, np.ceil(need * 1.5)), 1_000_000))
        cand = rng.dirichlet(np.ones(r), size=batch).T
        good_idx = np.nonzero(
            (cand.max(axis=0) < a_max) & (cand.min(axis=0) > 0.0)
        )[0]
        if good_idx.size >= need:
            proposed += int(good_idx[need - 1]) + 1
            out[:, have:] = cand[:, good_idx[:need]]
            if stats is not None:
                stats["proposed"] = proposed
                stats["accepted"] = n
            return out
        proposed += batch
        out[:, have:have + good_idx.size] = cand[:, good_idx]
        have += good_idx.size
    raise NumericalError(
        f"truncated-simplex rejection budget exhausted: accepted {have}/{n} "
        f"targets from {proposed} proposals (a_max={a_max}, r={r})"
    )


def sample_truncated_simplex(r, a_max, rng):
    """Single uniform draw from the a_max-truncated simplex."""
    return truncated_simplex(r, 1, a_max, rng)[:, 0]


# Procedural spectra: sum of Gaussian bumps over the band index, rescaled
# into a randomly drawn reflectance band.  Mostly-dark spectra with tall
# localized features keep simplex mixtures under ~1e-4 noise near a 21 dB
# signal-to-noise ratio (like library reflectances) while preserving enough
# mutual spectral contrast for the abundances to stay well determined.
_BASE_LOW = (0.05, 0.06)
_BASE_HIGH = (0.22, 0.38)
_MIN_PAIRWISE_SAM = 0.15
# Extra separation gate: per-band rms difference between accepted spectra.
_MIN_PAIRWISE_DIST = 0.07


def procedural_endmembers(r, l, rng, max_tries=200):
    """Generate r smooth, mutually separated spectra over l bands.

    Each spectrum mixes 3 to 6 Gaussian bumps and is rescaled into a random
    sub-interval of [0.05, 0.95]; candidates closer than 0.15 rad (spectral
    angle) to an already accepted spectrum are resampled.  Raises
    NumericalError if separation cannot be achieved within the budget.
    """
    if not (2 <= r <= l):
        raise ValueError("need 2 <= R <= L")
    idx = np.arange(l, dtype=float)
    spectra = np.empty((l, r))
    w_lo = max(1.2, l / 70.0)  # keep bumps resolvable at small band counts
    w_hi = max(2.5, l / 25.0)
    for j in range(r):
        for _ in range(max_tries):
            n_bumps = int(rng.integers(3, 7))
            centers = rng.uniform(0.0, l, n_bumps)
            widths = rng.uniform(w_lo, w_hi, n_bumps)
            amps = rng.uniform(0.2, 1.0, n_bumps)
            curve = np.zeros(l)
            for c, wd, am in zip(centers, widths, amps):
                curve += am * np.exp(-0.5 * ((idx - c) / wd) ** 2)
            span = curve.max() - curve.min()
            if span <= 0.0:
                continue
            curve = (curve - curve.min()) / span
            lo = rng.uniform(*_BASE_LOW)
            hi = rng.uniform(*_BASE_HIGH)
            cand = lo + (hi - lo) * curve
            if all(
                sam(cand, spectra[:, k]) >= _MIN_PAIRWISE_SAM
                and np.linalg.norm(cand - spectra[:, k]) / np.sqrt(l) >= _MIN_PAIRWISE_DIST
                for k in range(j)
            ):
                spectra[:, j] = cand
                break
        else:
            raise NumericalError(
                f"could not draw {r} spectra with pairwise separation >= "
                f"{_MIN_PAIRWISE_SAM} rad in {max_tries} tries per slot"
            )
    return spectra


def _gbm_pairs(r):
    return [(i, j) for i in range(r) for j in range(i + 1, r)]


def generate(spec, rng=None):
    """Generate one scene; returns (SpectralImage, GroundTruth).

    The draw order (endmembers, abundances, nonlinearity coefficients,
    noise) is fixed, so a given spec and seed reproduce the image exactly.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n = spec.n_pixels
    if spec.endmember_source is not None:
        m = np.array(spec.endmember_source, dtype=float)
    else:
        m = procedural_endmembers(spec.r, spec.l, rng)
    a = truncated_simplex(spec.r, n, spec.a_max, rng)
    b_true = None
    gamma_true = None
    if spec.mixing_model == "LMM":
        x = m @ a
    elif spec.mixing_model == "PPNMM":
        b_true = rng.uniform(spec.b_range[0], spec.b_range[1], n)
        x = ppnmm_image(m, a, b_true)
    else:  # GBM: pairwise endmember interactions with per-pixel coefficients
        pairs = _gbm_pairs(spec.r)
        gamma_true = rng.uniform(
            spec.gamma_range[0], spec.gamma_range[1], (len(pairs), n)
        )
        x = m @ a
        for k, (i, j) in enumerate(pairs):
            x = x + (gamma_true[k] * a[i] * a[j]) * (m[:, i] * m[:, j])[:, None]
    noise = np.sqrt(spec.noise_sigma2) * rng.standard_normal((spec.l, n))
    image = SpectralImage(x + noise)
    truth = GroundTruth(
        m_true=m, a_true=a, sigma2_true=spec.noise_sigma2,
        b_true=b_true, gamma_true=gamma_true,
    )
    return image, truth
