"""Forward mixing model, simplex reparameterization, and potential energies.

Pixels are stored column-wise throughout: an observed image is a
bands-by-pixels matrix Y, abundances are a components-by-pixels matrix A,
and the latent stick-breaking coordinates form a (components-1)-by-pixels
matrix Z.  A pixel y is modeled as

    y = s + b * s**2 + noise,    s = M a,

elementwise in the bands, where M holds one endmember spectrum per column,
a lies on the open probability simplex, and the scalar b controls the
second-order distortion (b = 0 recovers the plain linear mixture).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "SpectralImage",
    "EndmemberMatrix",
    "AbundanceMatrix",
    "LatentCoefficients",
    "NonlinearityVector",
    "NoiseVariances",
    "ModelState",
    "stick_breaking_forward",
    "stick_breaking_inverse",
    "ppnmm_pixel",
    "ppnmm_image",
    "neg_log_likelihood",
    "latent_potential",
    "latent_grad",
    "endmember_potential",
    "endmember_grad",
]

# Column sums of abundance matrices must hold to this tolerance.
SIMPLEX_ATOL = 1e-12


def _as_matrix(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Domain containers
# ---------------------------------------------------------------------------

@dataclass
class SpectralImage:
    """Observed reflectances, one column per pixel; wavelengths are metadata."""

    data: np.ndarray
    wavelengths: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = _as_matrix(self.data, "image")
        if self.n_bands < 2 or self.n_pixels < 1:
            raise ValueError(
                f"image needs >= 2 bands and >= 1 pixel, got {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image contains non-finite entries")
        if self.wavelengths is not None:
            self.wavelengths = np.asarray(self.wavelengths, dtype=float)
            if self.wavelengths.shape != (self.n_bands,):
                raise ValueError("wavelengths must have one entry per band")

    @property
    def n_bands(self):
        return self.data.shape[0]

    @property
    def n_pixels(self):
        return self.data.shape[1]


@dataclass
class EndmemberMatrix:
    """Endmember spectra as columns; reflectances constrained to [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_matrix(self.data, "endmembers")
        l, r = self.data.shape
        if r < 2 or r > l:
            raise ValueError(f"need 2 <= R <= L, got L={l}, R={r}")
        if np.any(self.data < 0.0) or np.any(self.data > 1.0):
            raise ValueError("endmember reflectances must lie in [0, 1]")

    @property
    def n_bands(self):
        return self.data.shape[0]

    @property
    def n_endmembers(self):
        return self.data.shape[1]


@dataclass
class AbundanceMatrix:
    """Per-pixel mixing proportions; strictly positive columns summing to 1."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_matrix(self.data, "abundances")
        if np.any(self.data <= 0.0):
            raise ValueError("abundances must be strictly positive")
        sums = self.data.sum(axis=0)
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > SIMPLEX_ATOL:
            raise ValueError(
                f"abundance columns must sum to 1 within {SIMPLEX_ATOL}, "
                f"worst deviation {worst:.3e}"
            )


@dataclass
class LatentCoefficients:
    """Stick-breaking coordinates, strictly inside the open unit interval."""

    data: np.ndarray

    def __post_init__(self):
        self.data = _as_matrix(self.data, "latent coefficients")
        if np.any(self.data <= 0.0) or np.any(self.data >= 1.0):
            raise ValueError("latent coefficients must lie strictly in (0, 1)")


@dataclass
class NonlinearityVector:
    """Per-pixel second-order coefficients; exact zeros mark linear pixels."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 1:
            raise ValueError("nonlinearity parameters must form a vector")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("nonlinearity parameters must be finite")


@dataclass
class NoiseVariances:
    """One positive noise variance per spectral band."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 1:
            raise ValueError("noise variances must form a vector")
        if not np.all(np.isfinite(self.data)) or np.any(self.data <= 0.0):
            raise ValueError("noise variances must be positive and finite")


@dataclass
class ModelState:
    """Full parameter/hyperparameter set at one sampler iteration."""

    z: LatentCoefficients
    m: EndmemberMatrix
    b: NonlinearityVector
    sigma2: NoiseVariances
    sigma_b2: float
    w: float

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Re-check all component and cross-shape invariants."""
        for field_name in ("z", "m", "b", "sigma2"):
            getattr(self, field_name).__post_init__()
        r = self.m.n_endmembers
        n = self.z.data.shape[1]
        if self.z.data.shape[0] != r - 1:
            raise ValueError("latent coefficients must have R-1 rows")
        if self.b.data.shape != (n,):
            raise ValueError("one nonlinearity parameter per pixel required")
        if self.sigma2.data.shape != (self.m.n_bands,):
            raise ValueError("one noise variance per band required")
        if not (np.isfinite(self.sigma_b2) and self.sigma_b2 > 0.0):
            raise ValueError("sigma_b2 must be positive")
        if not (0.0 <= self.w <= 1.0):
            raise ValueError("w must lie in [0, 1]")


# ---------------------------------------------------------------------------
# Simplex reparameterization
# ---------------------------------------------------------------------------

def stick_breaking_forward(z):
    """Map stick-breaking coordinates in (0,1)^(R-1) to the open simplex.

    Component r of the output keeps a (1 - z_r) share of the stick left
    after the first r-1 breaks: a_r = (prod_{k<r} z_k) * (1 - z_r) for
    r < R, and the last component takes the remainder prod_{k<R} z_k.
    Accepts a single vector or an (R-1, n) matrix of column vectors.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zz = z[:, None] if single else z
    if zz.ndim != 2 or zz.shape[0] < 1:
        raise ValueError("need at least one stick-breaking coordinate")
    if not np.all((zz > 0.0) & (zz < 1.0)):
        raise ValueError("stick-breaking coordinates must lie strictly in (0, 1)")
    cp = np.cumprod(zz, axis=0)
    r = zz.shape[0] + 1
    a = np.empty((r, zz.shape[1]))
    a[0] = 1.0 - zz[0]
    if r > 2:
        a[1:-1] = cp[:-1] * (1.0 - zz[1:])
    a[-1] = cp[-1]
    return a[:, 0] if single else a


def stick_breaking_inverse(a, atol=1e-9):
    """Recover stick-breaking coordinates from simplex vectors.

    Uses z_r = tail_{r+1} / tail_r with tail_r = sum_{k>=r} a_k, which is
    algebraically 1 - a_r / prod_{k<r} z_k but avoids accumulating products.
    """
    a = np.asarray(a, dtype=float)
    single = a.ndim == 1
    aa = a[:, None] if single else a
    if aa.ndim != 2 or aa.shape[0] < 2:
        raise ValueError("need at least two simplex components")
    if np.any(aa <= 0.0):
        raise ValueError("simplex entries must be strictly positive")
    sums = aa.sum(axis=0)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > atol:
        raise ValueError(f"columns must sum to 1 within {atol}, got deviation {worst:.3e}")
    tail = np.flip(np.cumsum(np.flip(aa, axis=0), axis=0), axis=0)
    z = tail[1:] / tail[:-1]
    # Rounding can push a ratio onto the closed boundary; keep the open interval.
    np.clip(z, np.finfo(float).tiny, np.nextafter(1.0, 0.0), out=z)
    return z[:, 0] if single else z


# ---------------------------------------------------------------------------
# Forward model and likelihood
# ---------------------------------------------------------------------------

def ppnmm_pixel(m, a, b):
    """Mix one pixel: s + b * s**2 with s = M a (elementwise square)."""
    m = np.asarray(m, dtype=float)
    a = np.asarray(a, dtype=float)
    if m.ndim != 2 or a.shape != (m.shape[1],):
        raise ValueError(f"shape mismatch: M {m.shape} vs a {a.shape}")
    s = m @ a
    return s + b * s * s


def ppnmm_image(m, a, b):
    """Mix a whole image: M A + [(M A) o (M A)] diag(b), columns are pixels."""
    m = np.asarray(m, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if m.ndim != 2 or a.ndim != 2 or m.shape[1] != a.shape[0]:
        raise ValueError(f"shape mismatch: M {m.shape} vs A {a.shape}")
    if b.shape != (a.shape[1],):
        raise ValueError(f"need one nonlinearity parameter per pixel, got {b.shape}")
    s = m @ a
    return s + (s * s) * b


def neg_log_likelihood(y, x, sigma2):
    """Negative log of the heteroscedastic Gaussian likelihood of Y given X.

    Returns (N/2) * sum_l log sigma_l^2 + 0.5 * sum_{l,n} (y - x)^2 / sigma_l^2.
    The additive constant (N L / 2) log(2 pi), which depends on no parameter,
    is dropped; differences of this function are exact log density ratios.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {x.shape}")
    if sigma2.shape != (y.shape[0],) or np.any(sigma2 <= 0.0):
        raise ValueError("need one positive variance per band")
    resid = y - x
    n = y.shape[1]
    return float(
        0.5 * n * np.sum(np.log(sigma2))
        + 0.5 * np.sum(resid * resid / sigma2[:, None])
    )


# ---------------------------------------------------------------------------
# Potential energies and analytic gradients
# ---------------------------------------------------------------------------

def latent_potential(z, y, m, b, sigma2):
    """Potential energy of one pixel's stick-breaking coordinates.

    0.5 (y - x)^T Sigma^-1 (y - x) - sum_r (R - r - 1) log z_r, where x is
    the mixed pixel at the abundances encoded by z.  The second term is the
    negative log of the product of Beta(R-r, 1) densities that makes the
    implied abundance vector uniform on the simplex.
    """
    z = np.asarray(z, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0.0):
        raise ValueError("noise variances must be positive")
    a = stick_breaking_forward(z)  # validates the open-interval domain
    x = ppnmm_pixel(m, a, b)
    resid = np.asarray(y, dtype=float) - x
    r = z.size + 1
    expo = r - np.arange(1, r) - 1.0
    return float(0.5 * np.sum(resid * resid / sigma2) - np.sum(expo * np.log(z)))


def latent_grad(z, y, m, b, sigma2):
    """Analytic gradient of ``latent_potential`` with respect to z.

    Chains the data-term gradient with respect to abundances,
    -(y - x)^T Sigma^-1 [M + 2 b (M a 1^T) o M], through the triangular
    Jacobian of the stick-breaking map (da_r/dz_i = 0 for i > r,
    a_r/(z_i - 1) for i = r, a_r/z_i for i < r) and adds the prior term
    -(R - i - 1)/z_i.
    """
    z = np.asarray(z, dtype=float)
    m = np.asarray(m, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0.0):
        raise ValueError("noise variances must be positive")
    a = stick_breaking_forward(z)
    s = m @ a
    x = s + b * s * s
    wres = (np.asarray(y, dtype=float) - x) / sigma2
    grad_a = -(m.T @ ((1.0 + 2.0 * b * s) * wres))
    pa = grad_a * a
    rm1 = z.size
    suffix = np.cumsum(pa[::-1])[::-1]  # suffix[i] = sum_{r>=i} grad_a[r] a[r]
    expo = (rm1 + 1) - np.arange(1, rm1 + 1) - 1.0
    return pa[:rm1] / (z - 1.0) + suffix[1:] / z - expo / z


def endmember_potential(m_row, y_row, a, b, sigma_l2, s2, mbar_row):
    """Potential energy of one spectral band's endmember row.

    ||y_row - t||^2 / (2 sigma_l^2) + ||m_row - mbar_row||^2 / (2 s^2) with
    t = A^T m_row + diag(b) [(A^T m_row) o (A^T m_row)].
    """
    if sigma_l2 <= 0.0 or s2 <= 0.0:
        raise ValueError("sigma_l2 and s2 must be positive")
    m_row = np.asarray(m_row, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u = a.T @ m_row
    t = u + b * u * u
    dr = np.asarray(y_row, dtype=float) - t
    dm = m_row - np.asarray(mbar_row, dtype=float)
    return float(0.5 * np.sum(dr * dr) / sigma_l2 + 0.5 * np.sum(dm * dm) / s2)


def endmember_grad(m_row, y_row, a, b, sigma_l2, s2, mbar_row):
    """Analytic gradient of ``endmember_potential`` with respect to the row.

    -((y_row - t)^T / sigma_l^2) [A^T + 2 diag(b) (A^T m_row 1^T) o A^T]
    + (m_row - mbar_row)^T / s^2.
    """
    if sigma_l2 <= 0.0 or s2 <= 0.0:
        raise ValueError("sigma_l2 and s2 must be positive")
    m_row = np.asarray(m_row, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u = a.T @ m_row
    t = u + b * u * u
    wres = (np.asarray(y_row, dtype=float) - t) / sigma_l2
    return -(a @ ((1.0 + 2.0 * b * u) * wres)) + (
        m_row - np.asarray(mbar_row, dtype=float)
    ) / s2
