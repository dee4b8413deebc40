"""Endmember-prior initialization by purest-pixel simplex-volume search.

The image is projected onto its leading R-1 principal directions and R
pixels are selected to maximize the volume of the simplex they span,
starting from a farthest-point greedy seed and refined by vertex-swap
sweeps.  The selected pixel spectra, clamped to [0, 1], serve as the prior
means of the endmember rows; the sampler's wide endmember prior tolerates
the imprecision of this seed.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

__all__ = ["init_endmember_prior"]

_MAX_SWEEPS = 20


def _simplex_volume_matrix(scores, selected):
    r = len(selected)
    mat = np.ones((r, r))
    mat[1:, :] = scores[:, selected]
    return mat


def _greedy_seed(scores, r):
    norms = np.einsum("ij,ij->j", scores, scores)
    selected = [int(np.argmax(norms))]
    for _ in range(1, r):
        base = scores - scores[:, selected[0]][:, None]
        if len(selected) > 1:
            edges = scores[:, selected[1:]] - scores[:, selected[0]][:, None]
            # Distance to the affine hull of the current selection.
            proj = edges @ (np.linalg.pinv(edges) @ base)
            resid = base - proj
        else:
            resid = base
        dist = np.einsum("ij,ij->j", resid, resid)
        dist[selected] = -1.0
        selected.append(int(np.argmax(dist)))
    return selected


def _extreme_seed(scores, r):
    """Deduplicated min/max pixels along the principal axes, topped up greedily."""
    selected = []
    for axis in range(scores.shape[0]):
        for idx in (int(np.argmin(scores[axis])), int(np.argmax(scores[axis]))):
            if idx not in selected:
                selected.append(idx)
            if len(selected) == r:
                return selected
    for idx in _greedy_seed(scores, r):
        if idx not in selected:
            selected.append(idx)
        if len(selected) == r:
            break
    return selected


def init_endmember_prior(y, r):
    """Select R pixel spectra spanning a maximum-volume simplex.

    y is the bands-by-pixels image matrix.  Raises DataError when the data
    cannot support the search (too few pixels, or spectral rank below R-1,
    in which case user-supplied prior means are required).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise DataError(f"image must be 2-D, got shape {y.shape}")
    n_bands, n_pix = y.shape
    if n_pix < r:
        raise DataError(f"need at least R={r} pixels, got {n_pix}")
    if not (2 <= r <= n_bands):
        raise DataError(f"need 2 <= R <= L, got R={r}, L={n_bands}")
    centered = y - y.mean(axis=1, keepdims=True)
    u, sv, _ = np.linalg.svd(centered, full_matrices=False)
    if sv[0] == 0.0 or sv[r - 2] <= max(n_bands, n_pix) * np.finfo(float).eps * sv[0]:
        raise DataError(
            f"spectral rank below R-1={r - 1}; supply endmember prior means explicitly"
        )
    scores = u[:, : r - 1].T @ centered  # (R-1, N)

    best_sel, best_vol = None, -1.0
    for seed in (_greedy_seed(scores, r), _extreme_seed(scores, r)):
        selected, volume = _sweep_to_fixed_point(scores, list(seed), r)
        if volume > best_vol:
            best_sel, best_vol = selected, volume
    return np.clip(y[:, best_sel], 0.0, 1.0)


def _sweep_to_fixed_point(scores, selected, r):
    """Vertex-swap ascent on the simplex volume until no swap improves."""
    mat = _simplex_volume_matrix(scores, selected)
    volume = abs(np.linalg.det(mat))
    for _ in range(_MAX_SWEEPS):
        changed = False
        for j in range(r):
            # det as an affine function of vertex j, over every candidate pixel
            det_sign = np.linalg.det(mat)
            if det_sign == 0.0:
                break
            adj_row = det_sign * np.linalg.solve(
                mat.T, np.eye(r)[:, j]
            )  # row j of the adjugate
            cand = adj_row[0] + adj_row[1:] @ scores
            best = int(np.argmax(np.abs(cand)))
            if abs(cand[best]) > volume * (1.0 + 1e-12) and best != selected[j]:
                selected[j] = best
                mat = _simplex_volume_matrix(scores, selected)
                volume = abs(np.linalg.det(mat))
                changed = True
        if not changed:
            break
    return selected, volume
