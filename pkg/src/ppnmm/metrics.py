"""Scoring, alignment and convergence diagnostics for unmixing runs."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import ppnmm_image

__all__ = [
    "rnmse",
    "sam",
    "reconstruction_error",
    "align_endmembers",
    "pca_project",
    "nonlinearity_summary",
    "psrf",
    "convergence_report",
    "EvalReport",
    "evaluate_unmixing",
]

# Finite stand-in reported when between-chain spread dominates an exactly
# zero within-chain variance.
PSRF_SENTINEL = 1e12

# Posterior nonzero-probability below this declares a pixel linearly mixed.
LINEAR_THRESHOLD = 0.5


def rnmse(a_true, a_hat):
    """Root normalized mean square abundance error: sqrt(mean of ||da||^2 / R)."""
    a_true = np.asarray(a_true, dtype=float)
    a_hat = np.asarray(a_hat, dtype=float)
    if a_true.shape != a_hat.shape:
        raise ValueError(f"shape mismatch: {a_true.shape} vs {a_hat.shape}")
    diff = a_hat - a_true
    return float(np.sqrt(np.sum(diff * diff) / diff.size))


def sam(m_true, m_hat):
    """Spectral angle (radians) between two spectra; scale invariant."""
    u = np.asarray(m_true, dtype=float)
    v = np.asarray(m_hat, dtype=float)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("spectral angle undefined for zero-norm input")
    c = np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)
    return float(np.arccos(c))


def reconstruction_error(y, y_hat):
    """Root mean square reconstruction error over all bands and pixels."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    diff = y_hat - y
    return float(np.sqrt(np.sum(diff * diff) / diff.size))


def _sam_cost(m_true, m_hat):
    r = m_true.shape[1]
    cost = np.empty((r, r))
    for i in range(r):
        for j in range(r):
            cost[i, j] = sam(m_true[:, i], m_hat[:, j])
    return cost


def align_endmembers(m_true, m_hat):
    """Column permutation of m_hat minimizing the total spectral angle.

    Exhaustive search up to 8 columns, Hungarian assignment beyond.
    Returns (perm, aligned) with aligned[:, i] = m_hat[:, perm[i]]; apply
    the same permutation to estimated abundance rows before scoring.
    """
    m_true = np.asarray(m_true, dtype=float)
    m_hat = np.asarray(m_hat, dtype=float)
    if m_true.shape != m_hat.shape:
        raise ValueError(f"shape mismatch: {m_true.shape} vs {m_hat.shape}")
    r = m_true.shape[1]
    cost = _sam_cost(m_true, m_hat)
    if r <= 8:
        best, best_total = None, np.inf
        for perm in permutations(range(r)):
            total = sum(cost[i, perm[i]] for i in range(r))
            if total < best_total:
                best, best_total = perm, total
        perm = np.array(best, dtype=int)
    else:
        rows, cols = linear_sum_assignment(cost)
        perm = cols[np.argsort(rows)]
    return perm, m_hat[:, perm]


def pca_project(y, k):
    """Mean-centered projection onto the top-k principal spectral directions.

    Returns (scores, basis): scores is k x N, basis is L x k with orthonormal
    columns.  Each basis column is flipped so its largest-magnitude loading
    is positive, which makes the decomposition deterministic.
    """
    y = np.asarray(y, dtype=float)
    l, n = y.shape
    if not (1 <= k <= min(l, n)):
        raise ValueError(f"need 1 <= k <= min(L, N)={min(l, n)}, got {k}")
    centered = y - y.mean(axis=1, keepdims=True)
    u, _, _ = np.linalg.svd(centered, full_matrices=False)
    basis = u[:, :k].copy()
    for j in range(k):
        lead = np.argmax(np.abs(basis[:, j]))
        if basis[lead, j] < 0.0:
            basis[:, j] = -basis[:, j]
    scores = basis.T @ centered
    return scores, basis


def nonlinearity_summary(source, bins=50):
    """Histogram of estimated nonlinearity parameters plus the linear fraction.

    Accepts an UnmixResult, a Chain, or a (b_hat, b_nonzero_prob) pair.
    A pixel counts as linear when its posterior nonzero probability falls
    below ``LINEAR_THRESHOLD``.  Returns (counts, bin_edges, linear_fraction).
    """
    if hasattr(source, "b_hat"):
        b_hat = np.asarray(source.b_hat, dtype=float)
        prob = np.asarray(source.b_nonzero_prob, dtype=float)
    elif hasattr(source, "b"):
        b_hat = np.asarray(source.b, dtype=float).mean(axis=0)
        prob = (np.asarray(source.b) != 0.0).mean(axis=0)
    else:
        b_hat, prob = (np.asarray(v, dtype=float) for v in source)
    lo = float(b_hat.min())
    hi = float(b_hat.max())
    if lo == hi:
        # Degenerate range: a single spike bin around the common value.
        edges = np.array([lo - 0.5, lo + 0.5])
        counts = np.array([b_hat.size])
    else:
        counts, edges = np.histogram(b_hat, bins=bins, range=(lo, hi))
    linear_fraction = float(np.mean(prob < LINEAR_THRESHOLD))
    return counts, edges, linear_fraction


def psrf(chains):
    """Potential scale reduction factor across >= 2 chains of one scalar.

    Uses sqrt((W + B_n) / W) with W the mean within-chain variance and B_n
    the variance of the chain means, so identical chains score exactly 1.
    Deterministic constant chains that disagree return ``PSRF_SENTINEL``.
    """
    arr = np.asarray(chains, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError("need >= 2 chains with >= 2 samples each")
    means = arr.mean(axis=1)
    w = float(arr.var(axis=1, ddof=1).mean())
    b_n = float(means.var(ddof=1))
    if w == 0.0:
        return 1.0 if b_n == 0.0 else PSRF_SENTINEL
    return float(np.sqrt((w + b_n) / w))


def _scalar_traces(chain):
    return {
        "w": np.asarray(chain.w, dtype=float),
        "sigma_b2": np.asarray(chain.sigma_b2, dtype=float),
        "sigma2_mean": np.asarray(chain.sigma2, dtype=float).mean(axis=1),
        "b_mean": np.asarray(chain.b, dtype=float).mean(axis=1),
    }


def convergence_report(chains):
    """Trace statistics, PSRFs (given >= 2 chains) and acceptance summaries.

    Accepts one Chain or a sequence of them; returns a flat dict suitable
    for key=value serialization.
    """
    if hasattr(chains, "accept_z"):
        chains = [chains]
    chains = list(chains)
    if not chains:
        raise ValueError("need at least one chain")
    report = {}
    traces = [_scalar_traces(c) for c in chains]
    for name in traces[0]:
        values = [t[name] for t in traces]
        stacked = np.concatenate(values)
        report[f"{name}.mean"] = float(stacked.mean())
        report[f"{name}.std"] = float(stacked.std(ddof=1)) if stacked.size > 1 else 0.0
        if len(chains) > 1:
            n_min = min(v.size for v in values)
            report[f"{name}.psrf"] = psrf([v[:n_min] for v in values])
    for i, c in enumerate(chains):
        tag = f"chain{i}."
        report[tag + "accept_z.mean"] = float(np.mean(c.accept_z))
        report[tag + "accept_m.mean"] = float(np.mean(c.accept_m))
        report[tag + "diverged_z.total"] = int(np.sum(c.diverged_z))
        report[tag + "diverged_m.total"] = int(np.sum(c.diverged_m))
        report[tag + "adapt_events"] = len(c.adapt_events)
        post = [e for e in c.adapt_events if e[0] > c.n_burn]
        report[tag + "adapt_events_post_burn_in"] = len(post)
    return report


@dataclass
class EvalReport:
    """Scores of one unmixing run against ground truth."""

    rnmse: float
    sam_per_endmember: np.ndarray
    sam_average: float
    re: float
    permutation: np.ndarray
    b_histogram: tuple
    linear_fraction: Optional[float]


def evaluate_unmixing(y, m_true, a_true, m_hat, a_hat, b_hat, b_nonzero_prob=None):
    """Align the estimate to the truth and compute the metric suite.

    The reconstruction pushes the (unaligned) estimates back through the
    forward model; alignment only affects abundance and endmember scores.
    """
    perm, m_aligned = align_endmembers(m_true, m_hat)
    a_aligned = np.asarray(a_hat, dtype=float)[perm, :]
    sams = np.array(
        [sam(np.asarray(m_true)[:, i], m_aligned[:, i]) for i in range(m_aligned.shape[1])]
    )
    y_hat = ppnmm_image(m_hat, a_hat, b_hat)
    counts, edges, linear_fraction = nonlinearity_summary(
        (b_hat, b_nonzero_prob if b_nonzero_prob is not None else np.ones_like(b_hat))
    )
    if b_nonzero_prob is None:
        linear_fraction = None
    return EvalReport(
        rnmse=rnmse(a_true, a_aligned),
        sam_per_endmember=sams,
        sam_average=float(sams.mean()),
        re=reconstruction_error(y, y_hat),
        permutation=perm,
        b_histogram=(counts, edges),
        linear_fraction=linear_fraction,
    )
