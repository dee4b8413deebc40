"""Box-constrained Hamiltonian Monte Carlo with reflective leapfrog steps.

The proposal integrates Hamiltonian dynamics for the potential U under the
kinetic energy p^T p / 2 and reflects every coordinate that leaves the box
back inside, negating its momentum once per reflection.  The step size can
be adapted from the recent acceptance rate, but only during burn-in so the
post-burn-in chain stays homogeneous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BOUNDARY_NUDGE",
    "BoxBounds",
    "ChmcConfig",
    "ChmcAdaptState",
    "TrajectoryDiverged",
    "reflect_into_box",
    "constrained_leapfrog",
    "chmc_step",
    "adapt_stepsize",
]

# Positions landing exactly on a bound are moved this far inside so that
# log terms in the potentials stay finite.
BOUNDARY_NUDGE = 1e-12


class TrajectoryDiverged(RuntimeError):
    """A leapfrog trajectory produced non-finite values; treat as rejection."""


@dataclass(frozen=True)
class BoxBounds:
    """Scalar lower/upper bound shared by every coordinate of a block."""

    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got ({self.lower}, {self.upper})")

    @property
    def width(self):
        return self.upper - self.lower


@dataclass(frozen=True)
class ChmcConfig:
    """Step-size, trajectory-length and adaptation settings for one block."""

    epsilon: float = 0.01
    nlf_min: int = 45
    nlf_max: int = 55
    bounds: BoxBounds = field(default_factory=BoxBounds)
    adapt_window: int = 50
    adapt_low: float = 0.5
    adapt_high: float = 0.8
    adapt_factor: float = 0.25

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not (1 <= self.nlf_min <= self.nlf_max):
            raise ValueError("need 1 <= nlf_min <= nlf_max")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")
        if not (0.0 < self.adapt_low < self.adapt_high < 1.0):
            raise ValueError("need 0 < adapt_low < adapt_high < 1")
        if not (0.0 < self.adapt_factor < 1.0):
            raise ValueError("adapt_factor must lie in (0, 1)")


@dataclass
class ChmcAdaptState:
    """Mutable per-block adaptation bookkeeping.

    ``window`` collects one acceptance rate per sampler iteration (a plain
    accept/reject step records 0.0 or 1.0); ``events`` logs every step-size
    change as (iteration, old epsilon, new epsilon).
    """

    epsilon_current: float
    in_burn_in: bool = True
    window: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def record(self, accept_rate):
        self.window.append(float(accept_rate))


def reflect_into_box(q, p, bounds):
    """Fold a position into [lower, upper] by repeated boundary reflection.

    Equivalent to reflecting across whichever bound is violated until the
    position lies inside, negating the momentum once per reflection, but
    computed in closed form over the period 2 * (upper - lower) so the cost
    does not depend on how far outside the box q lies.  Positions landing
    exactly on a bound are nudged ``BOUNDARY_NUDGE`` inward.  Scalar or
    array arguments are accepted elementwise.
    """
    q_arr = np.asarray(q, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    width = bounds.width
    y = np.mod(q_arr - bounds.lower, 2.0 * width)
    flip = y > width
    q_new = bounds.lower + np.where(flip, 2.0 * width - y, y)
    p_new = np.where(flip, -p_arr, p_arr)
    q_new = np.where(q_new <= bounds.lower, bounds.lower + BOUNDARY_NUDGE, q_new)
    q_new = np.where(q_new >= bounds.upper, bounds.upper - BOUNDARY_NUDGE, q_new)
    if q_arr.ndim == 0:
        return float(q_new), float(p_new)
    return q_new, p_new


def constrained_leapfrog(q, p, epsilon, n_steps, grad, bounds):
    """Run ``n_steps`` reflective leapfrog steps from (q, p).

    Each step performs a half momentum kick, a full position step, a
    coordinate-wise reflection into the box, and a second half kick using
    the gradient at the reflected position.  The gradient is evaluated once
    per position (the closing half kick of one step and the opening half
    kick of the next share the same point).

    Raises ``TrajectoryDiverged`` on non-finite intermediate values; the
    caller treats that as a rejection.
    """
    q = np.array(q, dtype=float, copy=True)
    p = np.array(p, dtype=float, copy=True)
    g = np.asarray(grad(q), dtype=float)
    if not np.all(np.isfinite(g)):
        raise TrajectoryDiverged("non-finite gradient at the initial point")
    for _ in range(int(n_steps)):
        p -= 0.5 * epsilon * g
        q += epsilon * p
        q, p = reflect_into_box(q, p, bounds)
        g = np.asarray(grad(q), dtype=float)
        p -= 0.5 * epsilon * g
        if not (
            np.all(np.isfinite(q))
            and np.all(np.isfinite(p))
            and np.all(np.isfinite(g))
        ):
            raise TrajectoryDiverged("non-finite leapfrog state")
    return q, p


def chmc_step(q, potential, grad, cfg, rng, epsilon=None, stats=None):
    """One constrained HMC transition; returns (next position, accepted).

    Momenta are drawn standard normal, the number of leapfrog steps is
    drawn uniformly from {nlf_min, ..., nlf_max}, and the candidate is
    accepted with probability min(1, exp(-H* + H)).  Diverged trajectories
    count as rejections and increment ``stats['diverged']`` when a stats
    dict is supplied.
    """
    eps = cfg.epsilon if epsilon is None else float(epsilon)
    q = np.asarray(q, dtype=float)
    p = rng.standard_normal(q.shape)
    n_steps = int(rng.integers(cfg.nlf_min, cfg.nlf_max + 1))
    h0 = potential(q) + 0.5 * float(np.sum(p * p))
    try:
        q_star, p_star = constrained_leapfrog(q, p, eps, n_steps, grad, cfg.bounds)
        h1 = potential(q_star) + 0.5 * float(np.sum(p_star * p_star))
    except TrajectoryDiverged:
        h1 = np.inf
    if not np.isfinite(h1):
        if stats is not None:
            stats["diverged"] = stats.get("diverged", 0) + 1
        return q.copy(), False
    if np.log(rng.random()) < -(h1 - h0):
        return q_star, True
    return q.copy(), False


def adapt_stepsize(state, cfg, iteration=0):
    """Apply the burn-in step-size rule once the acceptance window is full.

    If the average acceptance rate over the last ``adapt_window`` recorded
    iterations is below ``adapt_low`` the step size shrinks by
    ``adapt_factor`` (to 75% by default); above ``adapt_high`` it grows by
    the same factor (to 125%).  Windows do not overlap: the buffer is
    cleared after every full-window check.  After burn-in the step size is
    frozen and calls become no-ops.
    """
    if not state.in_burn_in or len(state.window) < cfg.adapt_window:
        return state
    rate = float(np.mean(state.window))
    state.window.clear()
    new_eps = state.epsilon_current
    if rate < cfg.adapt_low:
        new_eps = state.epsilon_current * (1.0 - cfg.adapt_factor)
    elif rate > cfg.adapt_high:
        new_eps = state.epsilon_current * (1.0 + cfg.adapt_factor)
    if new_eps != state.epsilon_current:
        state.events.append((int(iteration), state.epsilon_current, new_eps))
        state.epsilon_current = new_eps
    return state
