"""Unsupervised nonlinear hyperspectral unmixing.

Bayesian estimation of endmembers, abundances and per-pixel second-order
nonlinearity under a polynomial post-nonlinear mixing model, sampled with
a constrained-Hamiltonian-Monte-Carlo-within-Gibbs scheme, plus a synthetic
scene generator and a metric suite.
"""

from .chmc import (
    BoxBounds,
    ChmcAdaptState,
    ChmcConfig,
    adapt_stepsize,
    chmc_step,
    constrained_leapfrog,
    reflect_into_box,
)
from .gibbs import (
    Chain,
    PriorConfig,
    SamplerConfig,
    UnmixResult,
    mmse_estimate,
    run,
)
from .initialization import init_endmember_prior
from .metrics import (
    EvalReport,
    align_endmembers,
    evaluate_unmixing,
    nonlinearity_summary,
    pca_project,
    psrf,
    reconstruction_error,
    rnmse,
    sam,
)
from .model import (
    AbundanceMatrix,
    EndmemberMatrix,
    LatentCoefficients,
    ModelState,
    NoiseVariances,
    NonlinearityVector,
    SpectralImage,
    endmember_grad,
    endmember_potential,
    latent_grad,
    latent_potential,
    neg_log_likelihood,
    ppnmm_image,
    ppnmm_pixel,
    stick_breaking_forward,
    stick_breaking_inverse,
)
from .synth import GroundTruth, SynthSpec, generate, procedural_endmembers

__version__ = "0.1.0"
