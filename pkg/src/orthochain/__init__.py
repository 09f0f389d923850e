"""orthochain: orthogonality dynamics of normalized random linear networks.

A numerical laboratory for the Markov chain of hidden representations under
row-normalizing batch normalization: chain simulation, orthogonality-gap
diagnostics, desk-scale verification of the contraction and Gaussian-
approximation bounds, and the SVD-based iterative-orthogonalization weight
initializer derived from them.
"""

from .chain import (ACTIVATIONS, ChainConfig, ChainStepError,
                    DegenerateRowError, batch_norm, bn_step, correlated_input,
                    gaussian_input, orthogonal_input, simulate_chain,
                    vanilla_step)
from .experiments import (ExperimentSpec, RunRecord, estimate_decay,
                          fit_loglog_slope, records_to_csv, run_chain,
                          run_conjecture_sweep, run_cosine_contrast,
                          run_depth_sweep, run_init_demo, run_theory_battery,
                          run_width_sweep, write_csv)
from .initializers import (ConvInitSpec, InitScheme, RankDeficiencyError,
                           conv_feature_map, conv_iterative_init, feature_gap,
                           fold, gaussian_init, iterative_orthogonal_init,
                           unfold, verify_init_gap, xavier_init)
from .metrics import (LayerTrace, conjecture_gap, gaussianity_diagnostics,
                      gram, layer_trace, lyapunov_gap, orthogonality_gap,
                      pairwise_cosines, v_from_spectrum)
from .numerics import (SvdConvergenceError, SvdFactors, derive_seed,
                       matrix_with_spectrum, min_singular_value, rng_from,
                       sample_gaussian_matrix, singular_values, thin_svd)
from .theory import (BoundReport, PVector, coupling_w2_quantities,
                     gaussian_w2_bound, estimate_spectral_floor, g_convexity_scan,
                     unconditional_stability, p_vector_montecarlo,
                     p_vector_quadrature, random_unit_spectrum,
                     random_unit_state, single_step_bound, depth_gap_bound,
                     verify_contraction_center, verify_gram_concentration,
                     verify_single_step)

__version__ = "0.1.0"
