"""Identifiability toolkit for Gaussian-mixture latent models with piecewise-affine decoders."""
from .errors import *  # noqa: F401,F403
from .gmm import (AffineMap, GaussianMixture, affine_pushforward, density, l2_inner, l2_norm,
                  log_density, make_gmm, sample)
from .pwa import (Layer, NetworkSpec, PiecewiseAffineFunction, architecture_check,
                  classify_injectivity, compile_network, evaluate, is_generic, preimage,
                  preimage_count_ext)
from .disentangle import (LatentStructure, UnmixingResult, check_ratio_assumption,
                          check_subset_condition, recover_latent, recover_unmixing)
from .metrics import (AlignmentReport, LatentSample, cca_align, delta_l2, dist_aff_l2,
                      ingest_latents, mcc, mean_match_affine)
from .likelihood import (GenerativeModel, GridSpec, affine_equivalent, grid_search, noisy_density,
                         population_nll, single_layer_decoder)
from .suite import (EqualityEvidence, end_to_end_recovery, recover_affine_witness,
                    verify_npmix_theorem, verify_pushforward_equality)

__version__ = "0.1.0"
