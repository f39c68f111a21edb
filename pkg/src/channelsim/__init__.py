"""Channel simulation and distributed matching over shared randomness.

The library implements exact-sampling index coders built on rejection
sampling and its batchwise ensemble generalization, the distributed
matching protocols those selectors induce, and a side-information
compression scheme driven by hashed batch communication.
"""

from .dist import (DistributionSpec, DivergenceReport, UnboundedRatioError,
                   discrete, divergences, gaussian, information_density,
                   log_density, ratio_bound, sample, truncated_gaussian)
from .randomness import (CommonRandomness, StreamAddress, draw_exponential,
                         draw_hash, draw_proposal, draw_uniform)
from .samplers import (DeltaEstimate, ErsSelection, NonTerminationError,
                       channel_scale, ers_select, estimate_delta_x,
                       gumbel_select, pml_select, rs_select)
from .coder import (CodedMessage, MalformedCodeError, RateReport, ZipfModel,
                    elias_delta_decode, elias_delta_encode, ers_decode,
                    ers_encode, pack_bits, rs_bin_decode, rs_bin_encode,
                    rs_sort_decode, rs_sort_encode, total_rate, unary_decode,
                    unary_encode, zipf_ideal_bits)
from .matching import (BoundCoefficients, MatchTrial, bound_coefficients,
                       bound_iml, bound_pml, bound_rs, match_ers_batchcomm,
                       match_ers_nocomm, match_iml, match_pml, match_rs)
from .wynerziv import (RdPoint, WzConfig, feedback_round, posterior_spec,
                       run_wz_experiment, wz_decode, wz_encode, wz_error_bound)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
