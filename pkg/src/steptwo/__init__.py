"""Numerical toolkit and verification harness for step-two Carnot groups."""

from .groups import (GroupSpec, GroupPoint, heisenberg, htype, n32, custom_spec,
                     identity, multiply, inverse, dilate, homogeneous_norm,
                     horizontal_frame)
from .geodesics import (Covector, GeodesicResult, exp_map, exp_scaled,
                        jacobian_exp, in_domain, scaling_jacobian_factor,
                        evaluate_geodesic)
from .distance import (DistanceResult, cc_distance, cc_distance_batch,
                       norm_equivalence_scan, ball_volume_estimate)
from .heatkernel import (KernelModel, ComparatorValue, oscillatory_model,
                         comparator_model, kernel_heisenberg,
                         comparator_heisenberg, comparator_htype, comparator_n32,
                         generic_bounds, kernel_mass, kernel_gradient_ratio_scan,
                         small_time_jacobian, small_time_jacobian_ratio,
                         heuristic_epsilon)
from .mcp import (mcp_ratio, weighted_mcp_ratio, mcp_scan, smallest_passing_N,
                  n32_chain_check, core_lemma_check, set_level_mcp_check,
                  sample_domain)
from .diffusion import (DiffusionConfig, SemigroupEstimate, TestFunction,
                        sample_diffusion, simulate_paths, heat_semigroup,
                        qbe_ratio, riemannian_qbe_ratio, commutation_gap,
                        coordinate_function, horizontal_square_function,
                        gaussian_bump, bump_family)
from .reports import RatioReport, SetLevelResult, SmallTimeFit, QbeEstimate
from .errors import (InputError, DomainError, NumericalFailure,
                     UnresolvedDistanceError, AsymptoticsError, ScanError)

__version__ = "0.1.0"
