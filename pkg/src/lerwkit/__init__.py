"""Loop-erased random walk and radial SLE toolkit with exact finite-domain oracles."""

__version__ = "0.1.0"

from .lattice import (LatticeSpec, LatticeSpecError, lazy_random_walk, simple_random_walk,  # noqa: E402
                      spec_from_json, spec_to_json, triangular_walk, validate_spec)
from .geometry import Annulus, Ball, ExplicitSet, HalfWedge, region_from_json  # noqa: E402
from .loop_erasure import (exact_lerw_law, exact_lerw_prob, loop_erase, measure_mu,  # noqa: E402
                           sample_lerw)
from .exponents import (EstimatorReport, ExponentFit, decomposition_ratio, estimate_es,  # noqa: E402
                        estimate_es_annulus, estimate_es_annulus_sweep, estimate_es_tilde,
                        estimate_growth, fit_exponent, separation_statistics)
from .sle import (bm_sle_avoidance, curve_distance, forward_flow, lerw_sle_comparison,  # noqa: E402
                  sample_driving, trace_points)

__all__ = [
    "__version__",
    "LatticeSpec", "LatticeSpecError", "validate_spec", "simple_random_walk", "lazy_random_walk",
    "triangular_walk", "spec_from_json", "spec_to_json",
    "Ball", "Annulus", "HalfWedge", "ExplicitSet", "region_from_json",
    "loop_erase", "sample_lerw", "exact_lerw_prob", "exact_lerw_law", "measure_mu",
    "EstimatorReport", "ExponentFit", "fit_exponent", "estimate_es", "estimate_es_annulus",
    "estimate_es_annulus_sweep", "estimate_es_tilde", "estimate_growth", "decomposition_ratio",
    "separation_statistics",
    "sample_driving", "trace_points", "forward_flow", "bm_sle_avoidance", "curve_distance",
    "lerw_sle_comparison",
]
