"""Sojourn functionals of long-range-dependent space-time Gaussian fields."""

from .covariance import (ConstantHook, ExponentialBaseline, GneitingML, GneitingMatern, GneitingRational,
                         NuggetHook, Separable, check_lrd_conditions, eval_cov, mittag_leffler_neg,
                         model_from_dict, model_to_dict)
from .fields import GridSpec, simulate_grid_exact, simulate_grid_fast
from .geomprob import BodySpec, ball_distance_density, convex_distance_density, sphere_chord_density
from .harness import ExperimentConfig, normality_tests, run_clt_experiment, run_reduction_check
from .hermite import chaos_coeffs, hermite_rank, indicator_coeffs
from .sojourn import ThresholdSpec, minkowski_m1, moving_threshold, normalized_stat
from .sphere import SpectralMeasure, SphericalSpectrum, angular_power_spectrum, simulate_sphere_field
from .variance import joint_exceed_prob, sigma2_ball, sigma2_body, sigma2_sphere

__version__ = "0.1.0"
