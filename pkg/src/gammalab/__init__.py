"""Numerical laboratory for finite reversible Markov triples.

Builds discrete metric measure spaces, computes their difference calculus
(squared gradients, iterated forms, heat flow), extracts the optimal
curvature constant, and verifies the gradient-estimate / Bobkov /
isoperimetric inequality chain either exactly (where the statements are
exact on finite spaces) or with quantified convergence tolerances on
diffusion discretizations.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, FieldMismatchError, NumericError,
                     TripleFormatError, TripleValidationError)
from .triple import (MarkovTriple, as_field, cheeger_energy, gamma, gamma2,
                     gamma2_bilinear, gamma2_weak_form, integrate, l2_norm,
                     laplacian, lip_slope, path_metric, v_norm)
from .spaces import (SpaceSpec, build_complete, build_cycle, build_hypercube,
                     build_ou_chain, build_two_point, grid_coordinates,
                     load_triple, save_triple)
from .semigroup import (SpectralCache, build_cache, ergodic_defect,
                        gradient_estimate_margin, heat, heat_kernel,
                        heat_many, iota_coefficient, lip_gradient_diagnostic,
                        variance_regularization_margin)
from .curvature import (BeDiagnostics, CurvatureReport, be_diagnostics,
                        curvature_at, curvature_at_bruteforce,
                        curvature_global, curvature_global_bruteforce,
                        gamma2_form_at, gamma_form_at, rayleigh_quotient)
from .gauss import (ProfilePoint, c_alpha, c_alpha_prime, normal_cdf,
                    normal_pdf, normal_quantile, profile, profile_slope,
                    profile_value)
from .verifiers import (IntervalUnion, PhiTrace, PsiPartials, VerifierReport,
                        ZetaResult, bobkov_global, bobkov_local,
                        bv_corollary_margin, gaussian_interval_oracle,
                        isoperimetric_margin, perimeter, phi_trace, psi,
                        sigmoid_family, total_variation, truncate,
                        two_point_bobkov_margin, zeta_field, zeta_report)
