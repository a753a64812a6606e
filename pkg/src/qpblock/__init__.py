"""Numerical laboratory for quasi-periodic block Jacobi operators."""

from .cocycle import (GradedProduct, ScaledMatrix, SingularHoppingError, block_factorization_residual,
                      graded_monodromy, longrange_step, monodromy, symplectic_residual,
                      transfer_matrix)
from .finite_volume import (assemble, avg_log_f, detP_identity_residual, green, log_determinant,
                            poisson_residual)
from .lyapunov import (acceleration, avalanche_check, complexified_profile,
                       finite_scale_exponents, ldt_deviation_fraction)
from .models import (BlockModel, LongRangeModel, make_aa, make_ab, make_amo, make_coupled_harper,
                     make_dirac_harper, make_free, make_skewshift_dual, make_xy,
                     model_from_config, verify_f_periodicity, verify_J_symmetry)
from .spectra import (aa_square_residual, ab_square_residual, aubry_duality_gap,
                      duality_unitary_residual, finite_spectrum, graphene_large_eps_slope,
                      skewshift_avg_lyapunov, spectrum_union)
from .torus import ComplexPhase, Frequency, admissible_scales, epsilon_resonances
from .trig import TrigMatrixPolynomial
from .zeros import count_zeros, extract_laurent, pairing_check, riesz_ratio

__all__ = [name for name in dir() if not name.startswith("_")]
