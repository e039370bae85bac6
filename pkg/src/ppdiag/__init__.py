"""Spatial point process diagnostics: simulation, pseudo-likelihood fitting,
edge-corrected summaries, compensators, residuals and Monte Carlo envelopes.
"""

from .geometry import (BucketGrid, PixelGrid, Window, coverage_count_field,
                       disc_window_area, erode, neighbors_within, unit_square,
                       union_discs_area)
from .pattern import (BorderSplit, PointPattern, close_pair_count,
                      nn_distance, nn_distances, split_border)
from .models import (AreaInteraction, Covariate, FirstOrder, GeyerSat,
                     GibbsModel, SoftCore, Strauss, Triplet, cond_intensity,
                     delta_potential, monomial, polynomial_covariates,
                     potential, second_order_cond_intensity,
                     softcore_cutoff)
from .simulate import McmcConfig, sample_gibbs, sample_gibbs_many, sample_poisson
from .fit import (FitError, FittedModel, GibbsMPLE, QuadratureScheme,
                  default_dummy_resolution, fit_mple, make_quadrature)
from .tables import FunctionTable, default_r_grid
from .summaries import f_hat, g_hat, isotropic_weight, k_hat, translation_weight
from .diagnostics import (VA, VG, VS, VT, FhatIncrement, GhatLocal,
                          IntegrationRule, KhatLocal, VGSat, compensator,
                          innovation, mc_innovation_variance,
                          poincare_variance, pseudo_compensator,
                          pseudo_residual, pseudo_sum, residual, smooth,
                          standardized, stat_by_name, uniform_rule)
from .trend import (CovariateField, GaussianKernel, UniformDiscKernel,
                    cox_score_test, smoothed_residual_field, threshold_profile)
from .envelopes import EnvelopeSpec, envelope

__version__ = "0.1.0"
