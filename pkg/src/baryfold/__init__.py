"""Barycenter-method estimates on model spaces of nonpositive curvature, checked numerically."""
from .curvature import (CurvatureForm, SpectralSummary, averaged_tr_k_bound, check_negative_kricci,
                        curvature_form, ric_k, spectral_summary, tr_k)
from .jacobi import (JacobiError, JacobiSolution, calculus_lemma_check, hess_busemann_numeric,
                     solve_jacobi_bvp, stable_hessian, verify_key_estimate)
from .measures import (BoundaryMeasure, MeasureError, VisualFamily, atom_measure, mix, normalize,
                       sphere_quadrature, visual_measure)
from .models import (BallIsometry, HorosphericalSpace, HyperbolicSpace, ModelError, ModelSpace,
                     ProductSpace, UnsupportedBoundaryError, model_from_descriptor)
from .natural_map import (Composition, Isometry, NaturalMapSetup, PerturbedIdentity, SourceMeasure,
                          convolve, entropy_estimate, identity_map, jacobian_natural_map,
                          map_from_descriptor, natural_map, source_measure)
from .straightening import (BarycenterResult, DegenerateMeasureError, FormPair, SimplexSpec,
                            barycenter, d_straighten, forms, jacobian_chain_check, ratio_bound_constant,
                            ratio_envelope, solve_barycenter, straighten)

__version__ = "0.1.0"
