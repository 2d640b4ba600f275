"""Numerical Finsler geometry: connections, curvature, conformal changes,
the Schwarzian tensor and Mobius-invariant curves.

Everything is computed from the squared norm F^2 by exact truncated Taylor
jets, so derivatives carry no finite-difference error.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .jets import Jet, JetBasis, TangentSample, fd_oracle, jet_eval, tangent_variables
from .fields import ScalarField, coords, parse as parse_field
from .metrics import MetricSpec, Euclidean, Riemannian, ConformalScale, Randers
from .metrics import euclidean, round_sphere, minkowski_randers, randers
from .core import (FinslerJets, connection_bundle, point_connection, fundamental_tensor, cartan_tensor,
                   spray, formal_christoffel, riemann_curvature, ricci, flag_curvature,
                   berwald_residual, einstein_residual, connection_invariants)
from .conformal import (ConformalChange, conformal_deltas, predicted_christoffel, torsion_terms,
                        cartan_change_terms, conformal_christoffel_check, conformal_spray_check,
                        cartan_covariant_change_check, conformal_metric_check)
from .schwarzian import (hessian, schwarzian_tensor, riemannian_schwarzian, mobius_residual,
                         cocycle_terms, cocycle_check, classic_schwarzian, schwarzian_1d)
from .curves import (CurveTrajectory, integrate_geodesic, integrate_geodesic_circle, orthonormal_frame,
                     frenet_curvatures, circle_preservation_experiment, projective_parameter_solve,
                     numeric_schwarzian, projective_invariance_check, geodesic_ricci_profile)
