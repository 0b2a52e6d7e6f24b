"""Tangent surfaces swept by the geodesics of an affine connection.

Given Christoffel symbols (expression strings, a metric, or a numeric
callback) and a curve, this package constructs the surface ruled by the
geodesics tangent to the curve, evaluates its frontal data, and classifies
the singularities along the curve (cuspidal edge, folded umbrella,
swallowtail, open swallowtail, fold) by covariant-derivative rank criteria,
cross-validated against the characteristic-function route.  A deterministic
CLI (`tansurf`) exposes classification, scanning, meshing, Monte-Carlo type
statistics, and a bundled validation suite.
"""

from .connection import Connection, levi_civita, symmetrize, torsion_tensor
from .covariant import (
    CurveSpec,
    DirectedCurveSpec,
    TypeSignature,
    curve_tower,
    curve_tower_values,
    directed_frame,
    frame_tower_values,
    frame_type,
    nabla_type,
)
from .classify import (
    Characteristic,
    Classification,
    SingularityKind,
    characteristic_field,
    characteristic_psi,
    classify_point,
    classify_via_psi,
    degenerate_diagnostic,
    scan_curve,
    torsionless_test,
)
from .expr import EvaluationError, Expression, ParseError, parse
from .geodesic import (
    GeodesicEscape,
    GeodesicJet,
    IntegrationError,
    geodesic_states,
    geodesic_states_batch,
    integrate_geodesic,
    jet_coefficients,
    series_approx,
)
from .harness import (
    ProblemError,
    ProblemFile,
    directed_genericity_trial,
    genericity_trial,
    load_problem,
    run_classify,
    run_mesh,
    run_scan,
    run_verify,
)
from .surface import FrontalFrame, SurfaceMesh, TangentSurface

__version__ = "0.1.0"

__all__ = [
    "Connection",
    "levi_civita",
    "symmetrize",
    "torsion_tensor",
    "CurveSpec",
    "DirectedCurveSpec",
    "TypeSignature",
    "curve_tower",
    "curve_tower_values",
    "directed_frame",
    "frame_tower_values",
    "frame_type",
    "nabla_type",
    "Characteristic",
    "Classification",
    "SingularityKind",
    "characteristic_field",
    "characteristic_psi",
    "classify_point",
    "classify_via_psi",
    "degenerate_diagnostic",
    "scan_curve",
    "torsionless_test",
    "EvaluationError",
    "Expression",
    "ParseError",
    "parse",
    "GeodesicEscape",
    "GeodesicJet",
    "IntegrationError",
    "geodesic_states",
    "geodesic_states_batch",
    "integrate_geodesic",
    "jet_coefficients",
    "series_approx",
    "ProblemError",
    "ProblemFile",
    "directed_genericity_trial",
    "genericity_trial",
    "load_problem",
    "run_classify",
    "run_mesh",
    "run_scan",
    "run_verify",
    "FrontalFrame",
    "SurfaceMesh",
    "TangentSurface",
    "__version__",
]
