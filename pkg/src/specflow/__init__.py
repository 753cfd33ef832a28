"""Spectral flow, bifurcation sets and geodesic spectral indices at desk scale."""

from .errors import *  # noqa: F401,F403
from .functional_family import (
    BifurcationRecord,
    FunctionalFamily,
    find_bifurcation_on_path,
    hessian_path,
    newton_critical_point,
    registry,
    registry_names,
)
from .geodesics import (
    GeodesicRecord,
    IndexRecord,
    MetricFamily,
    christoffel,
    conjugate_points,
    geodesic_family_scan,
    geodesic_shoot,
    geometry,
    riemann_curvature,
    second_variation_fem,
    spectral_index,
)
from .operator_core import (
    SignCompactOperator,
    SymmetricMatrix,
    classify_essential,
    eigendecompose,
    morse_index,
    relative_morse_index,
    relative_morse_index_sc,
)
from .parameter_scan import (
    ParameterChart,
    ScanResult,
    SeamWitness,
    bifurcation_mask,
    components_and_labels,
    degeneracy_map,
    edge_sfl_labels,
    scan_family,
)
from .spectral_flow import (
    OperatorPath,
    SflResult,
    concatenate,
    homotopy_check,
    krasnoselskii_path,
    reverse,
    sfl_crossings,
    sfl_endpoint,
)

__version__ = "0.1.0"
