"""Maximum trend test for tumor incidences across dose groups.

Several dose-scaled slope tests and Williams-type contrasts are fitted as
marginal binomial GLMs on the same animals. Their joint normal distribution
comes from stacked per-unit score contributions, and the maximum statistic
is referred to that distribution.
"""
from .data import (
    AnalysisConfig,
    AnimalDataset,
    AnimalRecord,
    EndpointDataset,
    GroupedTable,
    apply_pseudo_counts,
    parse_animal_csv,
    parse_endpoint_csv,
    parse_grouped_csv,
)
from .errors import NumericalError, TrendMaxError, ValidationError
from .family import MarginalModelFamily, build_family, make_scaling, williams_contrasts
from .inference import JointInference, joint_covariance, max_test, test_family
from .multi import CombinedFamily, combine, endpoint_families, polyk_families
from .mvn import mvn_equicoordinate
from .polyk import adjusted_table, polyk_weights
from .report import Report, build_report, render_report

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig", "AnimalDataset", "AnimalRecord", "CombinedFamily", "EndpointDataset",
    "GroupedTable", "JointInference", "MarginalModelFamily", "NumericalError", "Report",
    "TrendMaxError", "ValidationError", "adjusted_table", "apply_pseudo_counts",
    "build_family", "build_report", "combine", "endpoint_families", "joint_covariance",
    "make_scaling", "max_test", "mvn_equicoordinate", "parse_animal_csv",
    "parse_endpoint_csv", "parse_grouped_csv", "polyk_families", "polyk_weights",
    "render_report", "test_family", "williams_contrasts",
]
