"""trendlab: multiplicity-adjusted trend tests for dose-response proportions.

Simultaneous regression fits under several dose metameters (and link
functions), joint calibration through stacked influence contributions, and
max-test adjusted p-values with simultaneous confidence bounds.
"""

__version__ = "0.1.0"

from .contrasts import ContrastMatrix, contrast_components, williams_contrasts
from .data import (DoseResponseTable, ScaledDoses, WeightedTable,
                   add_pseudo_counts, parse_table, scale_doses)
from .glm import GlmFit, InfluenceMatrix, fit_glm, influence_matrix, pearson_dispersion
from .mmm import MmmJoint, StackEntry, stack_models
from .mvn import (MvnProblem, backend_in_use, equicoordinate_quantile, mvn_prob,
                  validate_correlation)
from .trendtest import (CaTestResult, TrendComponent, TrendReport, ca_test,
                        double_max_test, joint_regression_williams_test,
                        overdispersed_trend_test, tukey_trend_test)

__all__ = [
    "ContrastMatrix", "contrast_components", "williams_contrasts",
    "DoseResponseTable", "ScaledDoses", "WeightedTable",
    "add_pseudo_counts", "parse_table", "scale_doses",
    "GlmFit", "InfluenceMatrix", "fit_glm", "influence_matrix", "pearson_dispersion",
    "MmmJoint", "StackEntry", "stack_models",
    "MvnProblem", "backend_in_use", "equicoordinate_quantile", "mvn_prob",
    "validate_correlation",
    "CaTestResult", "TrendComponent", "TrendReport", "ca_test",
    "double_max_test", "joint_regression_williams_test",
    "overdispersed_trend_test", "tukey_trend_test",
]
