"""Hold-out evaluation, comparisons and trace analyses."""

from .analysis import (Heatmap, SaturationResult, context_correlations, rho_heatmap, saturation_analysis,
                       spearman)
from .suite import REFERENCE_DELTAS, StaticAgent, SuiteMetrics, compare, evaluate_suite

__all__ = [
    "REFERENCE_DELTAS", "Heatmap", "SaturationResult", "StaticAgent", "SuiteMetrics", "compare",
    "context_correlations", "evaluate_suite", "rho_heatmap", "saturation_analysis", "spearman",
]
