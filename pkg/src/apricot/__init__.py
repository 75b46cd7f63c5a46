"""Anonymous pricing versus optimal revenue in large k-unit markets."""

from .dists import (
    Market,
    PiecewiseDistribution,
    RevenueCurve,
    TriangularAgent,
    check_quasi_regular,
    check_regular,
    decompose_to_triangles,
    epsilon_of_market,
    flatten_negative_virtual,
    iron,
    reduce_to_triangles,
)
from .mechanisms import (
    ap_optimal,
    ap_revenue_analytic,
    ear,
    example1_market,
    gap_report,
    lower_bound_instance,
    opt_revenue_triangular,
    spp_revenue,
)

__version__ = "0.1.0"
