"""Piecewise queue-averaging congestion map as a 1-D dynamical system.

The package evaluates the map, locates its equilibrium, computes the
weight/gain/load bifurcation points, certifies global stability from
sufficient criteria, and reproduces bifurcation diagrams and shape-plane
robustness maps at desk scale.
"""

from .betafn import (
    BetaShape,
    cdf_log_deriv,
    curvature_factor,
    density_log_deriv,
    inv_reg_inc_beta,
    reg_inc_beta,
    reg_inc_beta_deriv,
)
from .equilibrium import (
    BifurcationPoint,
    Equilibrium,
    NoFixedPoint,
    NonConvergence,
    a1_bifurcation,
    a2_bifurcation,
    critical_point_beta1,
    fixed_point,
    fixed_point_beta1,
    w_bifurcation,
)
from .model import (
    ConstraintViolation,
    ControlParams,
    DerivedModel,
    MapRangeError,
    ModelError,
    SystemParams,
    derive_model,
    derive_model_at,
    envelope_bounds,
    f_prime,
    f_prime_left_theta_r,
    f_prime_right_theta_l,
    f_second,
    load_params,
    map_f,
    map_f_left_limit,
    params_from_config,
    params_to_config,
    w_inv,
    w_mon,
)
from .stability import (
    Condition,
    ConvexityCertificate,
    ConvexityRule,
    ConvexityStatus,
    InvarianceReport,
    ShapeClass,
    ShapeKind,
    StabilityCertificate,
    StabilityRule,
    UnsupportedShape,
    Verdict,
    certify_convexity,
    certify_global_stability,
    check_invariance,
    classify_shape,
)
from .sweep import (
    AttractorSummary,
    Orbit,
    SweepTable,
    bifurcation_diagram,
    get_preset,
    robustness_map,
    run_preset,
    simulate_orbit,
    summarize_attractor,
    write_csv,
    write_jsonl,
)

__version__ = "0.1.0"
