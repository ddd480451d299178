//! Convex integrands `g: R² → R` and their convex-analytic operations:
//! recession function, proximal map, Moreau envelope, Yosida operator,
//! minimal-norm subgradient, and sampled detectors for conditions (A), (B).

mod conditions;
mod integrand;
mod prox;

pub use conditions::{
    check_condition_a, check_condition_b, collinear, convexity_violations, growth_constants, sample_pairs,
    ConditionReport, GrowthReport,
};
pub use integrand::{
    ConvexIntegrand, CustomIntegrand, Growth, IntegrandKind, RadialProfile, RecessionEstimate, ScalarField,
    VectorField,
};
pub use prox::{default_lambda_schedule, SubgradientSelection};
