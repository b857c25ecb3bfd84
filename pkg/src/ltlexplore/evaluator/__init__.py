"""Exact policy evaluation, the model-based optimum and analytic probes."""

from .pmdp import DEFAULT_STATE_CAP, ExplicitPmdp, ProductTooLargeError, build_explicit_pmdp
from .satisfaction import (
    SatisfactionReport,
    accepting_bottom_mask,
    accepting_end_components,
    action_values,
    model_based_optimal,
    monte_carlo_satisfaction,
    policy_value,
    reach_probability,
    satisfaction_probability,
)

from .probes import (
    ImprovementInstance,
    PathProbe,
    ProbeInstance,
    PropositionReport,
    beta_of_path,
    eta_of_path,
    one_step_probe,
    proposition_check,
    trajectory_tree,
    verify_propositions,
)

__all__ = [
    "DEFAULT_STATE_CAP", "ExplicitPmdp", "ProductTooLargeError", "build_explicit_pmdp",
    "SatisfactionReport", "accepting_bottom_mask", "accepting_end_components", "action_values",
    "model_based_optimal", "monte_carlo_satisfaction", "policy_value", "reach_probability", "satisfaction_probability",
    "ImprovementInstance", "PathProbe", "ProbeInstance", "PropositionReport", "beta_of_path", "eta_of_path",
    "one_step_probe", "proposition_check", "trajectory_tree", "verify_propositions",
]
