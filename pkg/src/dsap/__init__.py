"""Dynamic string-averaging projections, their superiorized version, and
certificates for when superiorization cannot beat plain feasibility-seeking."""

from .diagnostics import (Certificate, FejerReport, Inequality, LipschitzWitness,
                          NegativeConditionInput, distance_lower_bound, fejer_analyze,
                          lemma_precondition, levelset_verdict, lipschitz_check,
                          necessary_init_check, negative_certificate, verify_claim_i)
from .geometry import (Ball, Box, CallbackSet, ConvexSet, Halfspace, Hyperplane, SetFamily,
                       Singleton, as_vector, contains, distance, max_violation, project)
from .harness import (ComparisonReport, ExperimentConfig, compare, generate_halfspace_problem,
                      reproduce_example)
from .problem import load_problem, parse_problem
from .strings import (PlanConstraints, PlanStage, StringPlan, apply_stage, apply_string,
                      dsap_run, is_admissible)
from .superiorize import (Linear, Norm1, Norm2Sq, Objective, PerturbationSchedule, QuadraticDiag,
                          UserObjective, direction, inner_loop, schedule_head, schedule_total,
                          superiorized_run)
from .trace import RunTrace, StopRule

__version__ = "0.1.0"
