"""Toolkit for inspecting model-based RL studies built from observational
treatment trajectories: tabular MDP estimation, policy solving, seeded
roll-outs, surprise-based trajectory selection, bias diagnostics, and a
reviewer-facing service over reproducible study bundles."""

from .cohort import (
    Cohort,
    CohortError,
    GroundTruthMDP,
    IngestResult,
    RawStep,
    RawTrajectory,
    generate_synthetic,
    ingest,
    sample_paths,
    split,
    write_cohort,
)
from .discretize import (
    ActionGrid,
    DiscreteTrajectory,
    DiscretizeError,
    StateClustering,
    assign_state,
    discretize_cohort,
    encode_action,
    fit_actions,
    fit_states,
    paths_to_discrete,
)
from .mdp import BehaviorPolicy, MdpError, RewardModel, TransitionModel, estimate, termination_prob
from .planner import NO_TREATMENT, PlannerError, TargetPolicy, evaluate_policy, solve
from .rollout import DEAD_END, TRUNCATED, RolloutError, SimTrajectory, batch, simulate
from .inspection import (
    InspectionCase,
    InspectionError,
    OutcomeSurprise,
    TreatmentSurprise,
    annotate,
    build_case,
    surprising_outcomes,
    surprising_treatments,
)
from .diagnostics import (
    DischargeTreatmentReport,
    LengthReport,
    RareActionReport,
    TerminationBiasReport,
    discharge_treatment_report,
    length_report,
    rare_action_report,
    termination_bias,
)
from .bundle import BundleError, CorruptionError, Study, StudyConfig, load, save
from .seeding import substream_seed

__version__ = "0.1.0"
