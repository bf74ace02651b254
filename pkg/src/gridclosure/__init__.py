"""gridclosure: a deterministic egocentric-gridworld harness that scores
terminal commitment (report correctness) separately from world-state
completion."""

from .agents import PolicyConfig, plan_task, run_policy
from .analytics import (
    aggregate,
    belief_lag,
    compare_feedback,
    false_success_buckets,
    post_attainment_distribution,
    rescore_counterfactual,
)
from .contract import (
    Action,
    BudgetState,
    DialogueHistory,
    Invalid,
    ReportContent,
    normalize_status,
    parse_action,
    render_prompt,
    step_gate,
)
from .engine import RunConfig, run_episode
from .episodes import (
    FAMILIES,
    FAMILY_SPECS,
    EpisodeEvaluator,
    EpisodeSpec,
    FamilySpec,
    ProgressSample,
    SuccessSpec,
)
from .generate import (
    GenerationError,
    PackManifest,
    build_pack,
    generate_episode,
    load_pack,
    validate_episode,
    write_pack,
)
from .settlement import Settlement, StepRecord, Trace, match_report, settle
from .world import (
    AgentState,
    FeedbackEvent,
    Frame,
    GridScene,
    SceneObject,
    apply_interact,
    apply_look,
    apply_navigate,
    render_frame,
    render_view,
    visible_cells,
)

__version__ = "0.1.0"
