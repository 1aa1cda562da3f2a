"""Knowledge-augmented vision-and-language navigation engine.

Operates entirely on precomputed embedding banks: binary feature banks,
exact top-k cosine retrieval, gated attention augmentors with verified
gradients, a discrete graph navigation simulator and the standard
trajectory metric suite.
"""

__version__ = "0.1.0"

from .feature_bank import (
    BankManifest,
    FeatureBank,
    KnowledgeEntry,
    ValidationReport,
    create_bank,
    load_bank,
    save_bank,
    synth_bank,
    validate_bank,
)
from .fusion_math import (
    GateParams,
    GradReport,
    MhaParams,
    gate_fuse,
    grad_check,
    mha_forward,
    softmax_rows,
)
from .goal_aware import (
    GaaParams,
    InstructionRecord,
    Subgoal,
    embed_subgoals,
    encode_instruction,
    gaa_forward,
    make_instruction,
)
from .knowledge_aug import (
    KaParams,
    KnowledgeContext,
    condense_knowledge,
    correlation_matrix,
    ka_forward,
)
from .metrics import (
    DispersionComparison,
    DispersionStats,
    EpisodeGoal,
    MetricsReport,
    compare_dispersion,
    dispersion,
    evaluate,
    percent_change,
)
from .nav_sim import (
    EnvGraph,
    EpisodeConfig,
    KnowledgeBanks,
    PlantSpec,
    Trajectory,
    geodesic_distances,
    load_env,
    plant_env,
    run_episode,
    score_actions,
)
from .params import (
    PipelineParams,
    load_pipeline_params,
    neutral_pipeline_params,
    random_pipeline_params,
    save_pipeline_params,
)
from .retrieval import (
    RetrievalHit,
    ViewKnowledge,
    cosine_topk,
    index_image_knowledge,
    normalize,
    retrieve_view_knowledge,
)
