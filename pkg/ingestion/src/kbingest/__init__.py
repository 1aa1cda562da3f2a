"""Offline knowledge-bank construction pipeline.

Calls pretrained-model backends (phrase extraction, captioning,
text-to-image, embedding) and emits feature banks in the navigation
engine's binary format, with verbatim prompt/parameter provenance.
"""

__version__ = "0.1.0"

from .backends import BackendConfig, Backends, connect
from .captions import caption_panoramas
from .errors import (
    BackendTimeout,
    BackendUnavailable,
    DimensionDrift,
    EmptyCaption,
    GenerationFailure,
    IngestError,
    UnparseableResponse,
)
from .images import generate_goal_images
from .pipeline import embed_and_pack
from .prompts import (
    CAPTION_PROMPT,
    GENERATION_PARAMS,
    IMAGE_PROMPT_TEMPLATE,
    SUBGOAL_PROMPT,
    render_image_prompt,
)
from .subgoals import extract_subgoals, parse_numbered_list, read_instruction_corpus
