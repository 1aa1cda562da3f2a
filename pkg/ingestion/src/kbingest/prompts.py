"""Prompt text and generation parameters, kept verbatim in one place.

These strings are logged byte-for-byte into the provenance sidecars, so
do not reflow or "fix" them.
"""
from __future__ import annotations

SUBGOAL_PROMPT = (
    "Extract multiple detailed noun phrases from the following instruction, "
    "list them numerically, each noun phrase must be written in English and "
    "end with a period, do not output other information"
)

CAPTION_PROMPT = "a photo of"

IMAGE_PROMPT_TEMPLATE = "[subgoal] of the indoor environment in real estate"

# fixed text-to-image sampling configuration
GENERATION_PARAMS = {
    "steps": 4,
    "guidance_scale": 0.0,
    "max_sequence_length": 256,
    "width": 1024,
    "height": 1024,
    "seed": 0,
    "dtype": "bfloat16",
}


def render_image_prompt(phrase: str) -> str:
    return IMAGE_PROMPT_TEMPLATE.replace("[subgoal]", phrase)


def subgoal_message(instruction: str) -> str:
    """Full message sent to the phrase-extraction model."""
    return SUBGOAL_PROMPT + "\n" + instruction
