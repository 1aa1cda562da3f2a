from kbingest.prompts import (
    CAPTION_PROMPT,
    GENERATION_PARAMS,
    IMAGE_PROMPT_TEMPLATE,
    SUBGOAL_PROMPT,
    render_image_prompt,
    subgoal_message,
)


def test_subgoal_prompt_verbatim():
    assert SUBGOAL_PROMPT == (
        "Extract multiple detailed noun phrases from the following instruction, "
        "list them numerically, each noun phrase must be written in English and "
        "end with a period, do not output other information"
    )


def test_caption_prompt():
    assert CAPTION_PROMPT == "a photo of"


def test_image_template_and_rendering():
    assert IMAGE_PROMPT_TEMPLATE == "[subgoal] of the indoor environment in real estate"
    assert render_image_prompt("red chair") == \
        "red chair of the indoor environment in real estate"


def test_generation_params_pinned():
    assert GENERATION_PARAMS["steps"] == 4
    assert GENERATION_PARAMS["guidance_scale"] == 0.0
    assert GENERATION_PARAMS["max_sequence_length"] == 256
    assert GENERATION_PARAMS["width"] == 1024
    assert GENERATION_PARAMS["height"] == 1024
    assert GENERATION_PARAMS["seed"] == 0


def test_subgoal_message_contains_prompt_prefix():
    msg = subgoal_message("walk to the sofa")
    assert msg.startswith(SUBGOAL_PROMPT)
    assert msg.endswith("walk to the sofa")
