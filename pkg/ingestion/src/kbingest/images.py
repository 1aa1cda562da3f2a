"""Goal-image generation through the text-to-image backend.

Generation parameters are pinned (4 sampling steps, guidance 0.0,
1024x1024, max sequence length 256, seed 0) and logged verbatim with
every image. When an output directory is given the run is resumable:
images whose content-addressed file already exists are read back
instead of regenerated.
"""
from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Sequence

from .backends import Backends
from .bankio import append_provenance
from .errors import GenerationFailure
from .prompts import GENERATION_PARAMS, IMAGE_PROMPT_TEMPLATE, render_image_prompt


def phrase_key(phrase: str) -> str:
    return hashlib.sha256(phrase.encode("utf-8")).hexdigest()[:16]


def generate_goal_images(phrases: Sequence[str], backends: Backends,
                         out_dir: str | Path | None = None,
                         params: dict | None = None,
                         provenance_path: str | Path | None = None) -> list[bytes]:
    """One image per phrase, in order; returns the encoded image bytes."""
    params = dict(GENERATION_PARAMS if params is None else params)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    images = []
    records = []
    for phrase in phrases:
        prompt = render_image_prompt(phrase)
        target = out_dir / f"{phrase_key(phrase)}.png" if out_dir is not None else None
        if target is not None and target.exists():
            images.append(target.read_bytes())
            continue
        image = backends.image.generate(prompt, params)
        if not image:
            raise GenerationFailure(f"empty image for phrase {phrase!r}")
        if target is not None:
            target.write_bytes(image)
        images.append(image)
        records.append({
            "entry_id": phrase_key(phrase),
            "phrase": phrase,
            "prompt": prompt,
            "template": IMAGE_PROMPT_TEMPLATE,
            "backend": backends.image.name,
            "parameters": params,
        })
    if provenance_path is not None and records:
        append_provenance(provenance_path, records)
    return images
