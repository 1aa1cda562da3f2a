"""Panorama captioning through the caption-model backend."""
from __future__ import annotations

from pathlib import Path
from typing import Iterable

from .backends import Backends
from .bankio import append_provenance
from .errors import EmptyCaption
from .prompts import CAPTION_PROMPT


def caption_panoramas(view_images: Iterable[bytes], backends: Backends,
                      provenance_path: str | Path | None = None) -> list[str]:
    """One caption per sub-view image, in input order.

    Duplicates are kept; deduplication (if any) happens at bank-build
    time, not here.
    """
    captions = []
    records = []
    for i, image in enumerate(view_images):
        caption = backends.caption.caption(image, CAPTION_PROMPT)
        if not caption or not caption.strip():
            raise EmptyCaption(f"caption backend returned empty output for view {i}")
        captions.append(caption)
        records.append({
            "entry_id": f"view-{i:06d}",
            "prompt": CAPTION_PROMPT,
            "backend": backends.caption.name,
            "parameters": {},
            "caption": caption,
        })
    if provenance_path is not None:
        append_provenance(provenance_path, records)
    return captions
