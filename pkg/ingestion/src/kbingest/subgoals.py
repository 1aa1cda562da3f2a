"""Goal-phrase extraction through the phrase-model backend."""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Sequence

from .backends import Backends
from .bankio import append_provenance
from .errors import UnparseableResponse
from .prompts import SUBGOAL_PROMPT, subgoal_message

_NUMBERED = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")


def read_instruction_corpus(path: str | Path) -> list[tuple[str, str]]:
    """JSON-lines corpus of {id, text} records, in file order."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        out.append((str(obj["id"]), str(obj["text"])))
    return out


def parse_numbered_list(raw: str) -> list[str]:
    """Pull phrases out of a numbered-list response, in order, without the
    trailing periods the prompt requests."""
    phrases = []
    for line in raw.splitlines():
        m = _NUMBERED.match(line)
        if m:
            phrase = m.group(1).rstrip()
            phrases.append(phrase[:-1].rstrip() if phrase.endswith(".") else phrase)
    if not phrases:
        raise UnparseableResponse("no numbered lines in model response", raw=raw)
    return phrases


def extract_subgoals(instructions: Sequence[str], backends: Backends,
                     provenance_path: str | Path | None = None) -> dict[str, list[str]]:
    """Map each instruction to its ordered goal phrases."""
    out: dict[str, list[str]] = {}
    records = []
    for instruction in instructions:
        raw = backends.phrase.complete(subgoal_message(instruction))
        try:
            phrases = parse_numbered_list(raw)
        except UnparseableResponse:
            if provenance_path is not None:
                append_provenance(provenance_path, [{
                    "entry_id": instruction,
                    "prompt": SUBGOAL_PROMPT,
                    "input": instruction,
                    "backend": backends.phrase.name,
                    "parameters": {},
                    "error": "unparseable",
                    "raw": raw,
                }])
            raise
        out[instruction] = phrases
        records.append({
            "entry_id": instruction,
            "prompt": SUBGOAL_PROMPT,
            "input": instruction,
            "backend": backends.phrase.name,
            "parameters": {},
            "phrases": phrases,
        })
    if provenance_path is not None:
        append_provenance(provenance_path, records)
    return out
