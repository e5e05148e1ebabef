"""Python access to the chunksel selection core, toy models and CLI."""

import json

from ._core import (
    Error,
    ToyModel,
    ValidationError,
    __version__,
    answers_match,
    compute_ppl,
    extract_answer,
    normalize_answer,
    run_cli,
    schedule_counts,
    select_index,
)
from ._core import read_dataset_json as _read_dataset_json


def read_dataset(path):
    """Records of a dataset.jsonl file as dicts, validated by the C++ reader."""
    return [json.loads(line) for line in _read_dataset_json(str(path))]


__all__ = [
    "Error",
    "ToyModel",
    "ValidationError",
    "__version__",
    "answers_match",
    "compute_ppl",
    "extract_answer",
    "normalize_answer",
    "read_dataset",
    "run_cli",
    "schedule_counts",
    "select_index",
]
