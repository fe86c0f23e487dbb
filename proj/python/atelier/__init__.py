"""Labanotation scores, similarity scoring and the artist feedback loop."""

import json

from ._core import (
    CELLS,
    Error,
    canonicalize,
    cell_index,
    check_oracle,
    check_vocab,
    default_config,
    dot_similarity,
    encode_motion,
    histogram,
    lint_log,
    run_session,
    sc_score,
    standard_vocab,
    tv_distance,
    violations,
)
from . import _core

__all__ = [
    "CELLS", "Error", "canonicalize", "cell_index", "check_oracle", "check_vocab", "default_config",
    "dot_similarity", "encode_motion", "fit_cyclic", "histogram", "lint_log", "parse_log", "replay_feedback",
    "run_session", "sc_score", "scripted_feedback", "standard_vocab", "tv_distance", "violations",
]


def scripted_feedback(oracle, score):
    return json.loads(_core.scripted_feedback(oracle, score))


def replay_feedback(log):
    return json.loads(_core.replay_feedback(log))


def fit_cyclic(signal, sample_rate, k_max):
    return json.loads(_core.fit_cyclic(list(signal), sample_rate, k_max))


def parse_log(log):
    """Events of a JSONL session log as dicts."""
    return [json.loads(line) for line in log.splitlines() if line]
