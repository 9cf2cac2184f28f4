"""Uncertainty-guided decoding: entropy halting plus latent-space refinement.

The heavy lifting lives in the `_pregu` extension; this package re-exports it
and adds a small JSON convenience around the pipeline entry point.
"""

import json as _json

from ._pregu import (
    PreguError,
    ProjectionOperator,
    RunConfig,
    SurrogateState,
    TokenDistribution,
    ToyBackend,
    detect_halt,
    expected_improvement,
    extract_answer,
    fixture_boolean_dataset,
    fixture_numeric_dataset,
    make_projection,
    shannon_entropy,
)
from ._pregu import run_pregu as _run_pregu_json

__all__ = [
    "PreguError",
    "ProjectionOperator",
    "RunConfig",
    "SurrogateState",
    "TokenDistribution",
    "ToyBackend",
    "detect_halt",
    "expected_improvement",
    "extract_answer",
    "fixture_boolean_dataset",
    "fixture_numeric_dataset",
    "make_projection",
    "run_pregu",
    "shannon_entropy",
]


def run_pregu(question_id, question, backend, config):
    """Run the two-stage pipeline and return the question record as a dict."""
    return _json.loads(_run_pregu_json(question_id, question, backend, config))
