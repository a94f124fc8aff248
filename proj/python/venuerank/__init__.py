"""Venue recommendation for scholarly manuscripts.

Thin wrapper over the native ``_venuerank`` extension.
"""

import json

from ._venuerank import (
    ConfigError,
    EmptyTextError,
    RequestError,
    baseline_clean,
    cosine,
    enhanced_clean,
    grad_check,
    hitrate_at_k,
    macro_accuracy_at_k,
    max_len,
    split_camel_case,
    strip_latex,
)
from ._venuerank import Recommender as _NativeRecommender
from ._venuerank import cli as _cli

__all__ = [
    "ConfigError",
    "EmptyTextError",
    "RequestError",
    "Recommender",
    "baseline_clean",
    "cli",
    "cosine",
    "enhanced_clean",
    "grad_check",
    "hitrate_at_k",
    "macro_accuracy_at_k",
    "max_len",
    "split_camel_case",
    "strip_latex",
]


def cli(*args):
    """Run a CLI subcommand in-process. Returns (exit_code, stdout, stderr)."""
    return _cli([str(a) for a in args])


class Recommender:
    """Loaded checkpoint. ``recommend`` returns the same dict as POST /recommend."""

    def __init__(self, path):
        self._native = _NativeRecommender(str(path))

    @property
    def venue_ids(self):
        return self._native.venue_ids

    @property
    def model_id(self):
        return self._native.model_id

    def recommend(self, title="", abstract="", keywords=(), k=None):
        if isinstance(keywords, str):
            keywords = [w.strip() for w in keywords.split(";") if w.strip()]
        return json.loads(self._native.recommend_json(title, abstract, list(keywords), k))
