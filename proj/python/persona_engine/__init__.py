"""Python access to the persona engine's native metric, reward, and parsing kernels."""

import json

from . import _persona
from ._persona import (
    PersonaError,
    __version__,
    bleu_reward,
    cohen_kappa,
    f1_reward,
    grpo_objective,
    group_advantages,
    improvement_rate,
    kl_estimate,
    normalize_series,
)

__all__ = [
    "PersonaError",
    "__version__",
    "bleu_reward",
    "cohen_kappa",
    "compute_metrics",
    "decide_cold_start",
    "f1_reward",
    "grpo_objective",
    "group_advantages",
    "improvement_rate",
    "kl_estimate",
    "normalize_series",
    "parse_tagged_output",
]


def compute_metrics(series, accuracy=None):
    """Full metrics report (AL, IR, N-IR, R2, N-R2) for one alignment series, as a dict."""
    return json.loads(_persona.metrics_json(list(series), accuracy))


def parse_tagged_output(raw):
    """Parse raw policy text into {"delta": ..., "format_report": ...}."""
    return json.loads(_persona.parse_tagged_output_json(raw))


def decide_cold_start(profile_view, question, tau=0.5):
    """Answer-or-query decision for `question` given a profile view dict."""
    return _persona.decide_cold_start(json.dumps(profile_view), question, tau)
