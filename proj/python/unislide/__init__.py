"""Python bindings for the unislide workbench (mock backends only)."""

import json

from ._core import (
    UnislideError,
    ablation_configs,
    chunk_text,
    delta_percent,
    icc,
    pearson,
    reliability_std,
    run_cli,
    setting_avg,
    spearman,
    visual_integrity,
    weighted_state_mean,
)
from . import _core

__all__ = [
    "UnislideError",
    "ablation_configs",
    "aggregate_rankings",
    "chunk_text",
    "delta_percent",
    "evaluate",
    "generate",
    "icc",
    "load_task",
    "pearson",
    "reliability_std",
    "run_cli",
    "setting_avg",
    "spearman",
    "visual_integrity",
    "weighted_state_mean",
]


def load_task(path):
    """Validated task as a dict."""
    return json.loads(_core.load_task_json(str(path)))


def generate(task_path, out_dir, seed=0, config="g"):
    """Runs the generation pipeline with the simulated backend."""
    return json.loads(_core.generate_json(str(task_path), str(out_dir), seed, config))


def evaluate(task_path, deck_dir, seed=0, runs=3, jitter=0.0):
    """Score report for a deck, judged by the simulated backend."""
    return json.loads(_core.evaluate_json(str(task_path), str(deck_dir), seed, runs, jitter))


def aggregate_rankings(orderings):
    """Points table for a list of best-first method orderings."""
    return json.loads(_core.aggregate_rankings_json([list(o) for o in orderings]))
