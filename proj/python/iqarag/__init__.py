"""Retrieval-augmented image quality scoring."""

import json
import os

from ._core import *  # noqa: F401,F403
from ._core import (
    ValidationError,
    compare_json,
    report_csv,
    run_experiment_json,
)

__version__ = "0.1.0"


def run_experiment(config, base_dir=None):
    """Run an experiment from a config dict or a path to a JSON config; returns the report dict."""
    if isinstance(config, (str, os.PathLike)):
        path = os.fspath(config)
        with open(path, encoding="utf-8") as f:
            text = f.read()
        if base_dir is None:
            base_dir = os.path.dirname(os.path.abspath(path))
    else:
        text = json.dumps(config)
    return json.loads(run_experiment_json(text, os.fspath(base_dir or "")))


def compare(report):
    """Rag minus baseline SRCC/PLCC deltas per dataset, then AVG and COM."""
    return json.loads(compare_json(json.dumps(report)))


def to_csv(report):
    return report_csv(json.dumps(report))
