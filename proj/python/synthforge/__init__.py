"""Python access to the synthforge core.

Structured results come back as plain dicts and lists.
"""

import json as _json
import os as _os

from . import _core
from ._core import SynthforgeError, classify_termination, format_ids, overlong_rate, sha256, split_reasoning

__all__ = [
    "SynthforgeError",
    "classify_termination",
    "dedup",
    "efficiency",
    "format_ids",
    "graphs",
    "overlong_rate",
    "pack",
    "run",
    "sha256",
    "split_reasoning",
    "validate_config",
    "verify_answer_format",
    "verify_schema",
]


def graphs(spec, base_dir="."):
    """Builds named graphs from {"name": {"nodes": [...]}}; returns edges and validity per graph."""
    return _json.loads(_core.graphs(_json.dumps(spec), str(base_dir)))


def dedup(passages, threshold=0.7, dimension=256):
    """Hashing-embedder dedup of [{"id", "text", "recency_weight"?, "source_tag"?}]."""
    return _json.loads(_core.dedup(_json.dumps(list(passages)), threshold, dimension))


def pack(lengths, capacity=16384):
    return _json.loads(_core.pack([int(n) for n in lengths], capacity))


def efficiency(bins):
    return _core.efficiency(_json.dumps(bins))


def verify_answer_format(generation, format):
    return _json.loads(_core.verify_answer_format(generation, format))


def verify_schema(candidate, schema, max_chars=0):
    return _json.loads(_core.verify_schema(candidate, _json.dumps(schema), max_chars))


def validate_config(path):
    """Returns the config hash, or raises SynthforgeError."""
    return _core.validate_config(_os.fspath(path))


def run(config, stage="all", out=None):
    """Runs pipeline stages and returns the manifest."""
    return _json.loads(_core.run(_os.fspath(config), stage, "" if out is None else _os.fspath(out)))
