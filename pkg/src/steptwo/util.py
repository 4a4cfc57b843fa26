"""Small shared helpers: deterministic RNG streams and JSON encoding."""

from __future__ import annotations

import dataclasses

import numpy as np


def sub_rng(seed, *key):
    """Independent Philox stream keyed by (seed, *key).

    Streams for different keys are statistically independent and reproducible
    across runs and platforms, which makes per-sample / per-path replay
    possible from (seed, index) alone.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def to_jsonable(obj):
    """Recursively convert dataclasses / ndarrays / numpy scalars for json.dump."""
    if hasattr(obj, "to_jsonable"):
        return obj.to_jsonable()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj
