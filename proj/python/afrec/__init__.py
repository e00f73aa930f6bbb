"""Python access to the afrec compatibility model.

Results that the C++ side reports as JSON come back as plain dicts.
"""

import json

from . import _afrec
from ._afrec import AfrecError, ModelError, auc, bpr_loss, hit_rate

__all__ = [
    "AfrecError",
    "ModelError",
    "auc",
    "bpr_loss",
    "corpus_summary",
    "evaluate",
    "explain",
    "hit_rate",
    "synth",
    "train",
]


def synth(out, **kwargs):
    """Writes a synthetic corpus under ``out`` and returns the manifest path."""
    return _afrec.synth(str(out), **kwargs)


def corpus_summary(manifest):
    return json.loads(_afrec.corpus_summary(str(manifest)))


def train(manifest, out, **kwargs):
    """Trains, writes the checkpoint to ``out`` and returns the epoch log."""
    return json.loads(_afrec.train(str(manifest), str(out), **kwargs))


def evaluate(checkpoint, manifest, seed=0, negatives=100):
    return json.loads(_afrec.evaluate(str(checkpoint), str(manifest), seed, negatives))


def explain(checkpoint, top, bottom, top_category, bottom_category, top_n=3, out_dir=None):
    out = None if out_dir is None else str(out_dir)
    return json.loads(
        _afrec.explain(str(checkpoint), str(top), str(bottom), top_category, bottom_category, top_n, out)
    )
