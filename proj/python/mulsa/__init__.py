"""Python front end to the mulsa native core."""

import json

from . import _core
from ._core import (
    Environment,
    MulsaError,
    checkpoint_hash,
    collect,
    decode_action,
    encode_action,
    mel_spectrogram,
)

__all__ = [
    "Environment",
    "MulsaError",
    "checkpoint_hash",
    "collect",
    "decode_action",
    "encode_action",
    "episode_summary",
    "evaluate",
    "mel_spectrogram",
    "outcome",
    "state",
    "train",
]


def outcome(env):
    return json.loads(env._outcome())


def state(env):
    return json.loads(env._state())


def episode_summary(directory):
    return json.loads(_core._episode_summary(str(directory)))


def train(data, out, **kwargs):
    """Behavioral cloning; returns the per-epoch metrics."""
    return json.loads(_core.train(str(data), str(out), **kwargs))


def evaluate(checkpoint, **kwargs):
    """Closed-loop evaluation report as a dict."""
    return json.loads(_core.evaluate(str(checkpoint), **kwargs))
