"""Disagreement-weighted knowledge distillation.

Configs are plain dicts with the same keys as the JSON files under configs/.
"""

import json
import os

from ._core import (
    ConfigError,
    DataError,
    NumericalError,
    PersistenceError,
    cross_entropy,
    dcs_weights,
    kd_loss,
    matthews_correlation,
    predict,
    report,
    total_loss,
    weighted_kd_loss,
)
from ._core import Session as _Session
from ._core import normalize_config as _normalize

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "PersistenceError",
    "Session",
    "cross_entropy",
    "dcs_weights",
    "kd_loss",
    "load_config",
    "matthews_correlation",
    "normalize_config",
    "predict",
    "report",
    "total_loss",
    "weighted_kd_loss",
]


def normalize_config(config):
    """Validated copy of a config dict with every default filled in."""
    return json.loads(_normalize(json.dumps(config)))


def load_config(path):
    with open(path) as f:
        return normalize_config(json.load(f))


class Session(_Session):
    def __init__(self, config):
        if isinstance(config, (str, os.PathLike)):
            config = load_config(config)
        super().__init__(json.dumps(config))

    @property
    def config(self):
        return json.loads(self.config_json)
