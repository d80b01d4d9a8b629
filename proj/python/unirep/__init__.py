"""Python access to the unirep C++ core."""

import json

from . import _unirep
from ._unirep import (
    ConfigError,
    DataError,
    DimensionError,
    Error,
    TrainingError,
    build_universe,
    coarse_loss,
    fine_loss,
    harmonic_open_set,
    mmjp_universe_bound,
    quantize,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "Error",
    "TrainingError",
    "build_universe",
    "coarse_loss",
    "default_config",
    "fine_loss",
    "generate",
    "harmonic_open_set",
    "main",
    "mmjp_universe_bound",
    "quantize",
    "run_cli",
    "run_pipeline",
    "validate_config",
]


def _dump(config):
    return "" if config is None else json.dumps(config)


def default_config():
    """Every configuration key with its default, as nested dicts."""
    return json.loads(_unirep.default_config_json())


def validate_config(config):
    """Raise ConfigError (naming the key) if the config is not usable."""
    _unirep.validate_config_json(_dump(config))


def generate(config=None):
    """Synthetic paired dataset: one dict per split with x_a, x_b, labels, sample_ids."""
    return _unirep.generate(_dump(config))


def run_pipeline(config=None):
    """generate -> pretrain -> open-set evaluation; returns {"report", "train_log"}."""
    return json.loads(_unirep.run_pipeline(_dump(config)))


def run_cli(args):
    """Run the command-line tool in-process; returns (exit_code, stdout, stderr)."""
    return _unirep.run_cli([str(a) for a in args])


def main():
    import sys

    code, out, err = run_cli(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
