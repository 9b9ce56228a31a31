"""Experiment configuration: JSON schema validation and task wiring."""

import json
import math
from dataclasses import dataclass, field

from .data import Dataset, gen_blobs, gen_parity_sequences, load_cifar10_binary, subset, train_test_split
from .nn import build_cnn, build_rnn
from .tensor import Rng, reshape


class UsageError(Exception):
    """The command line or a config file was used incorrectly."""


NORMALIZERS = ("none", "bn", "ln", "bln")
TASKS = ("cnn-synthetic", "rnn-synthetic", "cnn-cifar10")
FLAG_KEYS = ("e_b", "std_b", "e_f", "std_f")

# fixed task geometry; runs are parameterized only through ExperimentConfig
BLOBS_PER_CLASS = 120
BLOBS_CLASSES = 2
BLOBS_DIM = 36            # reshaped to 1x6x6 images for the CNN
BLOBS_SEPARATION = 10.0
PARITY_SAMPLES = 300
PARITY_LENGTH = 6
PARITY_VOCAB = 3
RNN_HIDDEN = 32
TEST_FRACTION = 1.0 / 3.0
VALIDATION_FRACTION = 0.1  # held out of the training pool for config search

_DEFAULTS = {
    "epsilon": 1e-4,
    "momentum": 0.9,
    "train_fraction": 0.2,
    "learning_rate": 1e-3,
    "flags": {k: False for k in FLAG_KEYS},
    "paths": {},
}
_REQUIRED = ("task", "normalizer", "batch_size", "epochs", "seed")
_ALL_KEYS = set(_REQUIRED) | set(_DEFAULTS)


@dataclass
class ExperimentConfig:
    task: str
    normalizer: str
    batch_size: int
    epochs: int
    seed: int
    epsilon: float = 1e-4
    momentum: object = 0.9
    train_fraction: float = 0.2
    learning_rate: float = 1e-3
    flags: dict = field(default_factory=lambda: {k: False for k in FLAG_KEYS})
    paths: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "task": self.task,
            "normalizer": self.normalizer,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "momentum": self.momentum,
            "train_fraction": self.train_fraction,
            "learning_rate": self.learning_rate,
            "flags": dict(self.flags),
            "paths": dict(self.paths),
        }


def _positive_int(raw, key, minimum=1):
    if not isinstance(raw, int) or isinstance(raw, bool) or raw < minimum:
        raise UsageError(f"config key '{key}' must be an integer >= {minimum}, got {raw!r}")
    return raw


def _check_momentum(raw):
    if raw == "cumulative":
        return raw
    if isinstance(raw, (int, float)) and not isinstance(raw, bool) and 0.0 < raw <= 1.0:
        return float(raw)
    raise UsageError(f"config key 'momentum' must be in (0, 1] or 'cumulative', got {raw!r}")


def _check_flags(raw):
    if not isinstance(raw, dict):
        raise UsageError("config key 'flags' must be an object")
    for key in raw:
        if key not in FLAG_KEYS:
            raise UsageError(f"unknown config key: 'flags.{key}'")
    out = {}
    for key in FLAG_KEYS:
        value = raw.get(key, False)
        if not isinstance(value, bool):
            raise UsageError(f"config key 'flags.{key}' must be a boolean, got {value!r}")
        out[key] = value
    return out


def _check_paths(raw, task):
    if not isinstance(raw, dict):
        raise UsageError("config key 'paths' must be an object")
    for key, value in raw.items():
        if key not in ("train", "test"):
            raise UsageError(f"unknown config key: 'paths.{key}'")
        if not isinstance(value, str):
            raise UsageError(f"config key 'paths.{key}' must be a string")
    if task == "cnn-cifar10":
        for key in ("train", "test"):
            if key not in raw:
                raise UsageError(f"task 'cnn-cifar10' requires config key 'paths.{key}'")
    return dict(raw)


def validate_experiment(raw, multi=False):
    """Build an ExperimentConfig (or a list of them when multi runs are allowed).

    Unknown keys are a hard error naming the offending key. With multi=True
    the 'normalizer' and 'batch_size' keys may hold lists; one config per
    (normalizer, batch size) pair is returned, normalizer-major.
    """
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    for key in raw:
        if key not in _ALL_KEYS:
            raise UsageError(f"unknown config key: '{key}'")
    for key in _REQUIRED:
        if key not in raw:
            raise UsageError(f"missing config key: '{key}'")

    task = raw["task"]
    if task not in TASKS:
        raise UsageError(f"config key 'task' must be one of {list(TASKS)}, got {task!r}")

    normalizers = raw["normalizer"]
    batch_sizes = raw["batch_size"]
    if not multi:
        if isinstance(normalizers, list) or isinstance(batch_sizes, list):
            raise UsageError("config keys 'normalizer' and 'batch_size' must be scalars here")
        normalizers = [normalizers]
        batch_sizes = [batch_sizes]
    else:
        if not isinstance(normalizers, list):
            normalizers = [normalizers]
        if not isinstance(batch_sizes, list):
            batch_sizes = [batch_sizes]
        if len(normalizers) < 2:
            raise UsageError("compare needs at least two normalizers in 'normalizer'")
        if len(set(normalizers)) != len(normalizers):
            raise UsageError("config key 'normalizer' lists a duplicate entry")

    for name in normalizers:
        if name not in NORMALIZERS:
            raise UsageError(f"config key 'normalizer' must be one of {list(NORMALIZERS)}, got {name!r}")
    batch_sizes = [_positive_int(b, "batch_size") for b in batch_sizes]

    epochs = _positive_int(raw["epochs"], "epochs")
    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise UsageError(f"config key 'seed' must be an integer, got {seed!r}")

    epsilon = raw.get("epsilon", _DEFAULTS["epsilon"])
    if not isinstance(epsilon, (int, float)) or isinstance(epsilon, bool) or epsilon <= 0:
        raise UsageError(f"config key 'epsilon' must be a positive number, got {epsilon!r}")
    momentum = _check_momentum(raw.get("momentum", _DEFAULTS["momentum"]))
    train_fraction = raw.get("train_fraction", _DEFAULTS["train_fraction"])
    if (
        not isinstance(train_fraction, (int, float))
        or isinstance(train_fraction, bool)
        or not 0.0 < train_fraction <= 1.0
    ):
        raise UsageError(f"config key 'train_fraction' must be in (0, 1], got {train_fraction!r}")
    learning_rate = raw.get("learning_rate", _DEFAULTS["learning_rate"])
    if not isinstance(learning_rate, (int, float)) or isinstance(learning_rate, bool) or learning_rate <= 0:
        raise UsageError(f"config key 'learning_rate' must be a positive number, got {learning_rate!r}")
    flags = _check_flags(raw.get("flags", {}))
    paths = _check_paths(raw.get("paths", {}), task)

    configs = [
        ExperimentConfig(
            task=task,
            normalizer=name,
            batch_size=bs,
            epochs=epochs,
            seed=seed,
            epsilon=float(epsilon),
            momentum=momentum,
            train_fraction=float(train_fraction),
            learning_rate=float(learning_rate),
            flags=flags,
            paths=paths,
        )
        for name in normalizers
        for bs in batch_sizes
    ]
    return configs if multi else configs[0]


def load_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc


def seed_plan(seed):
    """Named sub-seeds derived from the experiment seed in a fixed order."""
    r = Rng(seed)
    return {
        "data": r.next_u64(),
        "split": r.next_u64(),
        "validation": r.next_u64(),
        "train_subset": r.next_u64(),
        "init": r.next_u64(),
        "epochs": r.next_u64(),
    }


def prepare_task(config):
    """Deterministic (train, validation, test) splits for a config.

    The validation slice is held out of the training pool before the
    train_fraction subset is drawn, so the searcher never scores samples
    the model trained on.
    """
    plan = seed_plan(config.seed)
    if config.task == "cnn-synthetic":
        full = gen_blobs(BLOBS_PER_CLASS, BLOBS_CLASSES, BLOBS_DIM, BLOBS_SEPARATION, plan["data"])
        side = int(math.isqrt(BLOBS_DIM))
        full = Dataset(reshape(full.inputs, (len(full), 1, side, side)), full.labels, full.num_classes)
        pool, test = train_test_split(full, TEST_FRACTION, plan["split"])
    elif config.task == "rnn-synthetic":
        full = gen_parity_sequences(PARITY_SAMPLES, PARITY_LENGTH, PARITY_VOCAB, plan["data"])
        pool, test = train_test_split(full, TEST_FRACTION, plan["split"])
    else:
        pool = load_cifar10_binary(config.paths["train"])
        test = load_cifar10_binary(config.paths["test"])
    rest, validation = train_test_split(pool, VALIDATION_FRACTION, plan["validation"])
    train = subset(rest, config.train_fraction, plan["train_subset"])
    return train, validation, test


def build_network_for_config(config, rng):
    """Network for the config's task with the configured normalizer."""
    if config.task == "cnn-synthetic":
        side = int(math.isqrt(BLOBS_DIM))
        return build_cnn(1, side, side, BLOBS_CLASSES, config.normalizer, rng,
                         config.epsilon, config.momentum)
    if config.task == "rnn-synthetic":
        return build_rnn(PARITY_VOCAB, RNN_HIDDEN, 2, config.normalizer, rng,
                         config.epsilon, config.momentum)
    return build_cnn(3, 32, 32, 10, config.normalizer, rng,
                     config.epsilon, config.momentum)


def input_shape_for_task(task):
    """Per-sample input shape the task's network expects."""
    if task == "cnn-synthetic":
        side = int(math.isqrt(BLOBS_DIM))
        return (1, side, side)
    if task == "rnn-synthetic":
        return (PARITY_LENGTH, PARITY_VOCAB)
    return (3, 32, 32)
