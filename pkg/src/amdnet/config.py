"""Run configuration: an INI file with one section per pipeline stage.

Values are Python literals (``grid = [4, 4]``, ``gamma.enabled = true``).
Unknown sections/keys and out-of-range values are rejected with the
offending ``section.key`` in the message.  Every key records whether its
value came from the defaults or from the user's file.
"""

from __future__ import annotations

import ast
import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, NamedTuple

from .augment import AugmentConfig
from .exceptions import ConfigError
from .model import ModelSpec, TrainConfig
from .preprocess import EnhanceParams
from .quality import QualityThresholds

CONFIG_ENV = "AMDNET_CONFIG"


class Key(NamedTuple):
    default: Any
    check: Callable[[Any], bool]
    help: str
    published: bool = False  # default taken from the published setup


def _num(lo=None, hi=None, lo_open=False, integer=False):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return False
        if integer and not isinstance(v, int):
            return False
        if lo is not None and (v <= lo if lo_open else v < lo):
            return False
        return hi is None or v <= hi
    return check


def _opt_num(**kw):
    inner = _num(**kw)
    return lambda v: v is None or inner(v)


def _pair(lo=None, hi=None, integer=False):
    item = _num(lo, hi, integer=integer)
    return lambda v: isinstance(v, (list, tuple)) and len(v) == 2 and all(map(item, v)) and v[0] <= v[1]


def _int_list(v):
    return isinstance(v, (list, tuple)) and len(v) > 0 and all(
        isinstance(i, int) and not isinstance(i, bool) and i >= 1 for i in v)


_bool = lambda v: isinstance(v, bool)  # noqa: E731
_str = lambda v: isinstance(v, str)  # noqa: E731

SCHEMA: dict[str, dict[str, Key]] = {
    "dataset": {
        "root": Key("", _str, "dataset root holding one folder per class"),
        "test_fraction": Key(0.2, _num(0, 1, lo_open=True), "held-out fraction per class", True),
        "seed": Key(0, _num(0, integer=True), "split seed"),
        "assess": Key(True, _bool, "run the quality gate while scanning"),
        "include_rejected": Key(False, _bool, "keep images the quality gate rejects"),
    },
    "quality": {
        "min_lum": Key(20.0, _opt_num(lo=0, hi=255), "minimum mean luminance"),
        "max_lum": Key(235.0, _opt_num(lo=0, hi=255), "maximum mean luminance"),
        "min_contrast": Key(15.0, _opt_num(lo=0), "minimum luminance std"),
        "min_sharp": Key(15.0, _opt_num(lo=0), "minimum contour sharpness"),
    },
    "clahe": {
        "clip_limit": Key(2.0, _num(0, lo_open=True), "CLAHE clip limit", True),
        "grid": Key([8, 8], _pair(1, integer=True), "CLAHE tile grid (rows, cols)", True),
    },
    "gamma": {
        "enabled": Key(False, _bool, "apply gamma after CLAHE"),
        "value": Key(1.0, _num(0, lo_open=True), "gamma (<1 darkens, >1 brightens)"),
    },
    "augment": {
        "enabled": Key(True, _bool, "augment training images"),
        "p_hflip": Key(0.5, _num(0, 1), "horizontal flip probability", True),
        "p_vflip": Key(0.5, _num(0, 1), "vertical flip probability", True),
        "brightness_delta": Key([-0.1, 0.1], _pair(-1, 1), "brightness delta range", True),
        "contrast_factor": Key([0.8, 1.2], _pair(0), "contrast factor range", True),
        "saturation_factor": Key([0.8, 1.2], _pair(0), "saturation factor range", True),
        "hue_delta": Key([-0.05, 0.05], _pair(-0.5, 0.5), "hue rotation range (turns)"),
        "shift_fraction": Key([-0.1, 0.1], _pair(-0.99, 0.99), "translation range per axis"),
    },
    "model": {
        "input_size": Key(256, _num(1, integer=True), "network input side length", True),
        "filters": Key([32, 64, 128, 256, 512, 512], _int_list, "filters per conv block", True),
        "convs_per_block": Key([2, 2, 2, 2, 3, 3], _int_list, "convolutions per block", True),
        "dropout": Key(0.2, _num(0, 0.999), "dropout rate after each block", True),
        "lstm_units": Key(512, _num(1, integer=True), "LSTM hidden width"),
        "fc_units": Key(64, _num(1, integer=True), "dense layer width", True),
    },
    "train": {
        "batch_size": Key(32, _num(1, integer=True), "mini-batch size", True),
        "epochs": Key(100, _num(0, integer=True), "training epochs", True),
        "learning_rate": Key(0.001, _num(0, lo_open=True), "initial Adam learning rate", True),
        "decay_rate": Key(0.95, _num(0, 1, lo_open=True), "LR decay per decay_step", True),
        "decay_step": Key(1, _num(1, integer=True), "epochs per LR decay step", True),
        "seed": Key(0, _num(0, integer=True), "master training seed"),
        "recalibrate_bn": Key(True, _bool, "re-estimate batch-norm statistics after training"),
        "accuracy_floor": Key(0.0, _num(0, 1), "eval exits non-zero below this accuracy"),
    },
    "output": {
        "dir": Key("runs", _str, "directory for artifacts"),
    },
}


def _parse_value(raw: str):
    text = raw.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def defaults(cls) -> "RunConfig":
        values, prov = {}, {}
        for sec, keys in SCHEMA.items():
            for k, spec in keys.items():
                values[f"{sec}.{k}"] = spec.default
                prov[f"{sec}.{k}"] = "default"
        return cls(values, prov)

    def __getitem__(self, dotted: str):
        return self.values[dotted]

    def set(self, dotted: str, value, source: str = "user") -> None:
        sec, _, key = dotted.partition(".")
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(value, int) and not isinstance(value, bool) and isinstance(SCHEMA[sec][key].default, float):
            value = float(value)
        if not SCHEMA[sec][key].check(value):
            raise ConfigError(f"invalid value for {dotted}: {value!r} ({SCHEMA[sec][key].help})")
        self.values[dotted] = value
        self.provenance[dotted] = source

    # -- typed views ---------------------------------------------------

    def model_spec(self) -> ModelSpec:
        v = self.values
        return ModelSpec(v["model.input_size"], 3, tuple(v["model.filters"]),
                         tuple(v["model.convs_per_block"]), v["model.dropout"],
                         v["model.lstm_units"], v["model.fc_units"], 4)

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(v["train.batch_size"], v["train.epochs"], v["train.learning_rate"],
                           v["train.decay_rate"], v["train.decay_step"], v["train.seed"],
                           v["augment.enabled"], v["train.recalibrate_bn"])

    def augment_config(self) -> AugmentConfig | None:
        if not self.values["augment.enabled"]:
            return None
        v = self.values
        return AugmentConfig(v["augment.p_hflip"], v["augment.p_vflip"],
                             tuple(v["augment.brightness_delta"]), tuple(v["augment.contrast_factor"]),
                             tuple(v["augment.saturation_factor"]), tuple(v["augment.hue_delta"]),
                             tuple(v["augment.shift_fraction"]))

    def enhance_params(self) -> EnhanceParams:
        v = self.values
        gamma = v["gamma.value"] if v["gamma.enabled"] else None
        return EnhanceParams(v["clahe.clip_limit"], tuple(v["clahe.grid"]), gamma,
                             v["model.input_size"])

    def thresholds(self) -> QualityThresholds:
        v = self.values
        return QualityThresholds(v["quality.min_lum"], v["quality.max_lum"],
                                 v["quality.min_contrast"], v["quality.min_sharp"])


def parse_config(path=None) -> RunConfig:
    """Read ``path`` (or ``$AMDNET_CONFIG``) over the defaults.

    ``None`` with no environment variable gives the defaults.  An empty
    file also gives the defaults.
    """
    cfg = RunConfig.defaults()
    if path is None:
        path = os.environ.get(CONFIG_ENV)
        if not path:
            return cfg
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]")
        for key, raw in parser.items(sec):
            cfg.set(f"{sec}.{key}", _parse_value(raw))
    return cfg


def describe_keys() -> str:
    """One line per key: name, default, origin of the default, help."""
    lines = []
    for sec, keys in SCHEMA.items():
        for k, spec in keys.items():
            origin = "published" if spec.published else "chosen"
            lines.append(f"  {sec}.{k} = {spec.default!r}  [{origin}] {spec.help}")
    return "\n".join(lines)
