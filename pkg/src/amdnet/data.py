"""Directory-per-class dataset ingestion, stratified splitting and batching."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .augment import AugmentConfig, augment, sample_rng
from .exceptions import ConfigError, DatasetError
from .preprocess import EnhanceParams, enhance_pipeline, read_image, to_network_input
from .quality import QualityThresholds, assess_quality

logger = logging.getLogger(__name__)

# alphabetical, so one-hot indices do not depend on discovery order
CLASSES = ("AMD", "Cataract", "Diabetes", "Normal")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    decision: str = "accept"
    source: str = ""

    @property
    def class_index(self) -> int:
        return CLASSES.index(self.label)


@dataclass
class Manifest:
    entries: list
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise DatasetError("manifest paths must be unique")
        bad = sorted({e.label for e in self.entries} - set(CLASSES))
        if bad:
            raise DatasetError(f"labels outside the class set: {bad}")

    def __len__(self) -> int:
        return len(self.entries)

    def counts(self) -> dict[str, int]:
        out = {c: 0 for c in CLASSES}
        for e in self.entries:
            out[e.label] += 1
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "label", "decision", "source"])
            for e in self.entries:
                w.writerow([e.path, e.label, e.decision, e.source])

    @classmethod
    def from_csv(cls, path) -> "Manifest":
        with open(path, newline="") as fh:
            return cls([ManifestEntry(r["path"], r["label"], r["decision"], r["source"])
                        for r in csv.DictReader(fh)])


def one_hot(indices, n_classes: int = len(CLASSES)) -> np.ndarray:
    return np.eye(n_classes)[np.asarray(indices, dtype=int)]


def scan_dataset(root, thresholds: QualityThresholds | None = None, assess: bool = False,
                 include_rejected: bool = False, source: str | None = None) -> Manifest:
    """Index ``root/<Class>/*.{png,jpg,jpeg}``.

    With ``assess=True`` every image goes through the quality gate; rejected
    images are dropped unless ``include_rejected`` is set.  Files that fail
    to decode are skipped and listed in ``Manifest.skipped``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    unknown = [p.name for p in subdirs if p.name not in CLASSES]
    if unknown:
        raise DatasetError(f"unknown class folder(s) under {root}: {', '.join(unknown)}")
    source = root.name if source is None else source
    entries, skipped = [], []
    for label in CLASSES:
        cdir = root / label
        files = sorted(p for p in cdir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) if cdir.is_dir() else []
        if not files:
            warnings.warn(f"class folder {label!r} is empty or missing under {root}")
        for f in files:
            decision = "accept"
            if assess:
                try:
                    report = assess_quality(read_image(f), thresholds)
                except Exception as exc:  # PIL raises a zoo of error types
                    logger.warning("skipping unreadable %s: %s", f, exc)
                    skipped.append(str(f))
                    continue
                decision = report.decision
                if not report.accepted and not include_rejected:
                    continue
            entries.append(ManifestEntry(str(f), label, decision, source))
    if skipped:
        logger.warning("skipped %d unreadable file(s)", len(skipped))
    m = Manifest(entries, skipped)
    logger.info("scanned %s: %s", root, m.counts())
    return m


def stratified_split(manifest: Manifest, test_fraction: float = 0.2, seed: int = 0):
    """Per-class random split; each class gives ``round(fraction * count)`` test items."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for label in CLASSES:
        items = sorted((e for e in manifest.entries if e.label == label), key=lambda e: e.path)
        n_test = math.floor(test_fraction * len(items) + 0.5)
        order = rng.permutation(len(items))
        test_idx = set(order[:n_test].tolist())
        for i, e in enumerate(items):
            (test if i in test_idx else train).append(e)
    return Manifest(train), Manifest(test)


def write_split(path, test: Manifest, seed: int, test_fraction: float) -> None:
    record = {"seed": seed, "test_fraction": test_fraction,
              "test_paths": [e.path for e in test.entries]}
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def read_split(path, manifest: Manifest):
    """Rebuild ``(train, test)`` from a split file written by :func:`write_split`."""
    record = json.loads(Path(path).read_text())
    test_paths = set(record["test_paths"])
    train = [e for e in manifest.entries if e.path not in test_paths]
    test = [e for e in manifest.entries if e.path in test_paths]
    return Manifest(train), Manifest(test)


class ImageBatches:
    """Batches of enhanced, optionally augmented images from manifest entries.

    Each image is loaded as RGB, augmented (``train=True`` only), run through
    :func:`amdnet.preprocess.enhance_pipeline`, replicated to three channels
    and scaled to [0, 1].  Shuffling and augmentation depend only on
    ``(seed, epoch)`` and the entry's position in the manifest.
    """

    def __init__(self, split: Manifest, batch_size: int = 32, seed: int = 0, train: bool = True,
                 augment_config: AugmentConfig | None = None, enhance: EnhanceParams | None = None,
                 shuffle: bool | None = None):
        if len(split) == 0:
            raise DatasetError("cannot batch an empty split")
        if batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        self.entries = list(split.entries)
        self.batch_size = batch_size
        self.seed = seed
        self.train = train
        self.augment_config = augment_config
        self.enhance = EnhanceParams() if enhance is None else enhance
        self.shuffle = train if shuffle is None else shuffle
        self.skipped = 0

    def __len__(self) -> int:
        return len(self.entries)

    def order(self, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self.entries))
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.entries))

    def load(self, index: int, epoch: int) -> np.ndarray:
        img = read_image(self.entries[index].path)
        if self.train and self.augment_config is not None:
            img = augment(img, sample_rng(self.seed, epoch, index), self.augment_config)
        return to_network_input(enhance_pipeline(img, self.enhance))

    def batches(self, epoch: int = 0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        order = self.order(epoch)
        for start in range(0, len(order), self.batch_size):
            xs, ys = [], []
            for i in order[start:start + self.batch_size]:
                try:
                    xs.append(self.load(int(i), epoch))
                except (OSError, ValueError) as exc:
                    self.skipped += 1
                    logger.warning("skipping %s: %s", self.entries[i].path, exc)
                    continue
                ys.append(self.entries[i].class_index)
            if not xs:
                raise DatasetError(f"every image in batch starting at {start} failed to load")
            yield np.stack(xs), one_hot(ys)


def batch_iterator(split: Manifest, batch_size: int = 32, seed: int = 0, epoch: int = 0,
                   train: bool = True, augment_config: AugmentConfig | None = None,
                   enhance: EnhanceParams | None = None):
    """Yield ``(X, Y_onehot)`` batches of ``split`` for one epoch."""
    return ImageBatches(split, batch_size, seed, train, augment_config, enhance).batches(epoch)
