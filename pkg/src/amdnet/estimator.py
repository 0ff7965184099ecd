"""scikit-learn compatible wrappers around the enhancement chain, the
quality gate and the network."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import model as M
from .data import CLASSES
from .exceptions import ValidationError
from .preprocess import EnhanceParams, enhance_pipeline, to_network_input
from .quality import QualityThresholds, assess_quality
from .validation import check_batch, check_labels, check_rgb_images


class FundusEnhancer(TransformerMixin, BaseEstimator):
    """LAB lightness -> CLAHE -> optional gamma -> resize.

    ``transform`` returns an N x size x size x 3 float batch in [0, 1] ready
    for :class:`AMDNet23Classifier` (the enhanced plane is replicated over
    three channels), or N x size x size uint8 planes when
    ``network_input=False``.
    """

    def __init__(self, clip_limit=2.0, grid=(8, 8), gamma=None, size=256, network_input=True):
        self.clip_limit = clip_limit
        self.grid = grid
        self.gamma = gamma
        self.size = size
        self.network_input = network_input

    def fit(self, X=None, y=None):
        self.params_ = EnhanceParams(self.clip_limit, tuple(self.grid), self.gamma, self.size)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        out = [enhance_pipeline(img, self.params_) for img in check_rgb_images(X)]
        if self.network_input:
            return np.stack([to_network_input(o) for o in out])
        return np.stack([o.plane for o in out])


class QualityGate(BaseEstimator):
    """Contour/illumination/contrast gate.

    ``transform`` gives an N x 3 matrix of (sharpness, illumination,
    contrast); ``predict`` gives a boolean accept mask.
    """

    def __init__(self, min_lum=20.0, max_lum=235.0, min_contrast=15.0, min_sharp=15.0):
        self.min_lum = min_lum
        self.max_lum = max_lum
        self.min_contrast = min_contrast
        self.min_sharp = min_sharp

    def fit(self, X=None, y=None):
        self.thresholds_ = QualityThresholds(self.min_lum, self.max_lum, self.min_contrast,
                                             self.min_sharp)
        return self

    def reports(self, X):
        check_is_fitted(self, "thresholds_")
        return [assess_quality(img, self.thresholds_) for img in check_rgb_images(X)]

    def transform(self, X):
        return np.array([[r.sharpness, r.illumination, r.contrast] for r in self.reports(X)])

    def predict(self, X):
        return np.array([r.accepted for r in self.reports(X)])


class AMDNet23Classifier(ClassifierMixin, BaseEstimator):
    """CNN-LSTM fundus classifier trained with Adam and per-epoch LR decay.

    ``X`` is an N x input_size x input_size x 3 float batch in [0, 1]; ``y``
    holds class labels (names or integers).  The defaults are the full-size
    network and the published training schedule.
    """

    def __init__(self, input_size=256, filters=(32, 64, 128, 256, 512, 512),
                 convs_per_block=(2, 2, 2, 2, 3, 3), dropout=0.2, lstm_units=512, fc_units=64,
                 batch_size=32, epochs=100, learning_rate=0.001, decay_rate=0.95, decay_step=1,
                 recalibrate_bn=True, random_state=0):
        self.input_size = input_size
        self.filters = filters
        self.convs_per_block = convs_per_block
        self.dropout = dropout
        self.lstm_units = lstm_units
        self.fc_units = fc_units
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.decay_rate = decay_rate
        self.decay_step = decay_step
        self.recalibrate_bn = recalibrate_bn
        self.random_state = random_state

    def _spec(self, n_classes: int) -> M.ModelSpec:
        return M.ModelSpec(self.input_size, 3, tuple(self.filters), tuple(self.convs_per_block),
                           self.dropout, self.lstm_units, self.fc_units, n_classes)

    def _train_config(self) -> M.TrainConfig:
        return M.TrainConfig(self.batch_size, self.epochs, self.learning_rate, self.decay_rate,
                             self.decay_step, self.random_state, augment=False,
                             recalibrate_bn=self.recalibrate_bn)

    def _encode(self, y) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.classes_)}
        try:
            return np.array([index[v] for v in y])
        except KeyError as exc:
            raise ValidationError(f"unknown label {exc.args[0]!r}") from None

    def fit(self, X, y, validation_data=None):
        X = check_batch(X, self.input_size)
        y = check_labels(y, len(X))
        labels = set(y.tolist())
        # keep the pinned class order whenever the labels are class names
        if labels <= set(CLASSES):
            self.classes_ = np.array(CLASSES)
        else:
            self.classes_ = np.unique(y)
        n_classes = len(self.classes_)
        self.state_, self.shape_trace_ = M.build_model(self._spec(n_classes), self.random_state)
        val = None
        if validation_data is not None:
            Xv, yv = validation_data
            val = (check_batch(Xv, self.input_size), np.eye(n_classes)[self._encode(yv)])
        self.history_ = M.fit(self.state_, (X, np.eye(n_classes)[self._encode(y)]),
                              self._train_config(), val)
        return self

    def partial_fit(self, X, y, epochs: int = 1):
        """Continue training the existing state for ``epochs`` more epochs."""
        check_is_fitted(self, "state_")
        X = check_batch(X, self.input_size)
        y = check_labels(y, len(X))
        cfg = self._train_config()
        cfg.epochs = epochs
        n = len(self.classes_)
        self.history_ += M.fit(self.state_, (X, np.eye(n)[self._encode(y)]), cfg)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "state_")
        X = check_batch(X, self.state_.spec.input_size)
        return M.predict(self.state_, X, self.batch_size)[0]

    def predict(self, X):
        check_is_fitted(self, "state_")
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def save(self, path) -> None:
        check_is_fitted(self, "state_")
        M.save_checkpoint(self.state_, path)

    @classmethod
    def from_checkpoint(cls, path, classes=CLASSES) -> "AMDNet23Classifier":
        state = M.load_checkpoint(path)
        s = state.spec
        clf = cls(input_size=s.input_size, filters=s.filters, convs_per_block=s.convs_per_block,
                  dropout=s.dropout, lstm_units=s.lstm_units, fc_units=s.fc_units,
                  random_state=state.seed)
        clf.state_ = state
        clf.shape_trace_ = M.shape_trace(s)
        clf.classes_ = np.array(classes[: s.n_classes])
        clf.history_ = []
        return clf
