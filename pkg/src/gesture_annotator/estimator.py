"""scikit-learn style front end for training and annotation."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .annotator import adjusted_stream, annotate
from .metrics import evaluate
from .training import Checkpoint, TrainConfig, train
from .validation import check_dim, check_streams


class GestureAnnotator(BaseEstimator):
    """Sliding-window gesture annotator.

    ``fit`` trains the bidirectional recurrent backbone on labeled streams;
    ``predict`` returns, per stream, the detected gestures with their nucleus
    frames.

    Args:
        n_classes: number of gesture classes K; the model emits K + 1 columns.
        hidden: recurrent width per direction.
        window: window length L, used for training windows and for inference.
        step: window stride N, used for training windows and for inference.
        loss: ``"ctc"``, or ``"ce"`` for the per-frame cross-entropy baseline,
            which also switches decoding to heuristic segment merging.
        learning_rate, patience, max_epochs, batch_size, seed: training
            settings, see ``TrainConfig``.
        overlap: ``"mean"`` averages overlapping window predictions,
            ``"nearest"`` keeps the closest window's row.
        min_peak: spike threshold; the default 0 keeps every spike.
    """

    def __init__(self, n_classes=5, hidden=32, window=200, step=50, loss="ctc",
                 learning_rate=1e-4, patience=5, max_epochs=100, batch_size=8,
                 overlap="mean", min_peak=0.0, seed=0):
        self.n_classes = n_classes
        self.hidden = hidden
        self.window = window
        self.step = step
        self.loss = loss
        self.learning_rate = learning_rate
        self.patience = patience
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.overlap = overlap
        self.min_peak = min_peak
        self.seed = seed

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            n_classes=self.n_classes, hidden=self.hidden,
            learning_rate=self.learning_rate, patience=self.patience,
            max_epochs=self.max_epochs, batch_size=self.batch_size,
            window_len=self.window, step=self.step, seed=self.seed,
            loss_mode=self.loss,
        )

    def fit(self, X, y=None):
        """Train on labeled streams. ``y`` optionally supplies spans per stream."""
        streams = check_streams(X, y, n_classes=self.n_classes, require_spans=True)
        self.n_features_in_ = check_dim(streams)
        self.checkpoint_ = train(streams, self.train_config())
        self.params_ = self.checkpoint_.params
        return self

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, **overrides) -> "GestureAnnotator":
        """Wrap an existing checkpoint as a fitted estimator."""
        cfg = checkpoint.config
        est = cls(n_classes=cfg.n_classes, hidden=cfg.hidden, window=cfg.window_len,
                  step=cfg.step, loss=cfg.loss_mode, learning_rate=cfg.learning_rate,
                  patience=cfg.patience, max_epochs=cfg.max_epochs,
                  batch_size=cfg.batch_size, seed=cfg.seed)
        est.set_params(**overrides)
        est.checkpoint_ = checkpoint
        est.params_ = checkpoint.params
        est.n_features_in_ = checkpoint.params.input_dim
        return est

    def _streams_for_inference(self, X):
        check_is_fitted(self, "params_")
        streams = check_streams(X)
        check_dim(streams, self.n_features_in_)
        return streams

    def predict(self, X):
        """List of AnnotationRecord lists, one per stream, sorted by nucleus."""
        streams = self._streams_for_inference(X)
        return [annotate(self.params_, s, self.window, self.step, mode=self.loss,
                         overlap=self.overlap, min_peak=self.min_peak) for s in streams]

    def predict_proba(self, X):
        """Per-frame combined class probabilities, one ``(T, K + 1)`` array per stream."""
        streams = self._streams_for_inference(X)
        return [adjusted_stream(self.params_, s, self.window, self.step, self.overlap)
                for s in streams]

    def evaluate(self, X, y=None):
        """Full EvalReport on labeled streams."""
        streams = check_streams(X, y, n_classes=self.n_classes, require_spans=True)
        preds = self.predict(streams)
        return evaluate({s.stream_id: p for s, p in zip(streams, preds)}, streams)

    def score(self, X, y=None):
        """Mean per-stream edit-distance accuracy."""
        acc = self.evaluate(X, y).accuracy
        return float("nan") if acc is None else acc
