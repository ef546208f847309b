"""Automatic gesture annotation with sliding-window CTC models."""

__version__ = "0.1.0"

from .annotator import AnnotationRecord, aggregate_overlaps, annotate, to_label_sequence
from .backbone import ModelParams, backward, ce_loss_and_grad, forward, init_params
from .core import FrameStream, GestureSpan, WindowPlan, plan_windows, validate_stream
from .ctc import (
    SpikeEvent,
    brute_force_ctc,
    ctc_grad,
    ctc_loss,
    extend_with_blanks,
    extract_spikes,
    greedy_decode,
)
from .estimator import GestureAnnotator
from .metrics import EvalReport, accuracy, levenshtein, match_and_score, nnle
from .synth import SynthConfig, gen_dataset, gen_stream
from .training import Checkpoint, TrainConfig, train

__all__ = [
    "AnnotationRecord",
    "Checkpoint",
    "EvalReport",
    "FrameStream",
    "GestureAnnotator",
    "GestureSpan",
    "ModelParams",
    "SpikeEvent",
    "SynthConfig",
    "TrainConfig",
    "WindowPlan",
    "accuracy",
    "aggregate_overlaps",
    "annotate",
    "backward",
    "brute_force_ctc",
    "ce_loss_and_grad",
    "ctc_grad",
    "ctc_loss",
    "extend_with_blanks",
    "extract_spikes",
    "forward",
    "gen_dataset",
    "gen_stream",
    "greedy_decode",
    "init_params",
    "levenshtein",
    "match_and_score",
    "nnle",
    "plan_windows",
    "to_label_sequence",
    "train",
    "validate_stream",
]
