"""Command-line interface: ``gen``, ``train``, ``annotate``, ``eval``, ``ablate``.

Settings resolve in three layers: built-in defaults, then a flat JSON file
given with ``--config``, then explicit flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .ablation import BENCHMARK_LR, run_ablation
from .annotator import annotate, read_annotations, write_annotations
from .core import read_streams, write_streams
from .exceptions import AnnotatorError, DimensionMismatch
from .metrics import evaluate, render_table
from .synth import SynthConfig, gen_dataset
from .training import Checkpoint, TrainConfig, train

logger = logging.getLogger("gesture_annotator")



@dataclass
class RunConfig:
    seed: int = 42
    n: int = 200
    start: int = 0
    n_test: int = 40
    classes: int = 5
    dim: int | None = None
    gestures_min: int = 3
    gestures_max: int = 5
    gesture_len_min: int = 20
    gesture_len_max: int = 50
    gap_min: int = 10
    gap_max: int = 60
    noise_sigma: float = 0.05
    hidden: int = 32
    window: int = 200
    step: int = 50
    loss: str = "ctc"
    lr: float | None = None
    patience: int = 5
    epochs: int = 100
    batch_size: int = 8
    overlap: str = "mean"
    min_peak: float = 0.0

    @classmethod
    def from_file(cls, path: str | Path) -> dict:
        try:
            obj = json.loads(Path(path).read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"config {path} is not valid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise ValueError(f"config {path} must be a flat JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ValueError(f"config {path}: unknown keys {unknown}")
        return obj

    def synth(self) -> SynthConfig:
        return SynthConfig(
            n_classes=self.classes, dim=4 if self.dim is None else self.dim,
            gestures_per_stream=(self.gestures_min, self.gestures_max),
            gesture_len=(self.gesture_len_min, self.gesture_len_max),
            gap_len=(self.gap_min, self.gap_max),
            noise_sigma=self.noise_sigma, seed=self.seed,
        )

    def train_config(self, default_lr: float = 1e-4) -> TrainConfig:
        return TrainConfig(
            n_classes=self.classes, hidden=self.hidden,
            learning_rate=default_lr if self.lr is None else self.lr,
            patience=self.patience, max_epochs=self.epochs, batch_size=self.batch_size,
            window_len=self.window, step=self.step, seed=self.seed, loss_mode=self.loss,
        )


def _add_common(p: argparse.ArgumentParser) -> None:
    # Defaults are None so that only explicitly given flags override the config file.
    p.add_argument("--config", help="flat JSON config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--classes", type=int, help="number of gesture classes K")
    p.add_argument("--dim", type=int, help="feature dimension D")
    p.add_argument("--window", type=int, help="window length L")
    p.add_argument("--step", type=int, help="window step N")
    p.add_argument("--out", help="output path")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", choices=("ctc", "ce"))
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--hidden", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gesture-annotator", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic JSONL stream file")
    _add_common(p)
    p.add_argument("--n", type=int, help="number of streams")
    p.add_argument("--start", type=int, help="first stream index (for held-out sets)")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)

    p = sub.add_parser("train", help="train a checkpoint on labeled streams")
    _add_common(p)
    _add_training(p)
    p.add_argument("--data", required=True, help="JSONL stream file with spans")

    p = sub.add_parser("annotate", help="annotate streams with a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--overlap", choices=("mean", "nearest"))
    p.add_argument("--min-peak", dest="min_peak", type=float)

    p = sub.add_parser("eval", help="score annotations against ground truth")
    _add_common(p)
    p.add_argument("--annotations", required=True)
    p.add_argument("--data", required=True, help="JSONL stream file with spans")

    p = sub.add_parser("ablate", help="run the four-row ablation on synthetic data")
    _add_common(p)
    _add_training(p)
    p.add_argument("--n", type=int, help="number of training streams")
    p.add_argument("--n-test", dest="n_test", type=int, help="number of held-out streams")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(RunConfig.from_file(args.config))
    names = {f.name for f in fields(RunConfig)}
    for key, val in vars(args).items():
        if key in names and val is not None:
            values[key] = val
    return RunConfig(**values)


def _echo_config(cfg) -> None:
    print(json.dumps(asdict(cfg), sort_keys=True), file=sys.stderr)


def cmd_gen(cfg: RunConfig, out: str) -> None:
    synth = cfg.synth()
    _echo_config(synth)
    write_streams(gen_dataset(synth, cfg.n, start=cfg.start), out)


def cmd_train(cfg: RunConfig, data: str, out: str) -> Checkpoint:
    streams = read_streams(data)
    if cfg.dim is not None:
        bad = [s.stream_id for s in streams if s.dim != cfg.dim]
        if bad:
            raise DimensionMismatch(f"{data}: stream {bad[0]!r} has D != --dim {cfg.dim}")
    tc = cfg.train_config()
    _echo_config(tc)
    ckpt = train(streams, tc)
    ckpt.save(out)
    return ckpt


def cmd_annotate(cfg: RunConfig, checkpoint: str, data: str, out: str) -> None:
    ckpt = Checkpoint.load(checkpoint)
    streams = read_streams(data)
    mode = ckpt.config.loss_mode
    results = [(s.stream_id, annotate(ckpt.params, s, cfg.window, cfg.step, mode=mode,
                                      overlap=cfg.overlap, min_peak=cfg.min_peak))
               for s in streams]
    write_annotations(results, out)


def cmd_eval(annotations: str, data: str, out: str | None):
    preds = read_annotations(annotations)
    streams = read_streams(data)
    report = evaluate(preds, streams)
    print(render_table([(Path(annotations).stem, report)]))
    text = json.dumps(report.to_json(), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)
    return report


def cmd_ablate(cfg: RunConfig, out: str) -> int:
    tc = cfg.train_config(default_lr=BENCHMARK_LR)
    _echo_config(tc)
    result = run_ablation(cfg.synth(), tc, n_train=cfg.n, n_test=cfg.n_test)
    print(result.table())
    for name, ok in result.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    Path(out).write_text(result.dumps() + "\n")
    return 0 if all(result.checks.values()) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (OSError, ValueError, TypeError) as exc:
        parser.error(str(exc))
    if args.command == "gen" and cfg.n < 1:
        parser.error("--n must be >= 1")
    if args.command in ("gen", "train", "annotate") and not args.out:
        parser.error(f"{args.command} requires --out")

    try:
        if args.command == "gen":
            cmd_gen(cfg, args.out)
        elif args.command == "train":
            cmd_train(cfg, args.data, args.out)
        elif args.command == "annotate":
            cmd_annotate(cfg, args.checkpoint, args.data, args.out)
        elif args.command == "eval":
            cmd_eval(args.annotations, args.data, args.out)
        elif args.command == "ablate":
            return cmd_ablate(cfg, args.out or "ablation.json")
    except (AnnotatorError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
