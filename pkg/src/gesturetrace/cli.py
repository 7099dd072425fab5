"""Command-line entry point wiring the pipeline into reproducible workflows.

Subcommands: import, render, train, eval, predict, stream, report. Every
run that produces files writes a run_manifest.json with the fully resolved
settings so artifacts can be reproduced byte-exactly. Exit codes: 0 ok,
1 validation/usage error, 2 runtime failure.
"""

import argparse
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, evalreport, images, nn, render, stream, synthetic, train
from .skeleton import (
    EXTENDED_CLASSES,
    LMDHG_CLASSES,
    ParseError,
    load_dataset,
    load_recording,
    parse_frames,
    save_recording,
    segment,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _class_set(name: str):
    return {"lmdhg": LMDHG_CLASSES, "extended": EXTENDED_CLASSES}[name]


def _parse_res(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)", text)
    if not m:
        raise UsageError(f"--res expects WIDTHxHEIGHT, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v)
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}")


def _default_out(command: str):
    root = os.environ.get("GESTURETRACE_OUT_ROOT")
    return None if root is None else str(Path(root) / f"{command}_out")


def _write_run_manifest(out_dir: Path, command: str, args) -> None:
    resolved = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k != "func"
    }
    payload = {"command": command, "version": __version__, "settings": resolved}
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require_out(args) -> Path:
    if args.out is None:
        raise UsageError(
            "--out is required (or set GESTURETRACE_OUT_ROOT)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe_name(sample_id: str) -> str:
    return re.sub(r"[^\w.-]+", "_", sample_id)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_import(args) -> int:
    out = _require_out(args)
    classes = _class_set(args.classes)
    src = Path(args.src)
    if not src.is_dir():
        raise UsageError(f"--src {src} is not a directory")
    recordings = sorted(p for p in src.iterdir() if p.is_dir())
    if not recordings:
        raise ValueError(f"no recording directories under {src}")
    total = 0
    for rec in recordings:
        seq, intervals = load_recording(rec, args.format, classes)
        save_recording(out / rec.name, seq, intervals)
        total += len(intervals)
    _write_run_manifest(out, "import", args)
    print(f"imported {len(recordings)} recordings, {total} labeled intervals "
          f"-> {out}")
    return 0


def _cmd_render(args) -> int:
    out = _require_out(args)
    if args.synthetic is not None:
        if args.dataset is not None:
            raise UsageError("use either --dataset or --synthetic, not both")
        class_set = synthetic.SYNTHETIC_CLASSES
        samples = synthetic.make_dataset(per_class=args.synthetic,
                                         seed=args.seed, frames=args.frames)
        # synthetic motion spans roughly +-300 mm around the origin; a
        # square window keeps the full trace inside any aspect ratio
        windows = {
            render.ViewPlane.TOP: render.Window(-320.0, -320.0, 320.0, 320.0),
            render.ViewPlane.RIGHT: render.Window(-320.0, 0.0, 320.0, 640.0),
        }
    elif args.dataset is not None:
        class_set = _class_set(args.classes)
        samples = load_dataset(args.dataset, args.format, class_set)
        windows = None
        if not samples:
            raise ValueError(f"no samples found under {args.dataset}")
    else:
        raise UsageError("render needs --dataset or --synthetic")

    width, height = args.res
    overrides = {"alpha_min": args.alpha_min}
    if windows is not None:
        overrides["windows"] = windows
    if args.radius is not None:
        overrides["point_radius"] = args.radius
    config = render.scaled_config(width, height, **overrides)

    index_lines = ["sample_id,label,recording_index,file"]
    for sample in samples:
        img = render.render_views(sample, config, args.view)
        fname = f"{_safe_name(sample.sample_id)}__{args.view}.png"
        render.save_png(img, out / fname)
        index_lines.append(
            f"{sample.sample_id},{sample.label or ''},"
            f"{'' if sample.recording_index is None else sample.recording_index},"
            f"{fname}"
        )
    (out / "index.csv").write_text("\n".join(index_lines) + "\n",
                                   encoding="utf-8")
    render.write_manifest(out / "manifest.json", config, args.view,
                          class_set.names)
    _write_run_manifest(out, "render", args)
    print(f"rendered {len(samples)} images ({args.view} view, "
          f"{width}x{height}) -> {out}")
    return 0


def _load_image_dir(path):
    """Read an image directory produced by `render` -> (arrays, label
    indices, sample ids, manifest)."""
    path = Path(path)
    index_file = path / "index.csv"
    if not index_file.exists():
        raise ValueError(f"{path} has no index.csv (not a render output?)")
    manifest = render.read_manifest(path / "manifest.json")
    classes = manifest["classes"]
    arrays, labels, ids = [], [], []
    for line in index_file.read_text(encoding="utf-8").splitlines()[1:]:
        if not line.strip():
            continue
        sample_id, label, _rec, fname = line.split(",")
        arrays.append(images.load_image_array(path / fname))
        labels.append(classes.index(label) if label else -1)
        ids.append(sample_id)
    if not arrays:
        raise ValueError(f"{path} lists no images")
    return images.stack_batch(arrays), np.array(labels), ids, manifest


def _cmd_train(args) -> int:
    out = _require_out(args)
    arrays, labels, _ids, manifest = _load_image_dir(args.images)
    if (labels < 0).any():
        raise ValueError("training images must all be labeled")
    config = train.TrainConfig(
        schedule=args.schedule,
        epochs_per_phase=args.epochs,
        lr_a=args.lr,
        lr_b=args.lr_b,
        batch_size=args.batch,
        seed=args.seed,
        val_fraction=args.val_fraction,
        channels=args.channels,
        lookahead_k=args.lookahead_k,
        lookahead_alpha=args.lookahead_alpha,
    )
    render_manifest = {"view": manifest["view"],
                       "config": manifest["config"].to_json_dict()}
    result = train.train(arrays, labels, config, manifest["classes"],
                         out_dir=out, render_manifest=render_manifest)
    _write_run_manifest(out, "train", args)
    print(f"best validation accuracy {result.best_val_accuracy:.4f} "
          f"(round {result.best_round}, phase {result.best_phase}, "
          f"epoch {result.best_epoch}, {result.best_resolution}px) -> {out}")
    return 0


def _cmd_eval(args) -> int:
    out = _require_out(args)
    classifier = evalreport.CheckpointClassifier.from_checkpoint(args.model)
    if args.images is not None:
        arrays, labels, ids, manifest = _load_image_dir(args.images)
        if list(manifest["classes"]) != list(classifier.classes):
            raise ValueError(
                "image directory classes do not match the checkpoint; "
                f"checkpoint: {list(classifier.classes)}; "
                f"images: {list(manifest['classes'])}"
            )
        if (labels < 0).any():
            raise ValueError("evaluation images must all be labeled")
        result = evalreport.evaluate_arrays(classifier, arrays, labels, ids)
    elif args.dataset is not None:
        samples = load_dataset(args.dataset, args.format,
                               _class_set(args.classes))
        if args.split == "lmdhg":
            _, samples = evalreport.split_lmdhg(samples)
        result = evalreport.evaluate_samples(classifier, samples)
    else:
        raise UsageError("eval needs --images or --dataset")

    entries = evalreport.top_losses_from_result(result, classifier.classes,
                                                args.top_losses)
    evalreport.write_report(out / "report.json", result)
    result.confusion.save_csv(out / "confusion.csv")
    result.confusion.save_heatmap(out / "confusion.png")
    evalreport.save_top_losses_csv(out / "top_losses.csv", entries)
    _write_run_manifest(out, "eval", args)
    print(f"accuracy {result.accuracy:.4f} over "
          f"{result.confusion.total} samples -> {out}")
    return 0


def _cmd_predict(args) -> int:
    classifier = evalreport.CheckpointClassifier.from_checkpoint(args.model)
    if args.image is not None:
        arr = images.load_image_array(args.image)
        arr = images.resize_area(arr, classifier.resolution,
                                 classifier.resolution)
        _, probs = classifier.predict_arrays(arr[None])
        prediction = nn.prediction_from_probs(probs[0], classifier.classes)
        source = str(args.image)
    elif args.frames is not None:
        seq = parse_frames(Path(args.frames).read_bytes(), args.format,
                           source_id=Path(args.frames).stem)
        from .skeleton import GestureSample

        sample = GestureSample(frames=seq, sample_id=seq.source_id)
        prediction = classifier.predict_sample(sample)
        source = str(args.frames)
    else:
        raise UsageError("predict needs --image or --frames")
    print(json.dumps({
        "source": source,
        "class": prediction.argmax_class,
        "probabilities": [float(p) for p in prediction.probabilities],
    }, sort_keys=True))
    return 0


def _cmd_stream(args) -> int:
    classifier = evalreport.CheckpointClassifier.from_checkpoint(args.model)
    session = stream.StreamSession(
        classifier=classifier,
        window_seconds=args.window,
        window_frames=args.frames_per_window,
        assumed_fps=args.fps,
    )
    if args.listen is not None:
        host, _, port = args.listen.rpartition(":")
        stream.serve_tcp(session, host or "127.0.0.1", int(port))
        return 0
    lines = (open(args.input, encoding="utf-8") if args.input is not None
             else sys.stdin)
    try:
        count = stream.run_ndjson_stream(session, lines, sys.stdout)
    finally:
        if args.input is not None:
            lines.close()
    print(f"emitted {count} window predictions", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    out = _require_out(args)
    run_dir = Path(args.run)
    history_file = run_dir / "history.csv"
    if not history_file.exists():
        raise ValueError(f"{run_dir} has no history.csv")
    rows = history_file.read_text(encoding="utf-8").splitlines()[1:]
    best_acc, best_line = -1.0, None
    for line in rows:
        rnd, phase, epoch, loss, acc = line.split(",")
        if float(acc) > best_acc:
            best_acc = float(acc)
            best_line = {"round": int(rnd), "phase": phase,
                         "epoch": int(epoch), "train_loss": float(loss),
                         "val_accuracy": float(acc)}
    payload = {
        "training_run": str(run_dir),
        "epochs_recorded": len(rows),
        "best": best_line,
        "reference_accuracies": evalreport.REFERENCE_ACCURACIES,
        "reference_note": evalreport.REFERENCE_NOTE,
    }
    ckpt = run_dir / "best.ckpt"
    if ckpt.exists():
        _, header = nn.load_checkpoint(ckpt)
        payload["best_checkpoint"] = {
            "classes": header["classes"],
            "resolution": header["resolution"],
            "seed": header["seed"],
        }
    if args.eval is not None:
        with open(Path(args.eval) / "report.json", encoding="utf-8") as fh:
            payload["evaluation"] = json.load(fh)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_manifest(out, "report", args)
    if best_line:
        print(f"best epoch: round {best_line['round']} phase "
              f"{best_line['phase']} epoch {best_line['epoch']} "
              f"val_accuracy {best_line['val_accuracy']:.4f}")
    print(f"report -> {out / 'report.json'}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def _add_common(p: _Parser, command: str) -> None:
    p.add_argument("--config", help="key=value file overriding defaults")
    p.add_argument("--out", default=_default_out(command),
                   help="output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="gesturetrace",
                     description="gesture-trace imaging and classification")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", parents=[], help="convert raw recordings "
                       "into the canonical dataset layout")
    p.add_argument("--src", required=True)
    p.add_argument("--format", default="lmdhg",
                   choices=["lmdhg", "canonical-csv"])
    p.add_argument("--classes", default="lmdhg",
                   choices=["lmdhg", "extended"])
    _add_common(p, "import")
    p.set_defaults(func=_cmd_import)

    p = sub.add_parser("render", help="rasterize gesture samples to PNGs")
    p.add_argument("--dataset", help="canonical dataset root")
    p.add_argument("--synthetic", type=int, metavar="PER_CLASS",
                   help="generate a synthetic dataset instead of loading one")
    p.add_argument("--frames", type=int, help="fixed frame count (synthetic)")
    p.add_argument("--format", default="canonical-csv",
                   choices=["lmdhg", "canonical-csv"])
    p.add_argument("--classes", default="lmdhg",
                   choices=["lmdhg", "extended"])
    p.add_argument("--view", default="top",
                   choices=["top", "right", "double"])
    p.add_argument("--res", type=_parse_res, default=(1920, 1080),
                   metavar="WxH")
    p.add_argument("--alpha-min", type=float, default=0.02)
    p.add_argument("--radius", type=int, help="trace disc radius in px")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, "render")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("train", help="train the classifier on rendered images")
    p.add_argument("--images", required=True, help="render output directory")
    p.add_argument("--schedule", type=_parse_int_list, default=(48, 96),
                   metavar="PX,PX,...")
    p.add_argument("--epochs", type=int, default=10,
                   help="epochs per phase (two phases per round)")
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-3, help="phase-a rate")
    p.add_argument("--lr-b", type=float, default=None,
                   help="phase-b rate (default lr/10)")
    p.add_argument("--val-fraction", type=float, default=0.3)
    p.add_argument("--channels", type=_parse_int_list,
                   default=(16, 32, 64, 128))
    p.add_argument("--lookahead-k", type=int, default=6)
    p.add_argument("--lookahead-alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p, "train")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--images", help="render output directory")
    p.add_argument("--dataset", help="canonical dataset root")
    p.add_argument("--format", default="canonical-csv",
                   choices=["lmdhg", "canonical-csv"])
    p.add_argument("--classes", default="lmdhg",
                   choices=["lmdhg", "extended"])
    p.add_argument("--split", default="none",
                   choices=["none", "lmdhg"],
                   help="lmdhg: evaluate recordings 36-50 only")
    p.add_argument("--top-losses", type=int, default=10)
    _add_common(p, "eval")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="classify one sample or image")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", help="frames.csv of one gesture")
    p.add_argument("--image", help="pre-rendered PNG")
    p.add_argument("--format", default="canonical-csv",
                   choices=["lmdhg", "canonical-csv"])
    _add_common(p, "predict")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("stream", help="windowed classification over NDJSON "
                       "frames (stdin, file, or TCP)")
    p.add_argument("--model", required=True)
    p.add_argument("--window", type=float, default=5.0,
                   help="window length in seconds")
    p.add_argument("--fps", type=float, default=stream.DEFAULT_ASSUMED_FPS,
                   help="assumed rate for timestamp-less frames")
    p.add_argument("--frames-per-window", type=int, default=None)
    p.add_argument("--input", help="NDJSON file (default: stdin)")
    p.add_argument("--listen", metavar="HOST:PORT",
                   help="serve one TCP connection instead of stdin")
    _add_common(p, "stream")
    p.set_defaults(func=_cmd_stream)

    p = sub.add_parser("report", help="summarize a training run")
    p.add_argument("--run", required=True, help="train output directory")
    p.add_argument("--eval", help="eval output directory to merge")
    _add_common(p, "report")
    p.set_defaults(func=_cmd_report)

    return parser


def _expand_config(argv: list[str]) -> list[str]:
    """Insert key=value entries from --config FILE as flags right after the
    subcommand, so explicit flags still win."""
    if "--config" in argv:
        idx = argv.index("--config")
        if idx + 1 >= len(argv):
            raise UsageError("--config needs a file argument")
        cfg_path = argv[idx + 1]
    else:
        prefixed = [a for a in argv if a.startswith("--config=")]
        if not prefixed:
            return argv
        cfg_path = prefixed[0].split("=", 1)[1]
    extra: list[str] = []
    try:
        text = Path(cfg_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        extra.extend([f"--{key.strip()}", value.strip()])
    return [argv[0]] + extra + argv[1:]


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("run 'gesturetrace --help' for usage", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help/--version
        return 0 if exc.code in (0, None) else 1
    except (ValueError, ParseError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - runtime failures
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
