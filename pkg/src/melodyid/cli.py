"""Command-line interface: ``melodyid {train,predict,evaluate,saliency,render}``.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure, 4 empty input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .baselines import skyline, vosa_best_voice, vosa_voices
from .convnet import TrainConfig, load_checkpoint, save_checkpoint, train
from .convnet.model import Architecture
from .evaluation import EvalReport, evaluate_corpus
from .melody_select import build_melograph, cluster_threshold, extract_melody, retain
from .pianoroll import quantize
from .pipeline import convnet_predictor, score_probabilities, training_pairs
from .render import pgm_bytes, png_bytes, render_rgb, render_svg, signed_pgm_bytes
from .saliency import RectSampler, saliency_map
from .score_io import MidiParseError, Score, read_midi, write_outputs

log = logging.getLogger("melodyid")

METHODS = ("cnn", "cnn_mono", "skyline", "vosa")
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_EMPTY = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# corpus helpers


def load_annotated(path: Path, melody_track: int = 0) -> Score | None:
    """Score with ground truth from ``<stem>.melody.json`` or the melody track.

    Returns ``None`` when the file carries no usable annotation.
    """
    sidecar = path.with_suffix(".melody.json")
    if sidecar.exists():
        data = json.loads(sidecar.read_text())
        ids = data["melody_ids"] if isinstance(data, dict) else data
        score = read_midi(path)
        return score.with_melody(int(i) for i in ids)
    try:
        score = read_midi(path, melody_track=melody_track)
    except ValueError as exc:
        if isinstance(exc, MidiParseError):
            raise
        return None
    if not any(n.track != melody_track for n in score.notes):
        # a single-track file has no separate accompaniment to tell apart
        return None
    return score


def corpus_files(corpus: str) -> list[Path]:
    root = Path(corpus)
    if not root.is_dir():
        raise CliError(f"corpus directory {corpus!r} not found")
    return sorted(p for p in root.iterdir() if p.suffix.lower() in (".mid", ".midi"))


def _read_input(path: str) -> Score:
    try:
        return read_midi(path)
    except FileNotFoundError:
        raise CliError(f"input file {path!r} not found")
    except MidiParseError as exc:
        raise CliError(f"{path}: {exc}")


def _load_model(path: str | None):
    if not path:
        raise CliError("this method needs --checkpoint")
    try:
        params, _ = load_checkpoint(path)
    except FileNotFoundError:
        raise CliError(f"checkpoint {path!r} not found")
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad checkpoint {path!r}: {exc}")
    return params


def predict_melody(score: Score, method: str, predictor=None):
    """Run one method; returns ``(melody ids, note probabilities or None)``."""
    if method == "skyline":
        return skyline(score), None
    if method == "vosa":
        if score.melody_ids is None:
            raise CliError("vosa selects its best voice against an annotation")
        return vosa_best_voice(vosa_voices(score), score.melody_ids), None
    _, _, probs = score_probabilities(predictor, score)
    melody = extract_melody(score, probs, method)
    return melody, probs


# --------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    files = corpus_files(args.corpus)
    scores = []
    for f in files:
        try:
            s = load_annotated(f, args.melody_track)
        except MidiParseError as exc:
            raise CliError(f"{f}: {exc}")
        if s is None or not s.notes:
            log.warning("skipping unannotated piece %s", f.name)
            continue
        scores.append(s)
    if len(scores) < 2:
        raise CliError(f"need at least 2 annotated MIDI files in {args.corpus}, found {len(scores)}")
    try:
        kh, kw = (int(v) for v in str(args.kernel).lower().split("x"))
        config = TrainConfig(
            dropout_p=args.dropout, l1_coeff=args.l1, batch_size=args.batch_size,
            patience=args.patience, max_epochs=args.max_epochs, seed=args.seed,
            rho=args.rho, eps=args.eps, val_fraction=args.val_fraction,
            augment=not args.no_augment, dtype=args.dtype,
            arch=Architecture(channels=args.channels, kernel=(kh, kw)))
    except ValueError as exc:
        raise CliError(f"invalid training option: {exc}")
    history_path = Path(args.history or Path(args.checkpoint).with_suffix(".history.jsonl"))
    history_path.parent.mkdir(parents=True, exist_ok=True)
    with open(history_path, "w") as fh:
        def emit(rec):
            rec = dict(rec)
            if not args.record_time:
                rec["elapsed_s"] = None
            fh.write(json.dumps(rec) + "\n")
            fh.flush()
        try:
            params, history = train(training_pairs(scores), config, on_epoch=emit)
        except FloatingPointError as exc:
            raise CliError(f"training diverged: {exc}", EXIT_NUMERIC)
    Path(args.checkpoint).parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.checkpoint, params, config.to_dict())
    log.info("trained %d epochs on %d pieces -> %s", len(history), len(scores), args.checkpoint)
    return EXIT_OK


def cmd_predict(args) -> int:
    score = _read_input(args.input)
    if not score.notes:
        raise CliError(f"{args.input} contains no notes", EXIT_EMPTY)
    predictor = None
    if args.method in ("cnn", "cnn_mono"):
        predictor = convnet_predictor(_load_model(args.checkpoint))
    if args.method == "vosa":
        try:
            score = load_annotated(Path(args.input), args.melody_track)
        except MidiParseError as exc:
            raise CliError(str(exc))
        if score is None:
            raise CliError("vosa needs an annotated input (melody track or sidecar)")
    melody, probs = predict_melody(score, args.method, predictor)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    (out / f"{stem}.melody.mid").write_bytes(write_outputs(score, melody, "midi"))
    (out / f"{stem}.melody.json").write_bytes(write_outputs(score, melody, "json", probs))
    if probs is not None and args.pgm:
        roll, prob, _ = score_probabilities(predictor, score)
        (out / f"{stem}.prob.pgm").write_bytes(pgm_bytes(prob))
    if probs is not None and args.dot:
        kept = retain(probs, cluster_threshold(probs.values()))
        g = build_melograph([n for n in score.notes if n.id in kept], probs)
        (out / f"{stem}.melograph.dot").write_text(g.to_dot())
    log.info("%s: %d of %d notes selected by %s", stem, len(melody), len(score.notes), args.method)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    files = corpus_files(args.corpus)
    if not files:
        raise CliError(f"no MIDI files in {args.corpus}")
    methods = [m.strip() for m in args.method.split(",")] if args.method else list(METHODS)
    bad = set(methods) - set(METHODS)
    if bad:
        raise CliError(f"unknown method(s): {', '.join(sorted(bad))}")
    predictor = None
    if {"cnn", "cnn_mono"} & set(methods):
        if not args.checkpoint:
            if args.method:
                raise CliError("cnn methods need --checkpoint")
            methods = [m for m in methods if m not in ("cnn", "cnn_mono")]
        else:
            predictor = convnet_predictor(_load_model(args.checkpoint))

    pieces, skipped = [], []
    for f in files:
        try:
            s = load_annotated(f, args.melody_track)
        except MidiParseError as exc:
            log.warning("skipping unreadable piece %s: %s", f.name, exc)
            skipped.append(f.name)
            continue
        if s is None or not s.notes:
            log.warning("skipping unannotated piece %s", f.name)
            skipped.append(f.name)
            continue
        pieces.append((f.stem, s))
    if not pieces:
        raise CliError("no annotated pieces to evaluate")

    def run(item):
        name, s = item
        return [(m, name, s, predict_melody(s, m, predictor)[0]) for m in methods]

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = [r for rows in pool.map(run, pieces) for r in rows]
    rows = []
    for m in methods:
        rep = evaluate_corpus([(name, s, pred, s.melody_ids) for mm, name, s, pred in results if mm == m], m)
        rows += rep.pieces
    report = EvalReport(rows, skipped)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    for m, summary in report.corpus().items():
        log.info("%-8s mean F %.4f  median F %.4f  (%d pieces)", m, summary["mean_f_measure"],
                 summary["median_f_measure"], summary["pieces"])
    return EXIT_OK


def cmd_saliency(args) -> int:
    score = _read_input(args.input)
    if not score.notes:
        raise CliError(f"{args.input} contains no notes", EXIT_EMPTY)
    if args.note not in score.ids:
        raise CliError(f"note id {args.note} not in {args.input}")
    predictor = convnet_predictor(_load_model(args.checkpoint))
    roll = quantize(score)
    sampler = RectSampler(seed=args.seed)
    smap = saliency_map(predictor, roll, args.note, args.iterations, sampler)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{Path(args.input).stem}.note{args.note}"
    (out / f"{stem}.saliency.json").write_text(smap.to_json())
    (out / f"{stem}.saliency.pgm").write_bytes(signed_pgm_bytes(smap.map))
    return EXIT_OK


def _id_list(value: str | None) -> set[int] | None:
    if not value:
        return None
    path = Path(value)
    if path.exists():
        data = json.loads(path.read_text())
        if isinstance(data, dict):
            data = data["melody_ids"]
        if data and isinstance(data[0], dict):
            return {int(r["id"]) for r in data if r.get("is_melody")}
        return {int(i) for i in data}
    return {int(v) for v in value.split(",") if v.strip()}


def cmd_render(args) -> int:
    score = _read_input(args.input)
    if not score.notes:
        raise CliError(f"{args.input} contains no notes", EXIT_EMPTY)
    roll = quantize(score)
    melody = _id_list(args.melody_ids) or set()
    probs = None
    if args.probabilities:
        records = json.loads(Path(args.probabilities).read_text())
        probs = {int(r["id"]): float(r.get("probability", 0.0)) for r in records}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".png":
        try:
            data = png_bytes(render_rgb(roll, melody, probs), scale=args.scale)
        except ImportError:
            raise CliError("PNG output needs Pillow; write .svg instead")
        out.write_bytes(data)
    else:
        out.write_text(render_svg(roll, melody, probs, args.scale, args.scale, Path(args.input).stem))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser, out: str = ".", checkpoint: str | None = None):
    # added per subcommand: parent parsers share Action objects, so set_defaults
    # on one subcommand would leak into the others
    p.add_argument("--config", help="flat TOML file of option defaults; flags win")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="pieces processed in parallel")
    p.add_argument("--out", default=out, help=f"output location (default {out})")
    p.add_argument("--checkpoint", default=checkpoint, help="model checkpoint (.npz)")
    p.add_argument("--melody-track", type=int, default=0, dest="melody_track",
                   help="track holding the annotated melody")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="melodyid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the network on an annotated corpus")
    _add_common(p, checkpoint="model.npz")
    p.add_argument("corpus")
    p.add_argument("--history", help="JSON-lines history path (default: next to checkpoint)")
    p.add_argument("--max-epochs", type=int, default=500, dest="max_epochs")
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16, dest="batch_size")
    p.add_argument("--l1", type=float, default=1e-5)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--rho", type=float, default=0.95)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--val-fraction", type=float, default=0.1, dest="val_fraction")
    p.add_argument("--channels", type=int, default=21)
    p.add_argument("--kernel", default="32x16", help="pitch x time kernel size")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--no-augment", action="store_true", dest="no_augment")
    p.add_argument("--record-time", action="store_true", dest="record_time",
                   help="store wall-clock seconds in the history (breaks byte-reproducibility)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="extract the melody of one MIDI file")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--method", choices=METHODS, default="cnn_mono")
    p.add_argument("--pgm", action="store_true", help="also dump the probability roll as PGM")
    p.add_argument("--dot", action="store_true", help="also dump the melody graph as DOT")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="F-measure report over a corpus")
    _add_common(p)
    p.add_argument("corpus")
    p.add_argument("--method", default=None, help="comma-separated subset of " + ",".join(METHODS))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("saliency", help="occlusion saliency map for one note")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--note", type=int, required=True)
    p.add_argument("--iterations", type=int, default=3000)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("render", help="draw a piano roll as SVG or PNG")
    _add_common(p, out="pianoroll.svg")
    p.add_argument("input")
    p.add_argument("--melody-ids", dest="melody_ids",
                   help="comma list, JSON id list, or predict JSON output")
    p.add_argument("--probabilities", help="predict JSON output with probability fields")
    p.add_argument("--scale", type=int, default=4, help="pixels per roll pixel")
    p.set_defaults(func=cmd_render)
    return parser


def _config_defaults(argv: list[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    try:
        with open(known.config, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise CliError(f"cannot read config {known.config!r}: {exc}")
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise CliError(f"config must be flat key = value pairs; found tables {nested}")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _subcommands(parser: argparse.ArgumentParser) -> dict[str, argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return dict(action.choices)
    return {}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        defaults = _config_defaults(argv)
        if defaults:
            choices = _subcommands(parser)
            command = next((a for a in argv if a in choices), None)
            if command is not None:
                p = choices[command]
                known = {a.dest for a in p._actions}
                unknown = set(defaults) - known
                if unknown:
                    raise CliError(f"unknown config keys for {command}: {', '.join(sorted(unknown))}")
                p.set_defaults(**defaults)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return EXIT_INPUT if exc.code else EXIT_OK
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"melodyid: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
