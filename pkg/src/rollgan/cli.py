"""Command-line entry point.

Every subcommand accepts ``--config FILE``: a JSON object whose keys are flag
names (``steps`` or ``--steps``, dashes or underscores). Values from the file
replace the built-in defaults and explicit flags replace both. Each command
echoes its effective configuration on a ``config`` line and ends with a
single ``key=value`` result line.

Exit codes: 0 success, 1 usage error, 2 data or contract error, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import secrets
import sys
import traceback
from pathlib import Path

import numpy as np

from . import classify, dataset, evaluation, train
from .errors import DataError, EmptyAfterQuantization, FilterRejected, InvalidHyperparam, MalformedMidi
from .losses import LossWeights
from .nets import DiscriminatorConfig, GeneratorConfig, ModelConfig
from .pianoroll_io import (
    DEFAULT_THRESHOLD,
    ExportConfig,
    FilterReason,
    GridConfig,
    filter_midi,
    load_dataset,
    read_midi,
    rolls_to_midi,
    save_dataset,
    song_to_rolls,
)

logger = logging.getLogger("rollgan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _genre(text: str) -> dataset.GenreLabel:
    try:
        return dataset.GenreLabel.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _threshold(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"threshold must lie strictly between 0 and 1, got {value}")
    return value


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="JSON file of flag defaults")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> tuple[_Parser, dict[str, _Parser]]:
    parser = _Parser(prog="rollgan", description="Symbolic music genre transfer on piano rolls.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    common = _common()
    cmds: dict[str, _Parser] = {}

    p = cmds["prepare-data"] = sub.add_parser(
        "prepare-data", parents=[common], help="filter a MIDI directory into a phrase dataset")
    p.add_argument("--in", dest="input", metavar="DIR", help="directory searched recursively for .mid/.midi")
    p.add_argument("--out", metavar="FILE", help="output .npy dataset")
    p.add_argument("--genre", type=_genre, help="genre label of the files (Jazz or Classic)")
    p.add_argument("--steps-per-bar", type=int, default=16)
    p.add_argument("--pitch-floor", type=int, default=24, help="MIDI pitch of the lowest roll row")

    p = cmds["make-synthetic"] = sub.add_parser(
        "make-synthetic", parents=[common], help="write the two-genre synthetic corpus")
    p.add_argument("--out", metavar="DIR", help="output directory (jazz.npy, classic.npy)")
    p.add_argument("--n-per-genre", type=int, default=200)
    p.add_argument("--seed", type=int)

    p = cmds["train-classifier"] = sub.add_parser(
        "train-classifier", parents=[common], help="fit a genre classifier and report test accuracy")
    p.add_argument("--algo", choices=sorted(classify.CLASSIFIERS), default=None)
    p.add_argument("--data", action="append", metavar="[GENRE=]FILE",
                   help="labeled dataset; the genre defaults to the file stem (repeat per genre)")
    p.add_argument("--out", metavar="MODEL", help="classifier checkpoint to write")
    p.add_argument("--param", action="append", default=None, metavar="KEY=VALUE",
                   help="classifier hyperparameter, VALUE parsed as JSON when possible")
    p.add_argument("--sweep", action="store_true", help="sweep k (knn) or depth (rf) and keep the best")
    p.add_argument("--sweep-out", metavar="CSV", help="sweep curve path (default MODEL.sweep.csv)")
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int)

    p = cmds["train-transfer"] = sub.add_parser(
        "train-transfer", parents=[common], help="train the two-way transfer model")
    p.add_argument("--data-a", metavar="FILE", help="domain A (Jazz) dataset")
    p.add_argument("--data-b", metavar="FILE", help="domain B (Classic) dataset")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--aux", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--triplet", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lambda-cycle", type=float, default=10.0)
    p.add_argument("--lambda-identity", type=float, default=5.0)
    p.add_argument("--generator", choices=["resnet9", "unet128"], default="resnet9")
    p.add_argument("--base-channels", type=int, default=64)
    p.add_argument("--n-blocks", type=int, default=9)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--pool-size", type=int, default=50)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--resume", metavar="CKPT")
    p.add_argument("--seed", type=int)

    p = cmds["transfer"] = sub.add_parser(
        "transfer", parents=[common], help="transfer one MIDI file with a trained model")
    p.add_argument("--model", metavar="CKPT")
    p.add_argument("--in", dest="input", metavar="MIDI")
    p.add_argument("--out", metavar="MIDI")
    p.add_argument("--direction", choices=[t.value for t in evaluation.TransferTask], default="j2c")
    p.add_argument("--threshold", type=_threshold, default=DEFAULT_THRESHOLD)
    p.add_argument("--steps-per-bar", type=int, default=16)
    p.add_argument("--pitch-floor", type=int, default=24)

    p = cmds["evaluate"] = sub.add_parser(
        "evaluate", parents=[common], help="classifier-judged transfer accuracy")
    p.add_argument("--model", action="append", metavar="[NAME=]CKPT")
    p.add_argument("--classifier", metavar="MODEL", help='classifier checkpoint, or "oracle"')
    p.add_argument("--data", action="append", metavar="FILE", help="source-genre test rolls, one per --task")
    p.add_argument("--task", action="append", choices=[t.value for t in evaluation.TransferTask])
    p.add_argument("--threshold", type=_threshold, default=DEFAULT_THRESHOLD)
    p.add_argument("--report-csv", metavar="FILE")
    return parser, cmds


_REQUIRED = {
    "prepare-data": ["input", "out", "genre"],
    "make-synthetic": ["out"],
    "train-classifier": ["algo", "data", "out"],
    "train-transfer": ["data_a", "data_b", "out"],
    "transfer": ["model", "input", "out"],
    "evaluate": ["model", "classifier", "data", "task"],
}
_RANDOMIZED = {"make-synthetic", "train-classifier", "train-transfer"}


def _apply_config(sub: _Parser, path: str) -> None:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    known = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    values = {}
    for key, value in raw.items():
        dest = key.lstrip("-").replace("-", "_")
        dest = "input" if dest == "in" else dest
        if dest not in known:
            raise UsageError(f"unknown key {key!r} in config {path}")
        action = known[dest]
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
        if callable(action.type) and isinstance(value, str):
            try:
                value = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        values[dest] = value
    sub.set_defaults(**values)


def parse_args(argv=None) -> argparse.Namespace:
    parser, cmds = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("rollgan: a command is required; see --help")
    if args.config:
        _apply_config(cmds[args.command], args.config)
        args = parser.parse_args(argv)
    missing = [d for d in _REQUIRED[args.command] if getattr(args, d) in (None, [])]
    if missing:
        flags = ", ".join("--" + ("in" if d == "input" else d.replace("_", "-")) for d in missing)
        raise UsageError(f"rollgan {args.command}: missing required {flags}")
    if args.command in _RANDOMIZED and args.seed is None:
        args.seed = secrets.randbelow(2 ** 31)
        print(f"seed={args.seed} (drawn)")
    return args


def _echo(args: argparse.Namespace) -> None:
    cfg = {k: (v.value if isinstance(v, dataset.GenreLabel) else v)
           for k, v in vars(args).items() if k not in ("verbose",)}
    print("config " + json.dumps(cfg, sort_keys=True))


def _pct(x: float) -> str:
    return str(round(float(x), 2))


# commands

def cmd_prepare_data(args) -> int:
    grid = GridConfig.for_steps_per_bar(args.steps_per_bar, args.pitch_floor)
    root = Path(args.input)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    files = sorted(p for p in root.rglob("*") if p.suffix.lower() in (".mid", ".midi") and p.is_file())
    if not files:
        raise DataError(f"no input files (.mid/.midi) under {root}")
    counts = {r.value: 0 for r in FilterReason}
    counts.update(Malformed=0, TooShort=0)
    rolls = []
    for path in files:
        try:
            song = read_midi(path)
        except MalformedMidi as exc:
            logger.warning("%s: %s", path, exc)
            counts["Malformed"] += 1
            continue
        decision = filter_midi(song)
        if not decision.accepted:
            logger.info("%s: rejected (%s)", path, decision.reason.value)
            counts[decision.reason.value] += 1
            continue
        try:
            phrases = song_to_rolls(song, grid)
        except EmptyAfterQuantization:
            counts["TooShort"] += 1
            continue
        counts[FilterReason.OK.value] += 1
        rolls += phrases
    rejected = len(files) - counts["OK"]
    print("summary files=%d accepted=%d rejected=%d %s" % (
        len(files), counts["OK"], rejected,
        " ".join(f"{k}={v}" for k, v in counts.items() if k != "OK")))
    if not rolls:
        raise DataError("no phrases survived filtering")
    save_dataset(np.stack(rolls), args.out)
    print(f"phrases={len(rolls)} accepted={counts['OK']} rejected={rejected} out={args.out}")
    return EXIT_OK


def cmd_make_synthetic(args) -> int:
    if args.n_per_genre < 1:
        raise UsageError("--n-per-genre must be >= 1")
    samples = dataset.make_synthetic(args.n_per_genre, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    for label in dataset.GenreLabel:
        group = [s for s in samples if s.label is label]
        save_dataset(dataset.stack(group), out / f"{label.value.lower()}.npy")
        counts[label.value.lower()] = len(group)
    print(" ".join(f"{k}={v}" for k, v in counts.items()) + f" out={out}")
    return EXIT_OK


def _labeled_data(entries) -> list[dataset.LabeledSample]:
    samples = []
    for entry in entries:
        name, sep, path = entry.partition("=")
        if not sep:
            name, path = Path(entry).stem, entry
        try:
            label = dataset.GenreLabel.parse(name)
        except ValueError as exc:
            raise UsageError(f"--data {entry}: {exc}; use GENRE=FILE") from None
        rolls = load_dataset(path, binary=True)
        samples += dataset.samples_from_rolls(rolls, label, prefix=Path(path).stem)
    return samples


def _parse_params(algo: str, entries, seed: int):
    _, params_cls = classify.CLASSIFIERS[algo]
    names = {f.name for f in dataclasses.fields(params_cls)}
    values = {"seed": seed} if "seed" in names else {}
    for entry in entries or []:
        key, sep, text = entry.partition("=")
        key = key.replace("-", "_")
        if not sep or key not in names:
            raise UsageError(f"--param {entry!r}: expected KEY=VALUE with KEY in {sorted(names)}")
        try:
            values[key] = json.loads(text)
        except json.JSONDecodeError:
            values[key] = text
    try:
        return params_cls(**values)
    except (TypeError, InvalidHyperparam, ValueError) as exc:
        raise UsageError(f"invalid {algo} parameters: {exc}") from None


def cmd_train_classifier(args) -> int:
    if args.sweep and args.algo not in ("knn", "rf"):
        raise UsageError("--sweep applies to --algo knn and --algo rf only")
    params = _parse_params(args.algo, args.param, args.seed)
    data = dataset.split(_labeled_data(args.data), args.test_fraction, seed=args.seed)
    train_set = data.train_a + data.train_b
    test_set = data.test_a + data.test_b
    X_train = classify.featurize(dataset.stack(train_set))
    y_train = [s.label for s in train_set]
    X_test = classify.featurize(dataset.stack(test_set))
    y_test = [s.label for s in test_set]
    extra = ""
    if args.sweep:
        sweep_path = args.sweep_out or f"{args.out}.sweep.csv"
        if args.algo == "knn":
            curve = classify.tune_knn(X_train, y_train, X_test, y_test,
                                      range(1, min(50, len(train_set)) + 1), params.metric)
            classify.write_knn_csv(curve, sweep_path)
            params = dataclasses.replace(params, k=curve.best[0])
            extra = f" best_k={curve.best[0]}"
        else:
            curve = classify.tune_rf(X_train, y_train, X_test, y_test, params=params)
            classify.write_rf_csv(curve, sweep_path)
            params = dataclasses.replace(params, max_depth=curve.best[0])
            extra = f" best_depth={curve.best[0]}"
        print(f"sweep written to {sweep_path}")
    model = classify.fit(classify.ClassifierSpec(args.algo, params), X_train, y_train)
    report = classify.evaluate(model, X_test, y_test)
    classify.save_classifier(model, args.out)
    per = " ".join(f"{g.value.lower()}={_pct(a)}" for g, a in report.per_genre.items())
    print(f"accuracy={_pct(report.overall)} {per} n_test={report.n}{extra}")
    return EXIT_OK


def cmd_train_transfer(args) -> int:
    rolls_a = load_dataset(args.data_a, binary=True)
    rolls_b = load_dataset(args.data_b, binary=True)
    samples = (dataset.samples_from_rolls(rolls_a, dataset.GenreLabel.JAZZ, Path(args.data_a).stem)
               + dataset.samples_from_rolls(rolls_b, dataset.GenreLabel.CLASSIC, Path(args.data_b).stem))
    data = dataset.split(samples, args.test_fraction, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset.write_manifest(data, out / "split.txt")
    save_dataset(dataset.stack(data.test_a), out / "test_a.npy")
    save_dataset(dataset.stack(data.test_b), out / "test_b.npy")
    try:
        weights = LossWeights(gamma=args.gamma, lambda_cycle=args.lambda_cycle,
                              lambda_identity=args.lambda_identity, triplet_margin=args.margin,
                              use_aux=args.aux, use_triplet=args.triplet)
        model = ModelConfig(GeneratorConfig(args.generator, args.base_channels, args.n_blocks),
                            DiscriminatorConfig(args.base_channels), use_aux=args.aux)
        config = train.TrainConfig(weights=weights, model=model, lr=args.lr, batch_size=args.batch_size,
                                   steps=args.steps, seed=args.seed,
                                   checkpoint_every=args.checkpoint_every,
                                   fake_pool_size=args.pool_size)
    except DataError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = train.train(config, data, out_dir=out, resume=args.resume)
    log = train.read_log(out / "log.csv")
    first = float(log[0]["cycle_a"]) + float(log[0]["cycle_b"])
    last = float(log[-1]["cycle_a"]) + float(log[-1]["cycle_b"])
    print(f"steps={result.trainer.step} cycle_first={first:.6g} cycle_last={last:.6g} "
          f"checkpoint={result.final_checkpoint}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    grid = GridConfig.for_steps_per_bar(args.steps_per_bar, args.pitch_floor)
    task = evaluation.TransferTask(args.direction)
    model, _ = train.load_checkpoint(args.model)
    song = read_midi(args.input)
    decision = filter_midi(song)
    if not decision.accepted:
        raise FilterRejected(decision.reason.value)
    rolls = np.stack(song_to_rolls(song, grid))
    out = evaluation.transfer_rolls(model.generator_for(task.direction), rolls, args.threshold)
    Path(args.out).write_bytes(rolls_to_midi(list(out), grid, ExportConfig()))
    added = removed = 0
    for i, (src, dst) in enumerate(zip(rolls, out)):
        a = int(((dst == 1) & (src == 0)).sum())
        r = int(((dst == 0) & (src == 1)).sum())
        added, removed = added + a, removed + r
        print(f"phrase={i} active_in={int(src.sum())} active_out={int(dst.sum())} added={a} removed={r}")
    print(f"phrases={len(rolls)} added={added} removed={removed} out={args.out}")
    return EXIT_OK


def _load_judge(spec: str):
    if spec == "oracle":
        return classify.BandOracle(), "oracle"
    return classify.load_classifier(spec), Path(spec).name


def cmd_evaluate(args) -> int:
    if len(args.data) != len(args.task):
        raise UsageError("give one --data file per --task, in the same order")
    judge_model, judge_id = _load_judge(args.classifier)
    models = {}
    for entry in args.model:
        name, sep, path = entry.partition("=")
        if not sep:
            path, name = entry, Path(entry).parent.name or Path(entry).stem
        models[name], _ = train.load_checkpoint(path)
    test_sets = {evaluation.TransferTask(t): load_dataset(d, binary=True)
                 for t, d in zip(args.task, args.data)}
    report = evaluation.build_report(models, judge_model, test_sets, args.threshold, judge_id)
    print(report.render())
    if args.report_csv:
        report.to_csv(args.report_csv)
    single = len(models) == 1
    print(" ".join(f"{r.task.value if single else r.variant + '.' + r.task.value}={_pct(r.accuracy)}"
                   for r in report.rows))
    return EXIT_OK


COMMANDS = {
    "prepare-data": cmd_prepare_data,
    "make-synthetic": cmd_make_synthetic,
    "train-classifier": cmd_train_classifier,
    "train-transfer": cmd_train_transfer,
    "transfer": cmd_transfer,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    verbose = False
    try:
        args = parse_args(argv)
        verbose = args.verbose
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        _echo(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if verbose:
            traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
