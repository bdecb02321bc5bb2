"""Command-line entry point.

Every subcommand writes into its own ``--out`` directory: the outputs, a
``manifest.json`` echoing the fully resolved configuration, and a
``timings.json`` with wall-clock seconds per stage. Everything except
``timings.json`` is byte-identical across re-runs with the same configuration,
whatever ``--jobs`` is.

Options can also come from ``--config FILE`` holding ``key = value`` lines
(keys are option names with dashes or underscores). Flags override the file,
which overrides the defaults.

Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric failure. Failures print one
JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, ameeval, classifiers, evalgt, gapdcam, linear, shapx, synthgen, tsio
from .errors import DataError, MtsxError, NumericError, ShapeMismatch
from .tsdata import GroundTruthMask, SaliencyMap, Scale, align_to

log = logging.getLogger("mtsxplain")

MANIFEST_SCHEMA = 1
EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
MODELS = ("ridge", "rocket-logistic", "rocket-ridge", "rocket-logistic-chbych", "gapcnn")
METHODS = ("ridge", "shap-concat", "shap-chbych", "dcam", "random", "ground-truth")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit": code}), file=sys.stderr)
    return code


# ------------------------------------------------------------------ utilities

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise DataError(f"{directory} has no manifest.json")
    return json.loads(path.read_text())


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v))


def _parallel(fn, items, jobs: int) -> list:
    if jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def load_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(sub: argparse.ArgumentParser, config: dict) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in config.items():
        if key not in actions or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for {sub.prog}")
        a = actions[key]
        if isinstance(a, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(a, argparse._AppendAction):
            defaults[key] = [v.strip() for v in value.split(";") if v.strip()]
        else:
            try:
                defaults[key] = a.type(value) if a.type else value
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key}: {exc}") from None
            if a.choices and defaults[key] not in a.choices:
                raise UsageError(f"config key {key}: {value!r} not in {list(a.choices)}")
    sub.set_defaults(**defaults)


# ------------------------------------------------------------------ commands

def _span(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}") from None
    return a, b


def cmd_gen(args, out: Path, timings: dict) -> None:
    spec = synthgen.SynthSpec(kind=args.kind, n_train=args.n_train, n_test=args.n_test,
                              d=args.channels, L=args.length, offset=args.offset, seed=args.seed,
                              box_channels=args.box_channels, box_time=args.box_time)
    t = time.perf_counter()
    train, test, mask = synthgen.generate_dataset(spec, args.segments)
    timings["generate"] = time.perf_counter() - t
    tsio.write_dataset(train, out / "train.mtscsv")
    tsio.write_dataset(test, out / "test.mtscsv")
    tsio.write_saliency(SaliencyMap(mask.mask, Scale.RAW, spec.L // args.segments), out / "mask.salcsv")


def _load_data(path, seed=0):
    return tsio.read_dataset(path, seed=seed)


def _build_model(args):
    if args.model == "ridge":
        return classifiers.RawRidge(args.folds)
    if args.model == "rocket-logistic":
        return classifiers.RocketLogistic(args.kernels, args.seed, args.jobs)
    if args.model == "rocket-ridge":
        return classifiers.RocketRidge(args.kernels, args.seed, args.jobs)
    return classifiers.ChannelEnsemble(args.kernels, args.seed, args.jobs)


def cmd_train(args, out: Path, timings: dict) -> None:
    train = _load_data(args.train)
    test = _load_data(args.test) if args.test else None
    if args.concat:
        train = train.concatenated()
        test = test.concatenated() if test is not None else None
    t = time.perf_counter()
    if args.model == "gapcnn":
        history: list = []
        model = gapdcam.train(train, args.epochs, args.lr, args.seed, args.batch_size,
                              patience=args.patience, test=test, eval_every=args.eval_every,
                              history=history)
        _write_csv(out / "training_log.csv", ["epoch", "loss", "train_accuracy", "test_accuracy"],
                   [(e, _fmt(l), _fmt(a), _fmt(b)) for e, l, a, b in history])
        model.save(out / "model")
    else:
        model = _build_model(args).fit(train)
        classifiers.save_model(model, out / "model")
    timings["train"] = time.perf_counter() - t
    rows = [("train", _fmt(np.mean(model.predict(train.X) == train.y)))]
    if test is not None:
        t = time.perf_counter()
        rows.append(("test", _fmt(np.mean(model.predict(test.X) == test.y))))
        timings["evaluate"] = time.perf_counter() - t
    _write_csv(out / "accuracy.csv", ["model", "split", "accuracy"], [(args.model, *r) for r in rows])


def _set_threads(model, jobs: int) -> None:
    for m in getattr(model, "models", None) or [model]:
        if hasattr(m, "num_threads"):
            m.num_threads = jobs


def cmd_explain(args, out: Path, timings: dict) -> None:
    data = _load_data(args.data)
    n = data.n if args.limit is None else min(args.limit, data.n)
    X = data.X[:n]
    method = args.method
    model = view = None
    if method not in ("random", "ground-truth"):
        if not args.model_dir:
            raise UsageError(f"--model-dir is required for method {method}")
        model = classifiers.load_model(Path(args.model_dir) / "model")
        view = "concat" if _read_manifest(args.model_dir)["config"].get("concat") else "multi"
        _set_threads(model, 1 if args.jobs > 1 else args.jobs)
    background = None
    if method.startswith("shap"):
        ref = _load_data(args.train) if args.train else data
        background = ref.X.mean(axis=0)
    d, L = data.d, data.L
    S = args.segments
    t = time.perf_counter()

    def expect(kind, want_view=None):
        if model.kind != kind or (want_view and view != want_view):
            raise DataError(f"method {method} needs a {kind} model"
                            + (f" trained with concat={want_view == 'concat'}" if want_view else ""))

    if method == "ridge":
        expect("ridge", "multi")
        pred = model.predict(X)
        maps = [linear.ridge_explanation(model.head, int(c), d, L) for c in pred]
    elif method == "random":
        maps = evalgt.random_explanations(n, d, S, args.seed, max(1, L // S))
    elif method == "ground-truth":
        if not args.mask:
            raise UsageError("--mask is required for method ground-truth")
        mask = tsio.read_saliency(args.mask)
        maps = [SaliencyMap(mask.weights, Scale.RAW, mask.segment_width)] * n
    elif method == "shap-concat":
        if not hasattr(model, "predict_proba") or view != "concat":
            raise DataError("shap-concat needs a probabilistic model trained with concat=true")
        predict = lambda Z: model.predict_proba(Z[:, None, :])  # noqa: E731
        bg = background.reshape(-1)
        maps = _parallel(lambda i: shapx.explain_concatenated(
            predict, X[i], S, args.samples, bg, seed=[args.seed, i])[0], range(n), args.jobs)
    elif method == "shap-chbych":
        expect("rocket-logistic-chbych")
        preds = shapx.channel_predictors(model.models)
        target = model.predict(X)
        maps = _parallel(lambda i: shapx.explain_channel_by_channel(
            preds, X[i], S, args.samples, background, int(target[i]), [args.seed, i])[0],
            range(n), args.jobs)
    else:
        expect("gapcnn")
        maps = _parallel(lambda i: gapdcam.dcam(model, X[i], args.k, args.seed), range(n), args.jobs)
    timings["explain"] = time.perf_counter() - t
    timings["explain_per_instance"] = timings["explain"] / max(n, 1)
    tsio.write_saliency_set(maps, out / "saliency")


def _read_maps(directory):
    maps = tsio.read_saliency_set(Path(directory) / "saliency")
    if not maps:
        raise DataError(f"no saliency maps under {directory}")
    return maps


def _read_mask(path) -> GroundTruthMask:
    return GroundTruthMask(tsio.read_saliency(path).weights.astype(np.int8))


def _aligned(w: SaliencyMap, g: GroundTruthMask) -> SaliencyMap:
    (d, S), (gd, gS) = w.shape, g.shape
    if d != gd or S % gS:
        raise ShapeMismatch(f"saliency shape {w.shape} is incompatible with mask shape {g.shape}")
    return align_to(w, gS)


def cmd_eval_gt(args, out: Path, timings: dict) -> None:
    g = _read_mask(args.mask)
    maps = [_aligned(w, g) for w in _read_maps(args.saliency)]
    t = time.perf_counter()
    m = evalgt.evaluate_explainer(maps, g, args.threshold)
    timings["evaluate"] = time.perf_counter() - t
    name = args.name or Path(args.saliency).name
    _write_csv(out / "metrics.csv", ["explainer", *evalgt.METRICS],
               [(name, *(_fmt(v) for v in m.as_dict().values()))])
    _write_csv(out / "per_instance.csv", ["instance", *evalgt.METRICS],
               [(i, *(_fmt(v) for v in row)) for i, row in enumerate(m.per_instance)])


def cmd_eval_amee(args, out: Path, timings: dict) -> None:
    train, test = _load_data(args.train), _load_data(args.test)
    explainers = {}
    for spec in args.explainer:
        name, _, directory = spec.partition("=")
        if not directory:
            raise UsageError(f"--explainer expects NAME=DIR, got {spec!r}")
        maps = _read_maps(directory)
        if len(maps) < test.n:
            raise DataError(f"explainer {name}: {len(maps)} maps for {test.n} test instances")
        explainers[name] = maps[: test.n]
    if len(explainers) < 2:
        raise UsageError("eval-amee needs at least two --explainer entries")
    strategies = [ameeval.PerturbationStrategy.parse(s) for s in args.strategies.split(",")]
    referees = ameeval.default_referees(args.kernels, (args.seed + 1, args.seed + 2))
    if args.referees:
        keep = args.referees.split(",")
        unknown = sorted(set(keep) - set(referees))
        if unknown:
            raise UsageError(f"unknown referees {unknown}")
        referees = {k: v for k, v in referees.items() if k in keep}
    report = ameeval.run_amee(train, test, explainers, referees, strategies,
                              tuple(args.fractions), args.seed, args.jobs)
    timings.update(report.timing)
    ameeval.write_curves_csv(report, out / "curves.csv")
    ameeval.write_report_csv(report, out / "report.csv")


def cmd_rank_channels(args, out: Path, timings: dict) -> None:
    ranking = evalgt.rank_channels(_read_maps(args.saliency))
    _write_csv(out / "ranking.csv", ["rank", "channel", "importance"],
               [(i + 1, c, _fmt(v)) for i, (c, v) in enumerate(ranking)])


REPORT_TABLES = {"accuracy.csv": "accuracy", "metrics.csv": "ground_truth", "report.csv": "amee",
                 "ranking.csv": "channels"}


def cmd_report(args, out: Path, timings: dict) -> None:
    """Concatenate every result table under ``--run`` into one CSV per table kind."""
    root = Path(args.run)
    if not root.is_dir():
        raise DataError(f"{root} is not a directory")
    found = {}
    for path in sorted(root.rglob("*.csv")):
        if path.name in REPORT_TABLES and out not in path.parents:
            found.setdefault(path.name, []).append(path)
    for fname, paths in sorted(found.items()):
        header, rows = None, []
        for p in paths:
            lines = [l for l in p.read_text().splitlines() if l and not l.startswith("#")]
            header = header or lines[0]
            rel = p.parent.relative_to(root).as_posix()
            rows += [f"{rel},{l}" for l in lines[1:]]
        (out / f"{REPORT_TABLES[fname]}.csv").write_text(
            "\n".join([f"run,{header}", *rows]) + "\n")


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "explain": cmd_explain, "eval-gt": cmd_eval_gt,
            "eval-amee": cmd_eval_amee, "rank-channels": cmd_rank_channels, "report": cmd_report}


# ------------------------------------------------------------------ parser

def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--out", required=True, help="output directory (created)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = Parser(prog="mtsxplain", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic benchmark")
    g.add_argument("--kind", choices=[k.value for k in synthgen.Kind], default="pseudo-periodic")
    g.add_argument("--n-train", type=int, default=100)
    g.add_argument("--n-test", type=int, default=100)
    g.add_argument("--channels", type=int, default=20)
    g.add_argument("--length", type=int, default=100)
    g.add_argument("--offset", type=float, default=1.0, help="box shift, +/- per class")
    g.add_argument("--segments", type=int, default=10, help="mask segments per channel")
    g.add_argument("--box-channels", type=_span, default=(0, 10), help="informative channels a:b")
    g.add_argument("--box-time", type=_span, default=(10, 20), help="informative time points a:b")

    t = sub.add_parser("train", parents=[common], help="train a classifier")
    t.add_argument("--model", choices=MODELS, required=True)
    t.add_argument("--train", required=True, help="training MTS-CSV")
    t.add_argument("--test", help="optional test MTS-CSV for accuracy")
    t.add_argument("--concat", action="store_true", help="train on the concatenated series")
    t.add_argument("--kernels", type=int, default=2000, help="ROCKET kernels (default 2000)")
    t.add_argument("--folds", type=int, default=5, help="ridge CV folds (default 5)")
    t.add_argument("--epochs", type=int, default=200, help="gapcnn epochs (default 200)")
    t.add_argument("--lr", type=float, default=1e-4, help="gapcnn Adam step (default 1e-4)")
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--patience", type=int, default=20, help="early-stop patience in epochs")
    t.add_argument("--eval-every", type=int, default=10, help="gapcnn test-accuracy period")

    e = sub.add_parser("explain", parents=[common], help="compute saliency maps")
    e.add_argument("--method", choices=METHODS, required=True)
    e.add_argument("--data", required=True, help="MTS-CSV of instances to explain")
    e.add_argument("--model-dir", help="output directory of a train run")
    e.add_argument("--train", help="training MTS-CSV for the SHAP background")
    e.add_argument("--mask", help="mask .salcsv (ground-truth method)")
    e.add_argument("--segments", type=int, default=10, help="SHAP segments per channel")
    e.add_argument("--samples", type=int, default=2048, help="SHAP coalition budget")
    e.add_argument("--k", type=int, default=200, help="dCAM permutations")
    e.add_argument("--limit", type=int, help="explain only the first N instances")

    v = sub.add_parser("eval-gt", parents=[common], help="score maps against the mask")
    v.add_argument("--saliency", required=True, help="output directory of an explain run")
    v.add_argument("--mask", required=True)
    v.add_argument("--threshold", type=float, default=evalgt.THRESHOLD)
    v.add_argument("--name", help="explainer label (default: saliency directory name)")

    a = sub.add_parser("eval-amee", parents=[common], help="perturbation-based ranking")
    a.add_argument("--train", required=True)
    a.add_argument("--test", required=True)
    a.add_argument("--explainer", action="append", default=[], help="NAME=DIR, repeatable")
    a.add_argument("--kernels", type=int, default=2000, help="ROCKET referee kernels")
    a.add_argument("--referees", help="comma-separated subset of rocket-logistic,rocket-ridge,ridge")
    a.add_argument("--strategies", default=",".join(s.name for s in ameeval.STRATEGIES))
    a.add_argument("--fractions", type=_float_list, default=list(ameeval.FRACTIONS))

    r = sub.add_parser("rank-channels", parents=[common], help="channel importance ranking")
    r.add_argument("--saliency", required=True)

    rp = sub.add_parser("report", parents=[common], help="consolidate the tables of a run tree")
    rp.add_argument("--run", required=True)
    return p


def _resolve(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        if not Path(args.config).exists():
            raise UsageError(f"config file {args.config} not found")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        _apply_config(sub, load_config(args.config))
        args = parser.parse_args(argv)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return args


def main(argv=None) -> int:
    try:
        args = _resolve(argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}
    _write_json(out / "manifest.json", {"schema": MANIFEST_SCHEMA, "version": __version__,
                                        "command": args.command, "config": config})
    timings: dict = {}
    try:
        COMMANDS[args.command](args, out, timings)
    except UsageError as exc:
        return _fail("UsageError", str(exc), EXIT_USAGE)
    except NumericError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_NUMERIC)
    except (MtsxError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_DATA)
    _write_json(out / "timings.json", {k: round(v, 6) for k, v in timings.items()})
    return 0


if __name__ == "__main__":
    sys.exit(main())
