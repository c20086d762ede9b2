"""Command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 usage error. Results go to stdout
(``--json`` for machine-readable output), errors and logs to stderr.

Any flag may also come from a TOML file given with ``--config``: top-level
keys set global flags, and a ``[<command>]`` table sets that command's flags
(dashes or underscores). Flags given on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import predictor as pred_mod
from . import ranker
from .core_data import (
    DatasetError,
    EmotionCategory,
    StrengthCurve,
    build_constraints,
    load_alignments,
    load_dataset,
    read_strength_curves,
    write_strength_curves,
)
from .evaluation import evaluate_mcd, read_frames
from .fixtures import FixtureSpec, write_fixtures
from .strength import (
    extract_raw_strengths,
    fit_normalization,
    normalize,
    transfer_strengths,
    validate_control,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("emostrength")

GLOBAL_DEFAULTS = {"seed": 0, "log_level": "WARNING", "out_dir": ".", "json": False}


class UsageError(Exception):
    pass


def _add_global_flags(parser: argparse.ArgumentParser) -> None:
    # SUPPRESS lets the flags appear before or after the command without clobbering each other
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for all randomness (default 0)")
    g.add_argument("--log-level", default=argparse.SUPPRESS,
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="stderr log level (default WARNING)")
    g.add_argument("--out-dir", default=argparse.SUPPRESS,
                   help="directory that relative output paths are resolved against (default .)")
    g.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print results as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emostrength", description="Phoneme-level emotion strength toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML file supplying default flag values")
    _add_global_flags(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _add_global_flags(p)
        return p

    p = command("gen-fixtures", "write a synthetic dataset with a known emotion direction")
    p.add_argument("--out", default=None, help="fixture directory (default: --out-dir)")
    p.add_argument("--category", default="happy")
    p.add_argument("--n-neutral", type=int, default=FixtureSpec.n_neutral)
    p.add_argument("--n-emotional", type=int, default=FixtureSpec.n_emotional)
    p.add_argument("--n-heldout", type=int, default=FixtureSpec.n_heldout)
    p.add_argument("--dim", type=int, default=FixtureSpec.dim)
    p.set_defaults(func=cmd_gen_fixtures)

    p = command("train-ranker", "fit a ranking function for one emotion against neutral")
    p.add_argument("--features", required=True, help="features JSONL")
    p.add_argument("--alignments", required=True, help="alignment CSV")
    p.add_argument("--category", required=True, help="emotion to rank above neutral")
    p.add_argument("--C", type=float, default=1.0, help="slack trade-off (default 1.0)")
    p.add_argument("--max-pairs", type=int, default=5000, help="cap on ordered and on similar pairs")
    p.add_argument("--max-newton-iters", type=int, default=50)
    p.add_argument("--grad-tol", type=float, default=1e-6)
    p.add_argument("--standardize", action="store_true", help="z-score features before fitting")
    p.add_argument("--out", required=True, help="model JSON")
    p.set_defaults(func=cmd_train_ranker)

    p = command("extract", "write normalized phoneme strengths for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--alignments", required=True)
    p.add_argument("--all-categories", action="store_true",
                   help="include utterances of every category, not only the model's")
    p.add_argument("--out", required=True, help="strength curve CSV")
    p.set_defaults(func=cmd_extract)

    p = command("transfer", "carry a reference utterance's strengths onto a target phoneme sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--reference-features", required=True)
    p.add_argument("--reference-alignments", required=True)
    p.add_argument("--reference-id", help="utterance to use when the reference file has several")
    p.add_argument("--target-phonemes", required=True, help="whitespace-separated phoneme labels")
    p.add_argument("--utterance-id", default="transfer")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_transfer)

    p = command("control", "validate a manually designed strength curve")
    p.add_argument("--strengths", required=True, help="comma- or whitespace-separated values in [0, 1]")
    p.add_argument("--n-phonemes", type=int, required=True)
    p.add_argument("--phonemes", help="whitespace-separated phoneme labels (default ph0, ph1, ...)")
    p.add_argument("--category", default="neutral")
    p.add_argument("--utterance-id", default="control")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_control)

    p = command("train-predictor", "fit the phoneme strength predictor on extracted curves")
    p.add_argument("--strengths", required=True, help="strength curve CSV (from extract)")
    p.add_argument("--category", required=True)
    p.add_argument("--hidden-dim", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--lr-decay", type=float, default=0.996, help="per-epoch learning-rate factor")
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--alpha", type=float, default=1.0, help="strength-loss weight, recorded in the model")
    p.add_argument("--context", type=int, default=1, help="neighbouring phonemes on each side")
    p.add_argument("--out", required=True, help="predictor JSON")
    p.add_argument("--loss-trace", help="write per-epoch loss CSV here")
    p.set_defaults(func=cmd_train_predictor)

    p = command("predict", "predict strength curves from phoneme sequences")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--alignments", help="alignment CSV; one curve per utterance")
    src.add_argument("--phonemes", help="a single whitespace-separated phoneme sequence")
    p.add_argument("--utterance-id", default="predicted")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = command("evaluate", "DTW-aligned mel-cepstral distortion between two frame CSVs")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--include-c0", action="store_true", help="keep the 0th coefficient in the distortion")
    p.add_argument("--band", type=int, help="Sakoe-Chiba band half-width")
    p.set_defaults(func=cmd_evaluate)

    return parser


# ---------------------------------------------------------------------------
# Config file
# ---------------------------------------------------------------------------


def _load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid config {path}: {exc}") from None


def _apply_config(parser: argparse.ArgumentParser, config: dict) -> dict:
    """Install config values as parser defaults; returns the global values."""
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    globals_ = {}
    for key, value in config.items():
        if isinstance(value, dict):
            if key not in subparsers.choices:
                raise UsageError(f"config: unknown command table [{key}]")
            sp = subparsers.choices[key]
            actions = {a.dest: a for a in sp._actions}
            for k, v in value.items():
                dest = k.replace("-", "_")
                if dest in GLOBAL_DEFAULTS:
                    raise UsageError(f"config: global flag {k!r} belongs at the top level")
                if dest not in actions or dest in ("help", "func"):
                    raise UsageError(f"config: unknown flag {k!r} for command {key!r}")
                actions[dest].required = False
                actions[dest].default = v
            for group in sp._mutually_exclusive_groups:
                if any(a.dest in {k.replace("-", "_") for k in value} for a in group._group_actions):
                    group.required = False
        else:
            dest = key.replace("-", "_")
            if dest not in GLOBAL_DEFAULTS:
                raise UsageError(f"config: unknown global flag {key!r}")
            globals_[dest] = value
    return globals_


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _out_path(args, path: str) -> Path:
    p = Path(path)
    if not p.is_absolute():
        p = Path(args.out_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, result: dict, text: str) -> None:
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        print(text)


def _split_labels(text: str) -> list[str]:
    labels = text.split()
    if not labels:
        raise UsageError("empty phoneme sequence")
    return labels


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen_fixtures(args) -> int:
    spec = FixtureSpec(
        category=EmotionCategory.parse(args.category),
        n_neutral=args.n_neutral,
        n_emotional=args.n_emotional,
        n_heldout=args.n_heldout,
        dim=args.dim,
    )
    if not spec.category.is_emotional:
        raise DatasetError("target category must be emotional")
    out = Path(args.out) if args.out else Path(args.out_dir)
    paths = write_fixtures(out, spec, seed=args.seed)
    _emit(args, {k: str(v) for k, v in paths.items()}, "\n".join(f"{k}: {v}" for k, v in paths.items()))
    return 0


def cmd_train_ranker(args) -> int:
    category = EmotionCategory.parse(args.category)
    if not category.is_emotional:
        raise DatasetError("target category must be emotional")
    records = load_dataset(args.features, args.alignments)
    cons = build_constraints(records, category, args.max_pairs, args.seed)
    config = ranker.RankerConfig(
        C=args.C, max_newton_iters=args.max_newton_iters, grad_tol=args.grad_tol, standardize=args.standardize
    )
    X = np.vstack([r.utterance_features for r in records])
    model = ranker.fit(X, cons, config, category)
    if not model.converged:
        raise ranker.RankerError(
            f"Newton solver did not converge in {model.n_iter} iterations "
            f"(grad norm {model.final_grad_norm:.3g} > {config.grad_tol:.3g})"
        )
    raw = [s for r in records if r.category is category for s in extract_raw_strengths(model, r)]
    if not raw:
        raise DatasetError(f"no {category.value} phoneme fragments to fit normalization on")
    model = model.with_normalization(fit_normalization(raw, category))
    out = _out_path(args, args.out)
    ranker.save_model(model, out)
    result = {
        "model": str(out),
        "category": category.value,
        "n_ordered": len(cons.ordered),
        "n_similar": len(cons.similar),
        "n_iter": model.n_iter,
        "final_objective": model.final_objective,
        "final_grad_norm": model.final_grad_norm,
        "min_raw": model.normalization.min_raw,
        "max_raw": model.normalization.max_raw,
    }
    _emit(args, result, f"final_objective {model.final_objective:.6g}\nfinal_grad_norm {model.final_grad_norm:.3g}")
    return 0


def _load_ranking_model(path) -> ranker.RankingModel:
    model = ranker.load_model(path)
    if model.normalization is None:
        raise DatasetError(f"{path}: ranking model has no normalization statistics")
    return model


def cmd_extract(args) -> int:
    model = _load_ranking_model(args.model)
    records = load_dataset(args.features, args.alignments)
    if not args.all_categories:
        records = [r for r in records if r.category is model.category]
    curves = []
    for r in sorted(records, key=lambda r: r.utterance_id):
        strengths = normalize(extract_raw_strengths(model, r), model.normalization)
        curves.append(StrengthCurve(r.utterance_id, r.category, r.phoneme_labels, tuple(strengths)))
    out = _out_path(args, args.out)
    write_strength_curves(out, curves)
    _emit(args, {"out": str(out), "n_curves": len(curves)}, f"wrote {len(curves)} curves to {out}")
    return 0


def cmd_transfer(args) -> int:
    model = _load_ranking_model(args.model)
    records = load_dataset(args.reference_features, args.reference_alignments)
    if args.reference_id is not None:
        matches = [r for r in records if r.utterance_id == args.reference_id]
        if not matches:
            raise DatasetError(f"reference utterance {args.reference_id!r} not found")
        reference = matches[0]
    elif len(records) == 1:
        reference = records[0]
    else:
        raise UsageError(f"reference file holds {len(records)} utterances; pass --reference-id")
    targets = _split_labels(args.target_phonemes)
    curve = transfer_strengths(model, model.normalization, reference, targets, args.utterance_id)
    out = _out_path(args, args.out)
    write_strength_curves(out, [curve])
    _emit(args, {"out": str(out), "strengths": list(curve.strengths)},
          " ".join(f"{s:.4f}" for s in curve.strengths))
    return 0


def cmd_control(args) -> int:
    try:
        values = [float(v) for v in args.strengths.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"--strengths: not a list of numbers: {args.strengths!r}") from None
    labels = _split_labels(args.phonemes) if args.phonemes else None
    curve = validate_control(values, args.n_phonemes, labels, args.category, args.utterance_id)
    out = _out_path(args, args.out)
    write_strength_curves(out, [curve])
    _emit(args, {"out": str(out), "strengths": list(curve.strengths)}, f"valid curve written to {out}")
    return 0


def cmd_train_predictor(args) -> int:
    category = EmotionCategory.parse(args.category)
    curves = read_strength_curves(args.strengths, category)
    if not curves:
        raise DatasetError(f"{args.strengths}: no strength curves")
    featurizer = pred_mod.PhonemeFeaturizer.from_sequences([c.phoneme_labels for c in curves], args.context)
    X, y = pred_mod.training_pairs(curves, featurizer)
    config = pred_mod.PredictorConfig(
        input_dim=featurizer.input_dim,
        hidden_dim=args.hidden_dim,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        alpha=args.alpha,
        lr_decay=args.lr_decay,
    )
    model = pred_mod.train_arrays(X, y, config, category=category, featurizer=featurizer)
    out = _out_path(args, args.out)
    pred_mod.save_model(model, out)
    if args.loss_trace:
        pred_mod.write_loss_trace(_out_path(args, args.loss_trace), model.loss_trace)
    final = model.loss_trace[-1]
    _emit(args, {"model": str(out), "n_samples": int(y.size), "final_loss": final},
          f"final training L1 {final:.6f} on {y.size} phonemes")
    return 0


def cmd_predict(args) -> int:
    model = pred_mod.load_model(args.model)
    if args.alignments:
        sequences = sorted((uid, al.labels) for uid, al in load_alignments(args.alignments).items())
    else:
        sequences = [(args.utterance_id, tuple(_split_labels(args.phonemes)))]
    curves = [pred_mod.predict_phonemes(model, labels, uid) for uid, labels in sequences]
    out = _out_path(args, args.out)
    write_strength_curves(out, curves)
    _emit(args, {"out": str(out), "n_curves": len(curves)}, f"wrote {len(curves)} curves to {out}")
    return 0


def cmd_evaluate(args) -> int:
    value = evaluate_mcd(read_frames(args.pred), read_frames(args.target), skip_c0=not args.include_c0, band=args.band)
    _emit(args, {"mcd_db": value}, f"{value:.3f}")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    config_globals = {}
    if known.config:
        try:
            config_globals = _apply_config(parser, _load_config(known.config))
        except UsageError as exc:
            parser.error(str(exc))
    args = parser.parse_args(argv)
    for key, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, config_globals.get(key, default))

    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DatasetError, ranker.RankerError, pred_mod.TrainingError, ValueError, OSError) as exc:
        print(f"emostrength {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
