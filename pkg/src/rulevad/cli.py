"""Command-line entry point.

Exit codes: 0 success, 1 bad input (file, flag or value), 2 internal invariant
violation.  Settings resolve as flags > ``--config`` file > built-in defaults;
``--print-config`` shows the resolved values and exits.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import align
from .bench import bench_mining, rows_to_csv
from .ebmm import complexity_estimate
from .errors import InputError, InvariantError, ParseError, RuleVADError
from .feature_store import load_features, load_frame_labels, load_manifest, load_transcript
from .lite_temporal import load_checkpoint, save_checkpoint
from .metrics import ScoredLabels, average_precision, roc_auc
from .rulemine import MiningConfig, TransactionDB, default_workers, mine, ordered_rules, transcript_to_transactions
from .training import Model, TrainConfig, config_fields, prepare_dataset, score_video, train

log = logging.getLogger("rulevad")

SUBCOMMANDS = ("score", "mine", "train", "eval", "bench", "complexity")
DEFAULTS = {**config_fields(TrainConfig), "workers": 0}  # workers 0 = host core count


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _coerce(key: str, raw: str, where: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise InputError(f"{where}: {key} expects {type(default).__name__}, got {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", path, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ParseError(f"unknown config key {key!r}", path, lineno)
        out[key] = _coerce(key, value, f"{path}:{lineno}")
    return out


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    for key, flag in (("min_support", "--min-support"), ("min_confidence", "--min-confidence")):
        if not 0.0 <= cfg[key] <= 1.0:
            raise InputError(f"{flag} must be a fraction in [0, 1], got {cfg[key]}")
    if cfg["workers"] < 0:
        raise InputError("--workers must be >= 0")
    if cfg["workers"] == 0:
        cfg["workers"] = default_workers()
    return cfg


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**{k: cfg[k] for k in config_fields(TrainConfig)})


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def _count(text: str) -> int:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a count, got {text!r}") from None
    if not v.is_integer():
        raise argparse.ArgumentTypeError(f"expected an integer count, got {text!r}")
    return int(v)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--print-config", action="store_true", help="print resolved settings and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="rulevad", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def encoder_flags(sp):
        sp.add_argument("--alpha", type=float, help="patch attention temperature")
        sp.add_argument("--sigma", type=float, help="temporal distance kernel width")

    def mining_flags(sp):
        sp.add_argument("--min-support", dest="min_support", type=float)
        sp.add_argument("--min-confidence", dest="min_confidence", type=float)
        sp.add_argument("--max-rules", dest="max_rules", type=int)
        sp.add_argument("--workers", type=int, help="worker processes (0 = all cores)")

    s = sub.add_parser("score", parents=[common], help="per-frame anomaly scores")
    s.add_argument("features", nargs="*", help="feature files")
    s.add_argument("--manifest")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out-dir", required=True)
    encoder_flags(s)

    s = sub.add_parser("mine", parents=[common], help="association rules from transcripts")
    s.add_argument("transcripts", nargs="*")
    s.add_argument("--manifest")
    s.add_argument("--class-from-manifest", action="store_true",
                   help="append each video's class name to its transactions")
    s.add_argument("--n-chunks", dest="n_chunks", type=int)
    s.add_argument("--out", help="JSON-lines output (default stdout)")
    mining_flags(s)

    s = sub.add_parser("train", parents=[common], help="train encoder, head and prompts")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--history", help="loss history CSV path")
    s.add_argument("--embedding-table", help="RVE1 token table (default: seeded hash)")
    s.add_argument("--learning-rate", dest="learning_rate", type=float)
    s.add_argument("--max-steps", dest="max_steps", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--max-video-len", dest="max_video_len", type=int)
    s.add_argument("--tau", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--lambda1", type=float)
    s.add_argument("--lambda2", type=float)
    s.add_argument("--prompt-len", dest="prompt_len", type=int)
    s.add_argument("--bce-mode", dest="bce_mode", choices=("video", "frame"))
    encoder_flags(s)
    mining_flags(s)

    s = sub.add_parser("eval", parents=[common], help="AP and ROC-AUC")
    s.add_argument("--scores", help="CSV of score,label rows")
    s.add_argument("--manifest")
    s.add_argument("--checkpoint")
    encoder_flags(s)

    s = sub.add_parser("bench", parents=[common], help="sequential vs parallel mining timings")
    s.add_argument("--lengths", default="10,20,30,40,50")
    s.add_argument("--min-support-pcts", dest="support_pcts", default="30")
    s.add_argument("--db-size", dest="db_size", type=int, default=100_000)
    s.add_argument("--repeats", type=int, default=1)
    s.add_argument("--out")
    mining_flags(s)

    s = sub.add_parser("complexity", parents=[common], help="patch monitoring vs optical flow op counts")
    for name in ("n", "m", "d", "hw", "kernel", "iters"):
        s.add_argument(f"--{name}", type=_count, required=True)
    return p


def _write(path, text: str) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _transaction_db(args) -> TransactionDB:
    dbs = []
    if args.class_from_manifest and not args.manifest:
        raise InputError("--class-from-manifest requires --manifest")
    if args.manifest:
        for e in load_manifest(args.manifest):
            if e.transcript_path is None:
                continue
            t = load_transcript(e.transcript_path, e.video_id)
            dbs.append(transcript_to_transactions(t, e.class_name if args.class_from_manifest else None))
    for path in args.transcripts:
        dbs.append(transcript_to_transactions(load_transcript(path)))
    if not args.manifest and not args.transcripts:
        raise InputError("mine needs transcript paths or --manifest")
    return TransactionDB.concat(dbs)


def cmd_mine(args, cfg) -> int:
    db = _transaction_db(args)
    n_chunks = args.n_chunks if args.n_chunks else cfg["workers"]
    mcfg = MiningConfig(cfg["min_support"], cfg["min_confidence"], max(1, n_chunks))
    result = mine(db, mcfg, cfg["workers"])
    lines = [json.dumps(r.to_record()) + "\n" for r in ordered_rules(result.rules, cfg["max_rules"])]
    _write(args.out, "".join(lines))
    log.info("%d transactions, %d frequent itemsets, %d rules", len(db), len(result.frequents), len(result.rules))
    return 0


def _load_model(path) -> Model:
    params, prompts = load_checkpoint(path)
    return Model(params, prompts)


def _feature_sets(args):
    sets = []
    if args.manifest:
        for e in load_manifest(args.manifest):
            sets.append((e, load_features(e.feature_path, e.video_id)))
    for path in args.features:
        sets.append((None, load_features(path)))
    if not sets:
        raise InputError("score needs feature paths or --manifest")
    return sets


def cmd_score(args, cfg) -> int:
    model = _load_model(args.checkpoint)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for _, fs in _feature_sets(args):
        if fs.dim != model.encoder.dim:
            raise InputError(f"video {fs.video_id!r} has dim {fs.dim}, checkpoint expects {model.encoder.dim}")
        scores = score_video(model, fs, cfg["alpha"], cfg["sigma"])
        with open(out / f"{fs.video_id}.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("frame_index", "score"))
            for i, s in enumerate(scores.frame):
                w.writerow((i, f"{s:.6f}"))
    return 0


def cmd_train(args, cfg) -> int:
    tcfg = train_config(cfg)
    manifest = load_manifest(args.manifest)
    embedder = align.TextEmbedder.from_table_file(args.embedding_table) if args.embedding_table else None
    dataset = prepare_dataset(manifest, tcfg, embedder)
    result = train(dataset, tcfg)
    save_checkpoint(args.out, result.model.encoder, result.model.prompts)
    if args.history:
        with open(args.history, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("step", "l_bce", "l_align", "l_contrast", "l_total"))
            for step, *losses in result.history:
                w.writerow([step] + [f"{x:.8f}" for x in losses])
    last = result.history[-1] if result.history else (0, float("nan"), 0.0, 0.0, float("nan"))
    print(f"steps={len(result.history)} l_bce={last[1]:.6f} l_total={last[4]:.6f}")
    return 0


def _read_scores_csv(path):
    scores, labels = [], []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            try:
                s, y = float(row[0]), int(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue  # header
                raise ParseError("expected score,label", path, lineno) from None
            scores.append(s)
            labels.append(y)
    return scores, labels


def cmd_eval(args, cfg) -> int:
    if args.scores:
        scores, labels = _read_scores_csv(args.scores)
    elif args.manifest and args.checkpoint:
        model = _load_model(args.checkpoint)
        scores, labels = [], []
        for e in load_manifest(args.manifest):
            fs = load_features(e.feature_path, e.video_id)
            out = score_video(model, fs, cfg["alpha"], cfg["sigma"])
            if e.frame_labels_path is not None:
                fl = load_frame_labels(e.frame_labels_path)
                if len(fl) != fs.n_frames:
                    raise InputError(f"video {e.video_id!r}: {len(fl)} frame labels for {fs.n_frames} frames")
                scores.extend(out.frame)
                labels.extend(fl)
            else:
                scores.extend(out.frame)
                labels.extend([e.video_label] * fs.n_frames)
    else:
        raise InputError("eval needs --scores, or --manifest with --checkpoint")
    data = ScoredLabels(scores, labels)
    print(f"AP={average_precision(data):.4f}")
    print(f"AUC={roc_auc(data):.4f}")
    return 0


def cmd_bench(args, cfg) -> int:
    rows = bench_mining(_int_list(args.lengths), _float_list(args.support_pcts), args.db_size,
                        cfg["workers"], cfg["seed"], cfg["min_confidence"], args.repeats)
    _write(args.out, rows_to_csv(rows))
    return 0


def cmd_complexity(args, cfg) -> int:
    est = complexity_estimate(args.n, args.m, args.d, args.hw, args.kernel, args.iters)
    print(f"ebmm_ops={est.ebmm_ops}")
    print(f"flow_ops={est.flow_ops}")
    print(f"ratio={float(est.ratio):g}")
    return 0


COMMANDS = {
    "score": cmd_score,
    "mine": cmd_mine,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "complexity": cmd_complexity,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        if args.print_config:
            for key in sorted(cfg):
                print(f"{key} = {cfg[key]}")
            return 0
        np.seterr(over="ignore", under="ignore")
        return COMMANDS[args.command](args, cfg)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (InvariantError, AssertionError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 2
    except RuleVADError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
