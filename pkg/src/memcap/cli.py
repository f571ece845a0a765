"""Command-line entry point.

Subcommands: train, generate, evaluate, count-params, inspect-attention,
grad-check, make-toy-data.  Options can also come from a JSON config file
(--config); explicit flags win on conflict.  Exit codes: 0 success,
1 usage or configuration error, 2 runtime failure.
"""

import argparse
import json
import sys
from pathlib import Path


from .audit import audit, format_breakdown
from .baseline import AttentionLstmDecoder
from .data import batch_iter, load_manifest, load_split, load_vocab, read_feature_file
from .decoder import ConfigError, DecoderConfig, MemoryDecoder
from .evaluate import evaluate_split, greedy_decode
from .toy import make_toy_corpus
from .training import AdamState, evaluation_loss, load_checkpoint, save_checkpoint, train_epoch
from .verify import TOLERANCE, run_suite

EARLY_STOP_PATIENCE = 10

# flag name -> default; a JSON config file may override any of these
DEFAULTS = {
    "n": 512,
    "d_a": 100,
    "lambda1": 0.2,
    "lambda3": 0.2,
    "lambda5": 0.6,
    "lr": 1e-3,
    "batch_size": 16,
    "epochs": 40,
    "max_len": 30,
    "seed": 0,
    "attention": "soft",
    "decoder": "memory",
}


def _add_common(parser):
    parser.add_argument("--config", help="JSON file with option defaults (flags win)")
    parser.add_argument("--features-dir")
    parser.add_argument("--manifest")
    parser.add_argument("--vocab")
    parser.add_argument("--checkpoint")
    parser.add_argument("--out")
    parser.add_argument("--n", type=int)
    parser.add_argument("--d-a", dest="d_a", type=int)
    parser.add_argument("--lambda1", type=float)
    parser.add_argument("--lambda3", type=float)
    parser.add_argument("--lambda5", type=float)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--max-len", dest="max_len", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--attention", choices=["soft", "dot"])
    parser.add_argument("--decoder", choices=["memory", "lstm"])


def _build_parser():
    parser = argparse.ArgumentParser(prog="memcap")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("train", "generate", "evaluate", "inspect-attention"):
        p = sub.add_parser(name)
        _add_common(p)
        if name in ("generate", "evaluate"):
            p.add_argument("--split", default="test", choices=["train", "val", "test"])
        if name == "inspect-attention":
            p.add_argument("--video-id", required=True)

    p = sub.add_parser("count-params")
    _add_common(p)
    p.add_argument("--vocab-size", type=int, default=12596)
    p.add_argument("--feature-dim", type=int, default=1024)

    p = sub.add_parser("grad-check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-end-to-end", action="store_true")

    p = sub.add_parser("make-toy-data")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _merge_options(args):
    """Layer defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            file_opts = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config file {config_path}: {err}")
        unknown = set(file_opts) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config file keys: {sorted(unknown)}")
        merged.update(file_opts)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _require(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) is None]
    if missing:
        raise ConfigError(f"missing required options: {', '.join('--' + n for n in missing)}")


def _decoder_config(opts, vocab_size, feature_dim):
    return DecoderConfig(
        vocab_size=vocab_size,
        feature_dim=feature_dim,
        n=opts["n"],
        d_a=opts["d_a"],
        lambda1=opts["lambda1"],
        lambda3=opts["lambda3"],
        lambda5=opts["lambda5"],
        max_caption_len=opts["max_len"],
        seed=opts["seed"],
        attention=opts["attention"],
    ).validate()


def _load_corpus(args):
    vocab = load_vocab(args.vocab)
    entries = load_manifest(args.manifest)
    return vocab, entries


def _feature_dim(features_dir, entries):
    first = read_feature_file(Path(features_dir) / f"{entries[0].video_id}.vff")
    return first.q


def _split_videos(features_dir, entries, split):
    """(video_id, features, captions) per video of a split."""
    videos = []
    for entry in entries:
        if entry.split != split:
            continue
        feat = read_feature_file(Path(features_dir) / f"{entry.video_id}.vff")
        videos.append((entry.video_id, feat.values, entry.captions))
    if not videos:
        raise ConfigError(f"split {split!r} has no videos in the manifest")
    return videos


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n")


def _dump_jsonl(path, rows):
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _generation_row(gen, text):
    return {
        "video_id": gen.video_id,
        "caption": text,
        "tokens": gen.tokens,
        "attention": gen.attention,
    }


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_train(args):
    opts = _merge_options(args)
    _require(args, "features-dir", "manifest", "vocab", "out")
    if opts["epochs"] < 1:
        raise ConfigError(f"epochs must be at least 1, got {opts['epochs']}")
    if opts["batch_size"] < 1:
        raise ConfigError(f"batch-size must be at least 1, got {opts['batch_size']}")
    if opts["lr"] < 0:
        raise ConfigError(f"lr must be nonnegative, got {opts['lr']}")
    vocab, entries = _load_corpus(args)
    config = _decoder_config(opts, len(vocab), _feature_dim(args.features_dir, entries))

    model_cls = MemoryDecoder if opts["decoder"] == "memory" else AttentionLstmDecoder
    model = model_cls.create(config)
    named = list(model.params.named())
    adam = AdamState(named, lr=opts["lr"])

    train_items = load_split(args.features_dir, entries, vocab, "train")
    if not train_items:
        raise ConfigError("manifest has no train split")
    val_items = load_split(args.features_dir, entries, vocab, "val")

    log_path = Path(str(args.out) + ".losses.jsonl")
    best_val = None
    stale = 0
    log_rows = []
    for epoch in range(opts["epochs"]):
        stats = train_epoch(
            model, batch_iter(train_items, opts["batch_size"], opts["seed"], epoch), adam
        )
        row = {
            "epoch": epoch,
            "loss": stats["loss"],
            "components": {str(j): v for j, v in stats["components"].items()},
        }
        if val_items:
            row["val_loss"] = evaluation_loss(model, val_items)
        log_rows.append(row)
        print(f"epoch {epoch}: loss {stats['loss']:.6f}"
              + (f" val {row['val_loss']:.6f}" if val_items else ""))
        if val_items:
            if best_val is None or row["val_loss"] < best_val:
                best_val = row["val_loss"]
                stale = 0
                save_checkpoint(args.out, model, adam, epoch=epoch, best_val_loss=best_val)
            else:
                stale += 1
                if stale >= EARLY_STOP_PATIENCE:
                    print(f"early stop at epoch {epoch} (no val improvement "
                          f"for {EARLY_STOP_PATIENCE} epochs)")
                    break
    if not val_items:
        save_checkpoint(args.out, model, adam, epoch=epoch, best_val_loss=None)
    _dump_jsonl(log_path, log_rows)
    print(f"checkpoint: {args.out}")
    print(f"loss log:   {log_path}")
    return 0


def cmd_generate(args):
    _require(args, "features-dir", "manifest", "vocab", "checkpoint", "out")
    vocab, entries = _load_corpus(args)
    model, _, _ = load_checkpoint(args.checkpoint)
    videos = _split_videos(args.features_dir, entries, args.split)
    rows = []
    for video_id, features, _ in videos:
        gen = greedy_decode(model, features, video_id, vocab)
        rows.append(_generation_row(gen, gen.text))
    _dump_jsonl(args.out, rows)
    print(f"wrote {len(rows)} generations to {args.out}")
    return 0


def cmd_evaluate(args):
    _require(args, "features-dir", "manifest", "vocab", "checkpoint")
    vocab, entries = _load_corpus(args)
    model, _, _ = load_checkpoint(args.checkpoint)
    videos = _split_videos(args.features_dir, entries, args.split)
    report, _ = evaluate_split(model, videos, vocab)
    print(json.dumps(report, sort_keys=True))
    if args.out:
        _dump_json(args.out, report)
    return 0


def cmd_count_params(args):
    opts = _merge_options(args)
    config = DecoderConfig(
        vocab_size=args.vocab_size,
        feature_dim=args.feature_dim,
        n=opts["n"],
        d_a=opts["d_a"],
        attention=opts["attention"],
    )
    print(format_breakdown(config))
    core, _ = audit(config, "decoder-core")
    lstm, _ = audit(config, "lstm-baseline")
    print(f"decoder-core total:  {core:,} ({core / 1e6:.2f} M)")
    print(f"lstm-baseline total: {lstm:,} ({lstm / 1e6:.2f} M)")
    return 0


def cmd_inspect_attention(args):
    _require(args, "features-dir", "vocab", "checkpoint", "out")
    vocab = load_vocab(args.vocab)
    model, _, _ = load_checkpoint(args.checkpoint)
    feat = read_feature_file(Path(args.features_dir) / f"{args.video_id}.vff")
    gen = greedy_decode(model, feat.values, args.video_id, vocab)
    _dump_json(args.out, _generation_row(gen, gen.text))
    print(f"wrote attention dump for {args.video_id} to {args.out}")
    return 0


def cmd_grad_check(args):
    results = run_suite(seed=args.seed, include_end_to_end=not args.skip_end_to_end)
    failures = 0
    for name, err in results:
        ok = err < TOLERANCE
        failures += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name:<40} max_rel_err {err:.3e}")
    print(f"{len(results) - failures}/{len(results)} gradient checks passed "
          f"(tolerance {TOLERANCE:g})")
    return 0 if failures == 0 else 2


def cmd_make_toy_data(args):
    summary = make_toy_corpus(args.out, seed=args.seed)
    print(json.dumps(summary, sort_keys=True))
    return 0


_COMMANDS = {
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "count-params": cmd_count_params,
    "inspect-attention": cmd_inspect_attention,
    "grad-check": cmd_grad_check,
    "make-toy-data": cmd_make_toy_data,
}


def dispatch(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # runtime failures map to exit 2
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


def main(argv=None):
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
