"""Command line entry point: ``simulcfm {gen,run,sweep,score}``.

Exit codes: 0 success, 1 configuration error, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .harness import (ConfigError, InputError, RunConfig, SweepConfig, format_summary, parse_kv_file,
                      run, score, sweep)
from .synthetic import TaskSpec, corpus_stats, describe, generate, write_corpus

EXIT_OK, EXIT_CONFIG, EXIT_INPUT = 0, 1, 2


def _pair(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _grid(text):
    key, values = _pair(text)
    return key, [v for v in values.split(",") if v]


def _config_values(args) -> dict:
    values = parse_kv_file(args.config) if args.config else {}
    for name in ("policy", "dataset", "chunk_ms", "workers", "clock", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if getattr(args, "cfm", None) is not None:
        values["cfm"] = args.cfm
    values.update(dict(args.set or []))
    return values


def _emit_summary(text: str, path) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_gen(args) -> int:
    try:
        spec = TaskSpec(
            seed=args.seed, vocab_size=args.vocab_size, utterance_count=args.utterances,
            source_len_range=(args.min_len, args.max_len), frames_per_token=args.frames_per_token,
            frame_ms=args.frame_ms, ambiguity_rate=args.ambiguity_rate, sticky_prior=args.sticky_prior,
            attn_spread=args.attn_spread, context_decay=args.context_decay, noise=args.noise,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    corpus = generate(spec)
    write_corpus(corpus, args.out)
    stats = corpus_stats(corpus)
    print(f"wrote {args.out}: {describe(spec)}")
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = RunConfig.from_flat(_config_values(args))
    if not cfg.dataset_path:
        raise ConfigError("no dataset given (use --dataset or dataset = ... in the config)")
    print("# " + json.dumps(cfg.to_flat(), sort_keys=True), file=sys.stderr)
    summary = run(cfg, log_path=args.log)
    _emit_summary(format_summary([summary]), args.summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = RunConfig.from_flat(_config_values(args))
    if not base.dataset_path:
        raise ConfigError("no dataset given (use --dataset or dataset = ... in the config)")
    grid = tuple((key, tuple(raw)) for key, raw in args.grid or [])
    cfg = SweepConfig(base=base, grid=grid, paired_ablation=not args.unpaired)
    if args.log_dir:
        os.makedirs(args.log_dir, exist_ok=True)
    rows = sweep(cfg, log_dir=args.log_dir)
    _emit_summary(format_summary(rows), args.summary)
    return EXIT_OK


def cmd_score(args) -> int:
    summary = score(*args.logs)
    _emit_summary(format_summary([summary]), args.summary)
    return EXIT_OK


def _add_run_options(p):
    p.add_argument("--config", help="key = value file")
    p.add_argument("--set", action="append", type=_pair, metavar="KEY=VALUE", help="override one setting")
    p.add_argument("--dataset")
    p.add_argument("--policy", choices=("local_agreement", "hold_n", "alignatt", "edatt"))
    p.add_argument("--chunk-ms", dest="chunk_ms", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--clock", choices=("ideal", "measured"))
    p.add_argument("--seed", type=int)
    p.add_argument("--cfm", dest="cfm", action="store_true", default=None)
    p.add_argument("--no-cfm", dest="cfm", action="store_false")
    p.add_argument("--summary", help="write the tab-separated summary here as well")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simulcfm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    d = TaskSpec()
    g = sub.add_parser("gen", help="write a synthetic corpus as JSON lines")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--vocab-size", type=int, default=d.vocab_size)
    g.add_argument("--utterances", type=int, default=d.utterance_count)
    g.add_argument("--min-len", type=int, default=d.source_len_range[0])
    g.add_argument("--max-len", type=int, default=d.source_len_range[1])
    g.add_argument("--frames-per-token", type=int, default=d.frames_per_token)
    g.add_argument("--frame-ms", type=int, default=d.frame_ms)
    g.add_argument("--ambiguity-rate", type=float, default=d.ambiguity_rate)
    g.add_argument("--sticky-prior", type=float, default=d.sticky_prior)
    g.add_argument("--context-decay", type=float, default=d.context_decay)
    g.add_argument("--attn-spread", type=float, default=d.attn_spread)
    g.add_argument("--noise", type=float, default=d.noise)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="translate a corpus with one configuration")
    _add_run_options(r)
    r.add_argument("--log", help="per-utterance run log (JSON lines)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a parameter grid, CFM on and off")
    _add_run_options(s)
    s.add_argument("--grid", action="append", type=_grid, metavar="KEY=V1,V2,...")
    s.add_argument("--unpaired", action="store_true", help="only run the base CFM setting")
    s.add_argument("--log-dir")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("score", help="recompute metrics from run logs")
    c.add_argument("logs", nargs="+")
    c.add_argument("--summary")
    c.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
