"""Command line entry point: ``posinduce {train,tag,eval,sweep}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.  Failures print a single JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from . import experiment
from .exceptions import ConfigError, DataError, PosInduceError
from .experiment import RunConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _add_config_flags(parser):
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "lowercase":
            parser.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction,
                                default=None)
        else:
            parser.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())


def _overrides(args) -> dict:
    return {f.name: getattr(args, f.name) for f in fields(RunConfig)}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="posinduce",
                     description="Unsupervised POS induction with embedding-emission models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="key = value configuration file")
    _add_config_flags(p)

    p = sub.add_parser("tag", help="decode a corpus with a trained model")
    p.add_argument("--model", dest="model_file", required=True, help="model.npz written by train")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mode", choices=("viterbi", "posterior"))
    p.add_argument("--embeddings")
    p.add_argument("--reconstruction-labels")
    p.add_argument("--corpus-format", choices=("conll", "plain"))
    p.add_argument("--token-column", type=int)

    p = sub.add_parser("eval", help="score predictions against gold tags")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--tag-map")
    p.add_argument("--token-column", type=int, default=0)
    p.add_argument("--tag-column", type=int, default=1)
    p.add_argument("--embeddings", help="report the token OOV rate against these vectors")
    p.add_argument("--embeddings-format", default="auto")
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--output", help="metrics file (default: stdout)")

    p = sub.add_parser("sweep", help="train and evaluate over many embedding files")
    p.add_argument("--config", required=True, help="sweep configuration file")
    p.add_argument("--results", required=True, help="CSV output path")
    _add_config_flags(p)
    return parser


def _run(args) -> None:
    if args.command == "train":
        file_values = experiment.load_config(args.config) if args.config else {}
        cfg = experiment.build_config(file_values, _overrides(args))
        paths = experiment.train(cfg)
        for name, path in paths.items():
            print(f"{name}\t{path}")
    elif args.command == "tag":
        experiment.tag(args.model_file, args.corpus, args.output, mode=args.mode,
                       embeddings=args.embeddings,
                       reconstruction_labels=args.reconstruction_labels,
                       corpus_format=args.corpus_format, token_column=args.token_column)
    elif args.command == "eval":
        result = experiment.evaluate(args.predictions, args.gold, args.tag_map,
                                     args.token_column, args.tag_column, args.embeddings,
                                     args.embeddings_format, args.lowercase)
        text = experiment.format_metrics(result)
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    elif args.command == "sweep":
        with open(args.config, encoding="utf-8") as fh:
            sweep_cfg = experiment.parse_sweep(fh, _overrides(args))
        rows = experiment.sweep(sweep_cfg, args.results)
        failed = sum(1 for r in rows if r["error"])
        print(f"{len(rows)} cells, {failed} failed -> {args.results}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        _run(args)
    except PosInduceError as exc:
        print(experiment.error_record(exc), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(experiment.error_record(DataError(str(exc))), file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
