"""``devforge`` command line."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import PIPELINES, config_from_dict, load_config
from .errors import DevforgeError, MalformedConfig
from .imports import LanguageId, detect_language, extract_imports
from .stages import PIPELINE_ORDER, STAGES, stage_mine

logger = logging.getLogger("devforge")

COMMANDS = PIPELINE_ORDER + ["all", "imports"]


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--fixtures", type=Path, help="replay recorded GitHub responses from this directory")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--workers", type=int, help="training threads for every pipeline")
    common.add_argument("--deterministic", action="store_true", help="force workers=1 for reproducible output")
    common.add_argument("--out", type=Path, help="output root directory")
    common.add_argument("--strict", action="store_true", help="reject unknown config keys")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="devforge", description="Developer expertise embeddings")
    parser.add_argument("--version", action="version", version=f"devforge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in PIPELINE_ORDER + ["all"]:
        sub.add_parser(name, parents=[common])
    imp = sub.add_parser("imports", help="print the imports found in one source file")
    imp.add_argument("--lang", help="language id (default: from the file extension)")
    imp.add_argument("--file", type=Path, required=True)
    imp.add_argument("-v", "--verbose", action="store_true")
    return parser


def _resolve(args):
    cfg = load_config(args.config, strict=args.strict) if args.config else config_from_dict({}, args.strict)
    raw = cfg.raw
    if args.seed is not None:
        if args.seed < 0:
            raise MalformedConfig("seed must be an unsigned int")
        raw["seed"] = args.seed
    workers = 1 if args.deterministic else args.workers
    if workers is not None:
        if workers < 1:
            raise MalformedConfig("workers must be >= 1")
        for p in PIPELINES:
            raw[p]["workers"] = workers
    if args.out is not None:
        raw["paths"]["out_dir"] = str(args.out)
    return cfg


def _imports(args):
    lang = args.lang or detect_language(str(args.file))
    if lang is None:
        print(f"devforge: cannot infer the language of {args.file}; pass --lang", file=sys.stderr)
        return 2
    try:
        lang = LanguageId(lang)
    except ValueError:
        print(f"devforge: unknown language {lang!r}; one of {', '.join(l.value for l in LanguageId)}",
              file=sys.stderr)
        return 2
    for name in extract_imports(args.file.read_text(encoding="utf-8", errors="replace"), lang):
        print(name)
    return 0


def run_command(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "imports":
        return _imports(args)
    try:
        cfg = _resolve(args)
    except (MalformedConfig, OSError) as exc:
        print(f"devforge: config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "all":
        names = PIPELINE_ORDER if (args.fixtures or cfg.raw["paths"]["developers_file"]) else PIPELINE_ORDER[1:]
    else:
        names = [args.command]
    workers = cfg.raw["repos"]["workers"]
    for name in names:
        try:
            if name == "mine":
                line = stage_mine(cfg, args.fixtures, workers)
            else:
                line = STAGES[name](cfg)
        except (DevforgeError, OSError, ValueError, KeyError) as exc:
            print(f"devforge {name}: failed: {exc}", file=sys.stderr)
            return 1
        print(line, flush=True)
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
