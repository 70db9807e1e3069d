"""Command-line interface: ``amsn <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure. Every error is reported on stderr as one line starting
with ``AMSN-ERR:``. ``AMSN_THREADS`` caps the BLAS thread pool; 1 gives
deterministic, single-threaded runs.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import ExitStack
from pathlib import Path

import numpy as np

from . import checkpoint
from .errors import AMSNError, ConfigurationError, DataError, NumericError

log = logging.getLogger("amsn")

ERR_PREFIX = "AMSN-ERR:"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
THREADS_ENV = "AMSN_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def thread_limit() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def deterministic() -> bool:
    return thread_limit() == 1


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    from .data.synth import synth_generate
    from .data.synth import DEFAULT_TYPES
    manifest = synth_generate(args.out, seed=args.seed, count_per_type=args.count_per_type,
                              size=args.size, types=args.types or DEFAULT_TYPES)
    for setting, count in manifest.summary().items():
        print(f"{setting}\t{count}")
    print(f"manifest: {Path(args.out) / 'manifest.tsv'}")
    return EXIT_OK


def dataset_locations(roots) -> dict[str, Path]:
    """Dataset directories found under ``roots``, first root wins on name clashes."""
    found = {}
    for root in map(Path, roots):
        if not root.is_dir():
            raise DataError(f"dataset root {root} is not a directory")
        for d in sorted(p for p in root.iterdir() if p.is_dir()):
            found.setdefault(d.name, d)
    return found


def cmd_manifest(args) -> int:
    from .data.manifest import build_manifest
    manifest = build_manifest(dataset_locations(args.roots), args.split, seed=args.seed, rgb_subsample=args.rgb_subsample)
    manifest.write(args.out)
    for setting, count in manifest.summary(args.split).items():
        print(f"{setting}\t{count}")
    return EXIT_OK


def _overrides(pairs) -> dict[str, str]:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override {item!r} must be key=value")
        out[key.strip()] = value.strip()
    return out


def cmd_train(args) -> int:
    from .config import load_config
    from .data.manifest import Manifest
    from .trainer import train
    overrides = _overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if deterministic():
        overrides["prefetch"] = "false"
    cfg = load_config(args.config, overrides)
    manifest = Manifest.read(args.manifest)
    result = train(cfg, manifest, out_dir=args.out_dir)
    last = result.history[-1] if result.history else None
    if last:
        print(f"steps {len(result.history)}  initial L_total {result.history[0].l_total:.4f}  "
              f"final L_total {last.l_total:.4f}")
    print(f"checkpoint: {result.checkpoints[-1]}")
    return EXIT_OK


def _load_model(path):
    from .model import MSN
    return MSN.from_state(checkpoint.load(path))


def cmd_infer(args) -> int:
    from .data.loading import write_gray_png
    from .inference import parse_input, saliency_for_files
    files = {}
    for spec in args.inputs:
        mod, path = parse_input(spec)
        if mod in files:
            raise ConfigurationError(f"modality {mod} given twice")
        files[mod] = path
    model = _load_model(args.checkpoint)
    sal = saliency_for_files(model, files)
    write_gray_png(args.out, sal)
    print(f"{args.out}\t{sal.shape[1]}x{sal.shape[0]}\t{'-'.join(sorted(files))}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data.manifest import Manifest
    from .evaluation import evaluate_model
    model = _load_model(args.checkpoint)
    report = evaluate_model(model, Manifest.read(args.manifest), args.mode, args.size)
    table = report.to_table()
    Path(args.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import CASES, run_suite
    names = args.ops or list(CASES)
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise ConfigurationError(f"unknown gradcheck case {unknown[0]!r}; known: {', '.join(CASES)}")
    results = run_suite(args.seeds, args.eps, names, on_result=lambda r: print(r.line(), flush=True),
                        extended_reference=not args.double_reference)
    worst = max(r.max_rel_error for r in results)
    failed = [r.name for r in results if not r.max_rel_error < args.tolerance]
    print(f"max relative error {worst:.3e} over {len(results)} cases "
          f"({sum(r.seconds for r in results):.1f}s)")
    if failed:
        raise NumericError(f"gradient check above {args.tolerance:g} for: {', '.join(failed)}")
    return EXIT_OK


def cmd_dump_embeddings(args) -> int:
    from .data.manifest import Manifest
    from .evaluation import embedding_rows
    model = _load_model(args.checkpoint)
    rows = embedding_rows(model, Manifest.read(args.manifest), args.size)
    dim = rows[0][2].size if rows else 0
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["record_id", "modality"] + [f"f{i}" for i in range(dim)]) + "\n")
        for rid, mod, vec in rows:
            fh.write("\t".join([rid, mod] + [f"{v:.8g}" for v in np.asarray(vec, dtype=np.float64)]) + "\n")
    print(f"{len(rows)} embeddings of dimension {dim} -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="amsn", description="Arbitrary-modality salient object detection engine.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="write a deterministic synthetic dataset and manifest")
    s.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    s.add_argument("--count-per-type", type=int, default=4, help="scenes per input type (default 4)")
    s.add_argument("--size", type=int, default=64, help="image side in pixels, multiple of 32 (default 64)")
    s.add_argument("--types", nargs="+", help="input types to generate, e.g. RGB RGB-D (default RGB RGB-D RGB-T RGB-D-T)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("manifest", help="build a manifest from dataset directory trees")
    s.add_argument("--roots", nargs="+", required=True,
                   help="directories holding one <dataset>/{rgb,depth,thermal,gt} tree per dataset")
    s.add_argument("--split", required=True, choices=("train", "test"), help="split recorded in the manifest")
    s.add_argument("--seed", type=int, default=0, help="seed for RGB training-set subsampling (default 0)")
    s.add_argument("--rgb-subsample", type=int, default=5000,
                   help="records kept from the RGB training source (default 5000)")
    s.add_argument("--out", required=True, help="manifest path (.tsv)")
    s.set_defaults(func=cmd_manifest)

    s = sub.add_parser("train", help="train one network on every input type in a manifest")
    s.add_argument("--config", help="key=value config file")
    s.add_argument("--manifest", required=True, help="training manifest")
    s.add_argument("--out-dir", required=True, help="directory for checkpoints, loss log and config")
    s.add_argument("--seed", type=int, help="overrides the config seed")
    s.add_argument("--set", nargs="*", metavar="KEY=VALUE", help="config overrides, e.g. epochs=10 lr=0.01")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="predict a saliency map from 1-3 registered images")
    s.add_argument("--checkpoint", required=True, help="trained checkpoint")
    s.add_argument("--inputs", nargs="+", required=True, metavar="PATH:MODALITY",
                   help="images with their modality (rgb, depth or thermal), in any order")
    s.add_argument("--out", required=True, help="output PNG (8-bit grayscale, input resolution)")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="score a checkpoint on a manifest")
    s.add_argument("--checkpoint", required=True, help="trained checkpoint")
    s.add_argument("--manifest", required=True, help="evaluation manifest")
    s.add_argument("--mode", required=True, choices=("sole", "joint"), help="evaluation protocol")
    s.add_argument("--size", type=int, default=64, help="working image size (default 64)")
    s.add_argument("--out", required=True, help="report path (setting,count,MAE,Fbeta table)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    s.add_argument("--seeds", type=int, default=20, help="random instances per case (default 20)")
    s.add_argument("--eps", type=float, default=1e-4, help="central-difference step (default 1e-4)")
    s.add_argument("--tolerance", type=float, default=1e-4, help="maximum relative error (default 1e-4)")
    s.add_argument("--ops", nargs="+", help="run only these cases")
    s.add_argument("--double-reference", action="store_true",
                   help="take the finite differences in double instead of long double")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("dump-embeddings", help="export pooled level-5 features per image")
    s.add_argument("--checkpoint", required=True, help="trained checkpoint")
    s.add_argument("--manifest", required=True, help="manifest whose images are embedded")
    s.add_argument("--size", type=int, default=64, help="working image size (default 64)")
    s.add_argument("--out", required=True, help="output TSV (record_id, modality, f0..fN)")
    s.set_defaults(func=cmd_dump_embeddings)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("amsn: a command is required (see amsn --help)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        with ExitStack() as stack:
            n = thread_limit()
            if n is not None:
                from threadpoolctl import threadpool_limits
                stack.enter_context(threadpool_limits(limits=n))
            return args.func(args)
    except UsageError as exc:
        print(f"{ERR_PREFIX} usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AMSNError as exc:
        print(f"{ERR_PREFIX} {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"{ERR_PREFIX} DataError: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"{ERR_PREFIX} DataError: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"{ERR_PREFIX} NumericError: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
