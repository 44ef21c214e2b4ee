"""Command-line entry point: ``sharedspace <subcommand> ...``.

Subcommands
-----------
fuse         align k embedding files in a shared space and write their mean
average      write the unaligned per-word mean (baseline)
stability    pairwise alignment MSE between instances, optionally per frequency bin
eval         word-similarity / analogy benchmarks, one TSV row per dataset
synth-check  run the synthetic ground-truth assertions

Machine-readable artifacts go to files (JSON / TSV / embedding text), each
with a ``<output>.manifest.json`` beside it; human-readable summaries go to
stdout, diagnostics to stderr.

Exit codes: 0 success, 1 validation or usage error, 2 I/O error,
3 oracle assertion failure.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .embedding_store import (
    FORMATS,
    align_vocabularies,
    atomic_write_text,
    center_and_normalize,
    load_embeddings,
    load_frequency_table,
    save_embeddings,
)
from .errors import ValidationError
from .lexical_eval import (
    TSV_HEADER,
    eval_analogy,
    eval_similarity,
    load_analogy_dataset,
    load_similarity_dataset,
    naive_average,
)
from .procrustes import GpaConfig, ssea
from .stability import (
    DEFAULT_BIN_WIDTH,
    DEFAULT_NUM_PAIRS,
    average_stability,
    frequency_binned_mse,
    mean_discrepancy,
)
from .synthetic import SynthConfig, run_oracle_suite

logger = logging.getLogger("sharedspace")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_ORACLE = 3

# keys that legitimately differ between otherwise identical runs
VOLATILE_KEYS = ("created", "timings")

DATASET_TYPES = {"similarity": "similarity", "sim": "similarity", "analogy": "analogy"}


class UsageError(ValidationError):
    pass


class OracleFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


class _Timer:
    def __init__(self):
        self.timings = {}

    @contextlib.contextmanager
    def stage(self, name):
        tic = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - tic


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def manifest_path(output) -> str:
    return f"{output}.manifest.json"


def strip_volatile(obj):
    """Drop timing/timestamp entries so reports from repeated runs compare equal."""
    if isinstance(obj, dict):
        return {k: strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [strip_volatile(v) for v in obj]
    return obj


def _write_manifest(args, output, inputs, config, timer, extra=None):
    manifest = {
        "subcommand": args.command,
        "inputs": [os.fspath(p) for p in inputs],
        "output": os.fspath(output),
        "config": config,
        "tool_version": __version__,
        "timings": {k: round(v, 6) for k, v in timer.timings.items()},
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    atomic_write_text(manifest_path(output), dump_json(manifest))


def _gpa_config(args) -> GpaConfig:
    return GpaConfig(max_sweeps=args.max_sweeps, rel_tolerance=args.tolerance)


def _load_all(paths, fmt, timer):
    with timer.stage("load"):
        return [load_embeddings(p, fmt) for p in paths]


def _prepare_ensemble(args, timer):
    if len(args.inputs) < 2:
        raise UsageError("need at least 2 input embedding files")
    sets = _load_all(args.inputs, args.format, timer)
    with timer.stage("align_vocabularies"):
        ensemble = align_vocabularies(sets)
    if not args.no_prenorm:
        with timer.stage("prenorm"):
            ensemble = type(ensemble)(tuple(center_and_normalize(s) for s in ensemble), ensemble.dropped)
    return ensemble


def _norm_flags(args) -> dict:
    return {"prenorm": not args.no_prenorm, "postnorm": not getattr(args, "no_postnorm", True)}


def _count_zero_rows(emb) -> int:
    return int(np.sum(np.linalg.norm(emb.vectors, axis=1) <= 1e-12))


def _finish_embedding(args, fused, timer):
    zero_rows = _count_zero_rows(fused)
    if not args.no_postnorm:
        with timer.stage("postnorm"):
            fused = center_and_normalize(fused)
        zero_rows = fused.meta["zero_rows"]
    if zero_rows:
        logger.warning("output has %d zero vectors", zero_rows)
    with timer.stage("save"):
        save_embeddings(fused, args.output, args.format, args.precision)
    return fused, zero_rows


def cmd_fuse(args) -> int:
    timer = _Timer()
    config = _gpa_config(args)
    ensemble = _prepare_ensemble(args, timer)
    with timer.stage("fit"):
        fused, fit = ssea(ensemble, config)
    fused, zero_rows = _finish_embedding(args, fused, timer)
    transforms_path = f"{args.output}.transforms.json"
    payload = fit.to_dict()
    payload["manifest"] = os.path.basename(manifest_path(args.output))
    atomic_write_text(transforms_path, dump_json(payload))
    timer.timings["fit_per_sweep_median"] = float(np.median(fit.sweep_seconds)) if fit.sweep_seconds else 0.0
    _write_manifest(args, args.output, args.inputs, {
        "gpa": config.to_dict(), "normalization": _norm_flags(args), "format": args.format,
        "precision": args.precision, "threads": args.threads,
    }, timer, {
        "transforms": os.path.basename(transforms_path),
        "vocabulary_size": ensemble.n, "dimension": ensemble.d, "k": ensemble.k,
        "dropped": ensemble.drop_report(), "zero_rows": zero_rows,
        "sweeps_run": fit.sweeps_run, "converged": fit.converged,
    })
    if not fit.converged:
        logger.warning("stopped after %d sweeps without meeting the tolerance", fit.sweeps_run)
    final = fit.score_history[-1] if fit.score_history else float("nan")
    print(f"fused k={ensemble.k} n={ensemble.n} d={ensemble.d}: {fit.sweeps_run} sweeps, "
          f"converged={fit.converged}, score={final:.6g} -> {args.output}")
    return EXIT_OK


def cmd_average(args) -> int:
    timer = _Timer()
    ensemble = _prepare_ensemble(args, timer)
    with timer.stage("average"):
        fused = naive_average(ensemble)
    fused, zero_rows = _finish_embedding(args, fused, timer)
    _write_manifest(args, args.output, args.inputs, {
        "normalization": _norm_flags(args), "format": args.format,
        "precision": args.precision, "threads": args.threads,
    }, timer, {
        "vocabulary_size": ensemble.n, "dimension": ensemble.d, "k": ensemble.k,
        "dropped": ensemble.drop_report(), "zero_rows": zero_rows,
    })
    print(f"averaged k={ensemble.k} n={ensemble.n} d={ensemble.d} without alignment "
          f"({zero_rows} zero vectors) -> {args.output}")
    return EXIT_OK


def _stability_group(paths, args, timer, label):
    sets = _load_all(paths, args.format, timer)
    with timer.stage(f"{label}_align"):
        ensemble = align_vocabularies(sets)
    instances = list(ensemble)
    if not args.no_prenorm:
        with timer.stage(f"{label}_prenorm"):
            instances = [center_and_normalize(s) for s in instances]
    with timer.stage(f"{label}_mse"):
        report = average_stability(instances, args.num_pairs, args.seed)
    return instances, report


def cmd_stability(args) -> int:
    timer = _Timer()
    if len(args.inputs) < 2:
        raise UsageError("need at least 2 input embedding files")
    if args.fused and len(args.fused) < 2:
        raise UsageError("--fused needs at least 2 files to form a pair")
    freqs = load_frequency_table(args.freq) if args.freq else None
    groups = [("raw", args.inputs)] + ([("fused", args.fused)] if args.fused else [])
    base = os.path.basename(manifest_path(args.output))
    result = {"manifest": base, "reports": {}, "curves": {}}
    notes = []
    for label, paths in groups:
        instances, report = _stability_group(paths, args, timer, label)
        result["reports"][label] = report.to_dict()
        if freqs is not None:
            with timer.stage(f"{label}_curve"):
                disc = mean_discrepancy(instances, report.pairs)
                curve = frequency_binned_mse(disc, freqs, instances[0].words, args.bin_width)
            tsv = f"{args.output}.{label}.curve.tsv"
            atomic_write_text(tsv, curve.to_tsv())
            result["curves"][label] = {**curve.to_dict(), "tsv": os.path.basename(tsv)}
            if curve.missing_words:
                notes.append(f"{label}: {curve.missing_words} words missing from the frequency table")
        print(f"{label:>6}: mean_mse={report.mean_mse:.6g} std={report.std_mse:.3g} "
              f"over {report.num_pairs} pairs")
    if freqs is None:
        notes.append("no frequency table given; binned curves not produced")
    atomic_write_text(args.output, dump_json(result))
    _write_manifest(args, args.output, list(args.inputs) + list(args.fused or []), {
        "num_pairs": args.num_pairs, "seed": args.seed, "bin_width": args.bin_width,
        "normalization": {"prenorm": not args.no_prenorm}, "freq": args.freq,
        "format": args.format, "threads": args.threads,
    }, timer, {"notes": notes})
    return EXIT_OK


def _parse_dataset_arg(spec):
    tag, sep, path = spec.partition(":")
    if not sep or not path:
        raise UsageError(f"dataset must be given as TYPE:PATH, got {spec!r}")
    kind = DATASET_TYPES.get(tag.lower())
    if kind is None:
        raise UsageError(f"unknown dataset type {tag!r}; expected one of {sorted(set(DATASET_TYPES))}")
    return kind, path


def cmd_eval(args) -> int:
    timer = _Timer()
    datasets = [_parse_dataset_arg(s) for s in args.dataset]
    if not datasets:
        raise UsageError("give at least one --dataset TYPE:PATH")
    emb = _load_all([args.embedding], args.format, timer)[0]
    method = args.method or os.path.splitext(os.path.basename(args.embedding))[0]
    rows = []
    failed = []
    for kind, path in datasets:
        with timer.stage(f"eval:{path}"):
            if kind == "similarity":
                data = load_similarity_dataset(path)
                evaluate = eval_similarity
                metric = "spearman"
            else:
                data = load_analogy_dataset(path)
                evaluate = eval_analogy
                metric = "accuracy"
            try:
                res = evaluate(emb, data, lowercase_fallback=args.lowercase_fallback)
                rows.append(res.to_row(method))
            except ValidationError as exc:
                logger.error("%s", exc)
                failed.append(data.name)
                rows.append([method, data.name, metric, "NA", "0", str(len(data))])
    text = "\n".join("\t".join(r) for r in [TSV_HEADER] + rows) + "\n"
    atomic_write_text(args.output, text)
    _write_manifest(args, args.output, [args.embedding] + [p for _, p in datasets], {
        "method": method, "lowercase_fallback": args.lowercase_fallback, "format": args.format,
    }, timer, {"failed_datasets": failed})
    widths = [max(len(r[c]) for r in [TSV_HEADER] + rows) for c in range(len(TSV_HEADER))]
    for r in [TSV_HEADER] + rows:
        print("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_synth_check(args) -> int:
    if args.k < 2:
        raise UsageError("synth-check needs k >= 2")
    timer = _Timer()
    config = SynthConfig(n=args.n, d=args.d, k=args.k, sigma=args.sigma, seed=args.seed,
                         freq_profile=args.freq_profile)
    with timer.stage("suite"):
        verdict = run_oracle_suite(config, _gpa_config(args), num_pairs=args.num_pairs)
    text = dump_json(verdict)
    if args.output:
        verdict_with_ref = {**verdict, "manifest": os.path.basename(manifest_path(args.output))}
        atomic_write_text(args.output, dump_json(verdict_with_ref))
        _write_manifest(args, args.output, [], {"synth": config.to_dict()}, timer)
    else:
        sys.stdout.write(text)
    for check in verdict["checks"]:
        mark = "PASS" if check["passed"] else "FAIL"
        print(f"[{mark}] {check['name']}: measured {check['measured']:.6g}, expected {check['expected']}",
              file=sys.stderr if not args.output else sys.stdout)
    if not verdict["passed"]:
        bad = [c for c in verdict["checks"] if not c["passed"]]
        raise OracleFailure("; ".join(f"{c['name']} measured {c['measured']!r}, expected {c['expected']}"
                                      for c in bad))
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="cap on BLAS threads (default: library default, all cores)")
    common.add_argument("--seed", type=int, default=0, help="seed for any random sampling (default 0)")
    common.add_argument("--format", choices=FORMATS, default="header",
                        help="embedding text layout for inputs and outputs (default header)")
    common.add_argument("-v", "--verbose", action="store_true")

    prenorm = _Parser(add_help=False)
    prenorm.add_argument("--no-prenorm", action="store_true",
                         help="skip centering/unit-normalizing the inputs")

    postnorm = _Parser(add_help=False)
    postnorm.add_argument("--no-postnorm", action="store_true",
                          help="skip centering/unit-normalizing the fused output")
    postnorm.add_argument("--precision", type=_positive_int, default=None,
                          help="significant digits in the output file (default: exact round trip)")

    gpa = _Parser(add_help=False)
    gpa.add_argument("--max-sweeps", type=_positive_int, default=GpaConfig.max_sweeps)
    gpa.add_argument("--tolerance", type=float, default=GpaConfig.rel_tolerance,
                     help="stop when a sweep lowers the score by less than this fraction")

    parser = _Parser(prog="sharedspace", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fuse", parents=[common, prenorm, postnorm, gpa],
                       help="align embeddings in a shared space and average them")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("average", parents=[common, prenorm, postnorm],
                       help="unaligned per-word mean of the inputs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("stability", parents=[common, prenorm],
                       help="pairwise alignment MSE between instances")
    p.add_argument("inputs", nargs="+", help="raw instances (at least 2)")
    p.add_argument("--fused", nargs="+", default=None, help="fused instances to report alongside")
    p.add_argument("--raw", dest="no_prenorm", action="store_true",
                   help="alias of --no-prenorm: measure on vectors as stored")
    p.add_argument("--num-pairs", type=_positive_int, default=DEFAULT_NUM_PAIRS)
    p.add_argument("--freq", help="token<TAB>count frequency table for the binned curve")
    p.add_argument("--bin-width", type=_positive_int, default=DEFAULT_BIN_WIDTH)
    p.add_argument("-o", "--output", required=True, help="JSON report path")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("eval", parents=[common], help="lexical benchmark evaluation")
    p.add_argument("embedding")
    p.add_argument("--dataset", action="append", default=[], metavar="TYPE:PATH",
                   help="similarity:PATH or analogy:PATH; repeatable")
    p.add_argument("--method", help="label for the method column (default: file stem)")
    p.add_argument("--lowercase-fallback", action="store_true",
                   help="retry lookups in lowercase when the exact token is missing")
    p.add_argument("-o", "--output", required=True, help="TSV results path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth-check", parents=[common, gpa], help="run the synthetic oracle suite")
    defaults = SynthConfig()
    p.add_argument("--n", type=_positive_int, default=defaults.n)
    p.add_argument("--d", type=_positive_int, default=defaults.d)
    p.add_argument("--k", type=int, default=defaults.k)
    p.add_argument("--sigma", type=float, default=defaults.sigma)
    p.add_argument("--freq-profile", type=float, default=None)
    p.add_argument("--num-pairs", type=_positive_int, default=DEFAULT_NUM_PAIRS)
    p.add_argument("-o", "--output", default=None, help="verdict JSON path (default: stdout)")
    p.set_defaults(func=cmd_synth_check)
    return parser


def _thread_limit(threads):
    if threads is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except OracleFailure as exc:
        print(f"sharedspace {args.command}: oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except ValidationError as exc:
        print(f"sharedspace {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"sharedspace {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
