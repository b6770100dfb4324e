"""Command-line experiment runner.

Subcommands: ``gen-data`` (synthesize a dataset file), ``run-tl`` and
``run-fl`` (execute a suite from a preset or config file and write all
artifacts), ``probe`` (linear-probe a saved backbone on a dataset file),
and ``report`` (rebuild summary tables from a results.csv).

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .configfile import PRESETS, load_config_file, load_preset
from .data import (
    ALL_CONDITIONS,
    ALL_REGIMES,
    DEFAULT_PROFILE,
    ConditionLabel,
    OperatingRegime,
    SyntheticProfile,
    generate_dataset,
    load_dataset,
    save_dataset,
    train_test_split,
)
from .errors import ConfigError, FedtwinError
from .evaluation import (
    evaluate_probe,
    extract_features,
    save_confusion_csv,
    save_metrics_json,
    train_linear_probe,
)
from .experiments import build_suite_dataset, run_suite
from .models import architecture_hash, barlow_config, load_state, supervised_config
from .reporting import parse_results_csv, plot_csv_text, summary_csv_text, write_report


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; bad usage is a config error."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> _Parser:
    parser = _Parser(prog="fedtwin", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fedtwin {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", parents=[], help="write a synthetic dataset file")
    gen.add_argument("--out", required=True, help="output .ftds path")
    gen.add_argument("--seconds", type=float, default=6.0,
                     help="signal length per (condition, regime)")
    gen.add_argument("--seed", type=int, default=2024)
    gen.add_argument("--sample-rate", type=int, default=12000)
    gen.add_argument("--conditions", default=None,
                     help="comma list, e.g. N,PL,BoR (default: all eight)")
    gen.add_argument("--regimes", default=None,
                     help="comma list, e.g. 3L,2H (default: all four)")
    gen.add_argument("--profile", default=None,
                     help="JSON profile file (default: built-in profile)")
    gen.add_argument("--dump-profile", default=None,
                     help="also write the generating profile as JSON here")

    for kind in ("tl", "fl"):
        sub = commands.add_parser(f"run-{kind}", help=f"run a {kind} suite")
        sub.add_argument("--preset", choices=PRESETS, default=None)
        sub.add_argument("--config", default=None, help="config file path")
        sub.add_argument("--out", required=True, help="output directory")
        sub.add_argument("--threads", type=int, default=1)
        sub.add_argument("--seed", type=int, default=None,
                         help="override the spec's seed list with this one seed")
        sub.add_argument("--data", default=None,
                         help="pregenerated .ftds dataset (default: generate per spec)")

    probe = commands.add_parser("probe", help="linear-probe a saved backbone")
    probe.add_argument("--weights", required=True, help=".ftwn weight file")
    probe.add_argument("--data", required=True, help=".ftds dataset file")
    probe.add_argument("--out", required=True, help="output directory")
    probe.add_argument("--model", choices=("supervised", "barlow"), default="barlow",
                       help="architecture the weight file holds (default backbone)")
    probe.add_argument("--probe-epochs", type=int, default=75)
    probe.add_argument("--eval-fraction", type=float, default=0.8)
    probe.add_argument("--seed", type=int, default=0)

    report = commands.add_parser("report", help="summaries from a results.csv")
    report.add_argument("--results", required=True)
    report.add_argument("--out", required=True)
    return parser


def _cmd_gen_data(args) -> int:
    profile = DEFAULT_PROFILE
    if args.profile:
        profile = SyntheticProfile.from_json(Path(args.profile).read_text())
    from .errors import ContractError

    conditions = ALL_CONDITIONS
    regimes = ALL_REGIMES
    try:
        if args.conditions:
            conditions = {ConditionLabel.parse(p) for p in args.conditions.split(",")}
        if args.regimes:
            regimes = {OperatingRegime.parse(p) for p in args.regimes.split(",")}
    except ContractError as err:
        raise ConfigError(str(err)) from None
    dataset = generate_dataset(
        profile, conditions=conditions, regimes=regimes,
        seconds=args.seconds, sample_rate=args.sample_rate, seed=args.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out)
    if args.dump_profile:
        Path(args.dump_profile).write_text(profile.to_json() + "\n")
    print(f"wrote {len(dataset)} windows to {out}")
    return 0


def _load_spec(args, kind: str):
    if bool(args.preset) == bool(args.config):
        raise ConfigError("provide exactly one of --preset or --config")
    spec = load_preset(args.preset, kind) if args.preset else load_config_file(args.config)
    if spec.kind != kind:
        raise ConfigError(f"config is kind={spec.kind!r}, but this is run-{kind}")
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, seeds=(args.seed,))
    return spec


def _cmd_run(args, kind: str) -> int:
    spec = _load_spec(args, kind)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)  # fail on unwritable paths now,
    # not after half an hour of training
    if args.data:
        dataset = load_dataset(args.data)
        missing = {r.display for r in spec.regimes_needed()} - {
            r.display for r in dataset.regimes_present()
        }
        if missing:
            raise ConfigError(f"dataset {args.data} lacks regimes {sorted(missing)}")
    else:
        dataset = build_suite_dataset(spec)

    total = {"done": 0}
    from .experiments import enumerate_runs

    n_runs = len(enumerate_runs(spec))

    def progress(run_id, seconds):
        total["done"] += 1
        print(f"[{total['done']}/{n_runs}] {run_id} ({seconds:.1f}s)", flush=True)

    result = run_suite(spec, dataset=dataset, threads=args.threads, progress=progress)
    paths = write_report(result, args.out)
    print(f"results: {paths['results']}")
    print(f"summary: {paths['summary']}")
    return 0


def _cmd_probe(args) -> int:
    config = barlow_config() if args.model == "barlow" else supervised_config()
    state = load_state(args.weights, expected_hash=architecture_hash(config))
    dataset = load_dataset(args.data)
    train, test = train_test_split(dataset, args.eval_fraction, args.seed)
    features_train = extract_features(state, train, config=config)
    features_test = extract_features(state, test, config=config)
    probe = train_linear_probe(
        features_train, train.labels, epochs=args.probe_epochs, seed=args.seed
    )
    accuracy, matrix = evaluate_probe(probe, features_test, test.labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_metrics_json(
        out / "metrics.json", method=f"probe:{args.model}", seed=args.seed,
        condition_set="+".join(c.name for c in sorted(dataset.conditions_present())),
        accuracy=accuracy, matrix=matrix,
    )
    save_confusion_csv(matrix, out / "confusion.csv")
    print(f"accuracy: {accuracy:.4f}")
    print(f"metrics: {out / 'metrics.json'}")
    return 0


def _cmd_report(args) -> int:
    rows = parse_results_csv(Path(args.results).read_text())
    if not rows:
        raise ConfigError(f"{args.results} holds no result rows")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary_csv_text(rows))
    (out / "plot.csv").write_text(plot_csv_text(rows))
    print(f"summary: {out / 'summary.csv'}")
    return 0


def main(argv=None) -> int:
    from ._alloc import enable_heap_reuse

    enable_heap_reuse()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-data":
            return _cmd_gen_data(args)
        if args.command == "run-tl":
            return _cmd_run(args, "tl")
        if args.command == "run-fl":
            return _cmd_run(args, "fl")
        if args.command == "probe":
            return _cmd_probe(args)
        if args.command == "report":
            return _cmd_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except (FedtwinError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
