"""Command line entry points: ``bench run|layers|cost|verify`` and ``verify``.

Exit codes: 0 success, 1 configuration error, 2 partial sweep (error rows).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import BenchConfig, emit_report, run_bench
from .convops import GroupingStrategy
from .models import (
    STRATEGIES,
    ModelVariant,
    catalog_from_json,
    catalog_to_json,
    cost_model,
    depthwise_layers,
    format_ratio_table,
    mobilenet_layers,
)
from .tensor import resolve_dtype

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_variant(p):
    p.add_argument("--variant", choices=["base", "shallow"], default="base")
    p.add_argument("--width", type=float, default=1.0, help="width multiplier (1.0, 0.75, 0.5)")
    p.add_argument("--resolution", type=int, default=224, help="input resolution (224, 128)")


def _add_grouping(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--group-by-size", type=_int_list, metavar="S[,S...]",
                   help="diagonalwise groups of S channels")
    g.add_argument("--group-by-count", type=_int_list, metavar="G[,G...]",
                   help="split channels into G diagonalwise groups")


def _variant(args) -> ModelVariant:
    try:
        return ModelVariant.named(args.variant, args.width, args.resolution)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _groupings(args) -> list[GroupingStrategy]:
    try:
        if args.group_by_size:
            return [GroupingStrategy.by_size(s) for s in args.group_by_size]
        if args.group_by_count:
            return [GroupingStrategy.by_count(g) for g in args.group_by_count]
    except ValueError as exc:
        raise ConfigError(str(exc))
    return [GroupingStrategy.none()]


def _strategies(values) -> list[str]:
    out = []
    for v in values or ["cbyc,direct,diag-compact"]:
        out.extend(s.strip() for s in v.split(",") if s.strip())
    for s in out:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="time a layer sweep and write a CSV/JSON report")
    _add_variant(run)
    run.add_argument("--strategy", action="append", metavar="LIST",
                     help=f"comma-separated subset of {', '.join(STRATEGIES)}")
    _add_grouping(run)
    run.add_argument("--batch", type=int, default=64)
    run.add_argument("--warmup", type=int, default=5)
    run.add_argument("--iters", type=int, default=30, help="measured iterations")
    run.add_argument("--precision", choices=["single", "double"], default="single")
    run.add_argument("--gemm", choices=["naive", "blocked"], default="blocked")
    run.add_argument("--block", type=int, default=64, help="GEMM tile size")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--seed", type=int, default=0, help="overridden by $BENCH_SEED")
    run.add_argument("--skip-weight-grad", action="store_true",
                     help="time the backward pass without filter gradients")
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.add_argument("--out", type=Path, help="report path (default: stdout)")
    run.add_argument("--layers-file", type=Path, help="JSON layer catalog to sweep instead")
    run.add_argument("--layer", type=_int_list, metavar="I[,I...]",
                     help="restrict the sweep to these layer indices")
    run.add_argument("--all-layers", action="store_true",
                     help="include dense layers (depthwise strategies report n/a)")

    layers = sub.add_parser("layers", help="print the MobileNet layer catalog")
    _add_variant(layers)
    layers.add_argument("--format", choices=["text", "json"], default="text")
    layers.add_argument("--depthwise-only", action="store_true")

    cost = sub.add_parser("cost", help="print mult-add / parameter ratios per layer type")
    _add_variant(cost)
    cost.add_argument("--strategy", default="cbyc", choices=STRATEGIES)
    _add_grouping(cost)
    cost.add_argument("--precision", choices=["single", "double"], default="single")
    cost.add_argument("--per-layer", action="store_true", help="also list every layer")
    cost.add_argument("--format", choices=["text", "json"], default="text")

    sub.add_parser("verify", help="run the oracle and gradient self-checks")
    return parser


def _cmd_run(args) -> int:
    variant = _variant(args)
    if args.layers_file:
        try:
            layers = catalog_from_json(args.layers_file.read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read layer catalog {args.layers_file}: {exc}")
    else:
        layers = mobilenet_layers(variant)
        if not args.all_layers:
            layers = depthwise_layers(layers)
    if args.layer:
        wanted = set(args.layer)
        layers = [layer for layer in layers if layer.index in wanted]
        if not layers:
            raise ConfigError(f"no layers match --layer {args.layer}")
    config = BenchConfig(
        variant=variant, layers=layers, strategies=_strategies(args.strategy),
        groupings=_groupings(args), batch_size=args.batch, warmup_iters=args.warmup,
        measured_iters=args.iters, precision=args.precision, seed=args.seed,
        skip_weight_grad=args.skip_weight_grad, output=args.format, gemm=args.gemm,
        block=args.block, threads=args.threads)
    try:
        config.validate()
    except ValueError as exc:
        raise ConfigError(str(exc))
    report = run_bench(config)
    text = emit_report(report, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_PARTIAL if report.partial else EXIT_OK


def _cmd_layers(args) -> int:
    layers = mobilenet_layers(_variant(args))
    if args.depthwise_only:
        layers = depthwise_layers(layers)
    if args.format == "json":
        print(catalog_to_json(layers))
    else:
        print(f"{'layer':>5}  {'kind':<16}{'config':<28}{'output':>12}")
        for layer in layers:
            o = layer.out_size
            print(f"{layer.index:>5}  {layer.kind:<16}{layer.label():<28}"
                  f"{f'{o}x{o}x{layer.out_channels}':>12}")
    return EXIT_OK


def _cmd_cost(args) -> int:
    layers = mobilenet_layers(_variant(args))
    grouping = _groupings(args)[0]
    try:
        report = cost_model(layers, args.strategy, grouping,
                            resolve_dtype(args.precision).itemsize)
    except ValueError as exc:
        raise ConfigError(str(exc))
    if args.format == "json":
        print(json.dumps(report.to_dict(), indent=2))
        return EXIT_OK
    print(format_ratio_table(report))
    if args.per_layer:
        print()
        print(f"{'layer':>5}  {'config':<28}{'mult_adds':>14}{'params':>10}"
              f"{'workspace_B':>13}{'work/launch':>12}{'launches':>9}")
        for lc in report.layers:
            print(f"{lc.layer.index:>5}  {lc.layer.label():<28}{lc.mult_adds:>14,}"
                  f"{lc.parameters:>10,}{lc.workspace_bytes:>13,}{lc.work_items:>12,}"
                  f"{lc.launches:>9}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_checks

    return EXIT_OK if run_checks() else EXIT_CONFIG


COMMANDS = {"run": _cmd_run, "layers": _cmd_layers, "cost": _cmd_cost, "verify": _cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def verify_main(argv=None) -> int:
    return main(["verify"] + list(argv if argv is not None else sys.argv[1:]))


if __name__ == "__main__":
    sys.exit(main())
