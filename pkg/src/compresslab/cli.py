"""Command-line entry points: validate, layout, compare, sim, serve, report."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import CompressLabError


def _add_validate(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("validate", help="load an experiments file and report violations")
    p.add_argument("file")


def _add_layout(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("layout", help="print the Model Map layout as JSON")
    p.add_argument("file")
    p.add_argument("--mode", default="by_step", choices=["by_step", "by_operation"])
    p.add_argument("--color", default=None)
    p.add_argument("--size", default=None)


def _add_compare(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("compare", help="print the selection comparison as JSON")
    p.add_argument("file")
    p.add_argument("--select", required=True, help="comma-separated model ids")
    p.add_argument("--metric", required=True)


def _add_sim(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("sim", help="generate simulator fixtures")
    p.add_argument("--scenario", required=True,
                   choices=["user_study", "repair", "bias_audit"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)


def _add_serve(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="JSON session config file")
    p.add_argument("--experiments", help="experiments.json path")
    p.add_argument("--dataset", default=None)
    p.add_argument("--outputs-dir", default=None)
    p.add_argument("--layers-dir", default=None)
    p.add_argument("--provider", default=None)
    p.add_argument("--port", type=int, default=8077)


def _add_report(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("report", help="render figures and a CSV model table")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="by_operation",
                   choices=["by_step", "by_operation"])
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--select", default=None, help="comma-separated ids to compare")
    p.add_argument("--metric", default=None)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="compresslab")
    sub = parser.add_subparsers(dest="command", required=True)
    for add in (_add_validate, _add_layout, _add_compare, _add_sim, _add_serve,
                _add_report):
        add(sub)
    args = parser.parse_args(argv)

    try:
        return _dispatch(args)
    except CompressLabError as exc:
        print(f"{exc.code}: {exc.message}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace) -> int:
    from .store import load_store_file

    if args.command == "validate":
        store = load_store_file(args.file)
        print(f"ok: {len(store)} models, {len(store.roots)} roots, "
              f"{len(store.metrics)} metrics")
        return 0

    if args.command == "layout":
        from .maplayout import compute_layout
        store = load_store_file(args.file)
        layout = compute_layout(store, args.mode, args.color, args.size)
        print(json.dumps(layout.to_json(), indent=2))
        return 0

    if args.command == "compare":
        from .variables import build_comparison
        store = load_store_file(args.file)
        selection = [s for s in args.select.split(",") if s]
        result = build_comparison(store, selection, args.metric)
        print(json.dumps(result.to_json(), indent=2))
        return 0

    if args.command == "sim":
        from .sim.scenarios import DEFAULT_SEED, emit_fixtures
        seed = DEFAULT_SEED if args.seed is None else args.seed
        files = emit_fixtures(args.scenario, seed, args.out)
        print(f"wrote {len(files)} files to {args.out}")
        return 0

    if args.command == "serve":
        from .service import SessionConfig, serve
        if args.config:
            config = SessionConfig.from_file(args.config)
        else:
            if not args.experiments:
                print("serve needs --config or --experiments", file=sys.stderr)
                return 1
            config = SessionConfig(
                experiments_path=args.experiments,
                dataset_path=args.dataset,
                outputs_dir=args.outputs_dir,
                layers_dir=args.layers_dir,
                provider_url=args.provider,
                port=args.port,
            )
        serve(config)
        return 0

    if args.command == "report":
        from .report import generate_report
        store = load_store_file(args.file)
        selection = [s for s in args.select.split(",") if s] if args.select else None
        files = generate_report(store, args.out, mode=args.mode, bins=args.bins,
                                selection=selection, metric=args.metric)
        print(f"wrote {len(files)} files to {args.out}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
