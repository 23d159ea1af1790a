"""Command-line entry points: gen-demos, run, score, stats, report."""

from __future__ import annotations

import argparse
import sys

from xicl import runner


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the run config JSON")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--dry-run", action="store_true",
                        help="print prompt digests without any network traffic")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xicl",
        description="Cross-lingual in-context learning evaluation harness",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, description in (
        ("gen-demos", "generate and cache code-switching demonstration ladders"),
        ("run", "evaluate all configured models, settings, and samples"),
        ("score", "re-extract and re-score persisted records"),
        ("stats", "paired bootstrap significance vs every baseline"),
        ("report", "render score tables (markdown, csv, json)"),
    ):
        sub = commands.add_parser(name, help=description)
        _add_common(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = runner.load_config(args.config, seed_override=args.seed)

    if args.command == "gen-demos":
        if args.dry_run:
            for setting in config.settings_resolved():
                direction = setting.ladder_direction
                if direction:
                    print(f"{setting.id}\tneeds ladders\t{direction}")
            return 0
        manifest = runner.cmd_gen_demos(config)
        invalid = [entry for entry in manifest["ladders"] if not entry["valid"]]
        print(f"cached {len(manifest['ladders'])} ladders, "
              f"{len(manifest['paraphrases'])} paraphrase sets "
              f"({len(invalid)} invalid) -> {config.run_dir / 'demo_manifest.json'}")
        return 2 if invalid else 0

    if args.command == "run":
        path = runner.cmd_run(config, dry_run=args.dry_run)
        if not args.dry_run:
            print(f"records -> {path}")
        return 0

    if args.command == "score":
        path = runner.cmd_score(config)
        print(f"re-scored -> {path}")
        return 0

    if args.command == "stats":
        path = runner.cmd_stats(config)
        print(f"bootstrap verdicts -> {path}")
        return 0

    if args.command == "report":
        for path in runner.cmd_report(config):
            print(f"wrote {path}")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
