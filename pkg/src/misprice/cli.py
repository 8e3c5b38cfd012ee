"""Command-line experiment harness.

    misprice <subcommand> --config <path> [--out <dir>] [--workers N]
             [--seed S] [--full-scale]

Subcommands mirror the experiment kinds; configs are JSON or TOML
documents (see ``experiments/`` for one recipe per figure-style output).
Exit codes: 0 success, 2 at least one cell error, 3 config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .backend import BACKEND
from .errors import MispriceError
from .sweeps import COLUMNS, EXPERIMENT_KINDS, ConfigError, run_experiment

_COLUMN_HELP = {kind: "CSV columns: " + ", ".join(cols) for kind, cols in COLUMNS.items()}


def _load_config(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py311+
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(path: Path, columns, rows, header_comment: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header_comment + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col, "")) for col in columns])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="misprice",
        description="Parameter sweeps for explore-then-exploit pricing dynamics "
                    "under misspecified demand estimation.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=_COLUMN_HELP[kind], description=_COLUMN_HELP[kind])
        p.add_argument("--config", required=True, type=Path, help="JSON or TOML config")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel cell workers (default: MISPRICE_WORKERS or 1)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--full-scale", action="store_true",
                       help="apply the config's full_scale overrides")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if cfg.get("kind", args.kind) != args.kind:
            raise ConfigError(
                f"config kind {cfg.get('kind')!r} does not match subcommand {args.kind!r}")
        if args.full_scale:
            cfg.update(cfg.get("full_scale", {}))
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        workers = args.workers
        if workers is None:
            workers = int(os.environ.get("MISPRICE_WORKERS", "1"))
        columns, rows = run_experiment(args.kind, cfg, seed, workers=workers)
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except MispriceError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3

    args.out.mkdir(parents=True, exist_ok=True)
    out_path = args.out / cfg.get("output", f"{args.kind.replace('-', '_')}.csv")
    header = f"# misprice {args.kind} seed={seed}"
    write_rows(out_path, columns, rows, header)

    n_err = sum(1 for r in rows if r.get("error"))
    print(f"{args.kind}: {len(rows)} rows -> {out_path} "
          f"(backend={BACKEND}, seed={seed}, cell errors={n_err})")
    if n_err:
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
