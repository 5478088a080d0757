"""
Command-line front end.

    python -m app.cli echo --config run.json --out results/run
    python -m app.cli recipe fig2 --threads 4
    python -m app.cli recipe --list

Exit codes: 0 success, 2 configuration or dispatch error, 3 numerical failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.exceptions import ConfigError, SpinBathError
from app.logging_config import configure_logging
from app.models import Method, RunConfig
from app.services.recipes import recipes, run_recipe
from app.services.runner import HANDLERS, run

logger = logging.getLogger(__name__)


def _pointer(loc) -> str:
    return "/" + "/".join(str(part) for part in loc)


def load_config(path: str, overrides: Optional[dict] = None) -> RunConfig:
    """
    Read a JSON run configuration and apply command-line overrides.

    Raises:
        ConfigError: If the file cannot be read or does not validate; the
            message carries a JSON pointer to the first offending field
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first["msg"], pointer=_pointer(first["loc"])) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinbath", description="Qubit decoherence in spin-chain baths")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in HANDLERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="Output directory")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--method", choices=[m.value for m in Method], default=None)

    p = sub.add_parser("recipe")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true", help="List available recipes")
    p.add_argument("--out", default="results")
    p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "recipe":
            if args.list or not args.name:
                for recipe in recipes():
                    print(f"{recipe.name:18s} {recipe.command:18s} {recipe.description}")
                return 0
            run_recipe(args.name, out=args.out, threads=args.threads)
            return 0
        config = load_config(args.config, {"method": args.method})
        run(config, args.command, out=args.out, threads=args.threads)
        return 0
    except SpinBathError as e:
        logger.error(f"{e.__class__.__name__}: {e}", exc_info=e.exit_code == 3)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
