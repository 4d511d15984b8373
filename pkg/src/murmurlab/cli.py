"""Command-line entry point.

Exit codes: 0 success, 1 user error (bad arguments, config, missing inputs),
2 internal error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from .config import ConfigError, dump_config, load_config
from .corpus import CorpusError, Workspace


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage problems to exit code 1
        raise UserError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="murmurlab",
                     description="Heart-murmur label cleaning and classification workbench")
    parser.add_argument("--workspace", help="workspace directory (recordings/, labels/, ...)")
    parser.add_argument("--config", help="YAML config overlaying the built-in defaults")
    parser.add_argument("--seed", type=int, help="master seed overriding the config")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the full pipeline")
    run.add_argument("--print-config", action="store_true",
                     help="print the effective configuration and exit")
    for name, desc in (
        ("synth", "generate the synthetic corpus into the workspace"),
        ("segment", "band-pass, detect S1, and store cycle boundaries"),
        ("features", "extract per-cycle feature vectors"),
        ("alpha", "agreement statistics across selection steps"),
        ("select", "run the four-step selection with majority vote"),
        ("split", "grouped stratified train/test split"),
        ("train", "fit the configured classifiers on sc and hq labels"),
        ("evaluate", "score trained models and write the report"),
    ):
        sub.add_parser(name, help=desc)

    serve = sub.add_parser("serve", help="start the annotation service")
    serve.add_argument("--host", default=None,
                       help="bind host (default: MURMURLAB_BIND or 127.0.0.1)")
    serve.add_argument("--port", type=int, default=None,
                       help="bind port (default: MURMURLAB_BIND or 8400)")
    return parser


def _bind_address(args) -> tuple[str, int]:
    """Flags win; otherwise the MURMURLAB_BIND env var ('host:port'), then
    the 127.0.0.1:8400 default."""
    import os

    env = os.environ.get("MURMURLAB_BIND", "")
    env_host, _, env_port = env.rpartition(":")
    host = args.host or env_host or (env if env and not env_port.isdigit() else "") \
        or "127.0.0.1"
    port = args.port if args.port is not None else (
        int(env_port) if env_port.isdigit() else 8400)
    return host, port


def _require_workspace(args) -> Workspace:
    if not args.workspace:
        raise UserError("--workspace is required for this command")
    return Workspace(Path(args.workspace))


def main(argv=None) -> int:
    args = None
    try:
        args = _build_parser().parse_args(argv)
        cfg = load_config(args.config, seed=args.seed)

        if args.command == "run" and args.print_config:
            print(dump_config(cfg), end="")
            return 0

        if args.command == "serve":
            import uvicorn

            from .annotation import app_for_workspace

            ws = _require_workspace(args)
            host, port = _bind_address(args)
            uvicorn.run(app_for_workspace(ws.root), host=host, port=port,
                        log_level="warning")
            return 0

        from . import pipeline

        ws = _require_workspace(args)
        try:
            if args.command == "run":
                pipeline.run_pipeline(ws, cfg)
            else:
                stage = getattr(pipeline, f"stage_{args.command}")
                for path in stage(ws, cfg):
                    print(path)
                if args.command == "alpha":
                    print((ws.reports_dir / "alpha_trace.csv").read_text(), end="")
        except pipeline.StageError as exc:
            raise UserError(str(exc))
        return 0
    except (UserError, ConfigError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
