"""
Command-line entry

Exit codes: 0 ok, 1 usage error, 2 runtime failure, 3 failed acceptance check.
Argparse defaults come from the loaded Config, so `--help` shows the same
values the run logs as its resolved configuration.
"""
import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from ... import __version__
from ..tensor.core import is_float64, set_float64
from ..utils.config import Config, config
from ..utils.errors import MkfaError, UsageError
from ..utils.logger import RunLogger
from . import commands
from .router import Router

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3

router = Router()
router.include_router(commands.router)


class ArgumentParser(argparse.ArgumentParser):
    """Raises UsageError instead of exiting, so run() owns the exit code"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _common_args(cfg: Config) -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help="YAML config (default: $MKFA_CONFIG or config.yaml)")
    common.add_argument('--threads', type=int, default=cfg.threads, help="worker cap ($MKFA_THREADS)")
    common.add_argument('--log-dir', default=cfg.log_dir, help="write a JSON run record here")
    common.add_argument('--f64', action='store_true', help="64-bit tensors")
    common.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    return common


def build_parser(cfg: Config) -> ArgumentParser:
    common = _common_args(cfg)
    parser = ArgumentParser(prog='mkfa', description="MkfaNet face-forgery backbone at desk scale")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND', parser_class=ArgumentParser)
    subparsers.required = True
    for route in router.routes.values():
        sub = subparsers.add_parser(
            route.name, help=route.help, description=route.help, parents=[common],
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        if route.arguments is not None:
            route.arguments(sub, cfg)
        sub.set_defaults(handler=route.handler)
    return parser


def _config_path(argv: Sequence[str]) -> Optional[str]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument('--config', default=None)
    known, _ = pre.parse_known_args(list(argv))
    return known.config


def _explicit_options(parser: argparse.ArgumentParser, command: str, argv: Sequence[str]) -> Dict[str, bool]:
    """dest → whether one of its option strings appears on the command line"""
    sub = parser._subparsers._group_actions[0].choices[command]
    explicit = {}
    for action in sub._actions:
        explicit[action.dest] = any(
            token == opt or token.startswith(opt + '=')
            for token in argv for opt in action.option_strings
        )
    return explicit


def _resolved(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ('handler', 'explicit')}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand, return its exit code"""
    argv = list(sys.argv[1:] if argv is None else argv)

    try:
        path = _config_path(argv)
        cfg = Config(path) if path else config
    except FileNotFoundError as e:
        log.error(f"❌ {e}")
        return EXIT_USAGE

    parser = build_parser(cfg)
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        log.error(f"❌ {e}")
        return EXIT_USAGE
    except SystemExit as e:
        return int(e.code or 0)

    args.explicit = _explicit_options(parser, args.command, argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    resolved = {'command': args.command, 'args': _resolved(args), 'config': cfg.as_dict()}
    log.info(f"🔧 resolved config: {json.dumps(resolved, sort_keys=True, default=str)}")

    previous = is_float64()
    set_float64(args.f64 or previous)
    result: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    code = EXIT_OK
    try:
        result = args.handler(args, cfg) or {}
        if result.get(commands.ACCEPTANCE_FAILED):
            code = EXIT_ACCEPTANCE
    except UsageError as e:
        error = str(e)
        log.error(f"❌ {e}")
        code = EXIT_USAGE
    except (MkfaError, OSError, ValueError) as e:
        error = f"{type(e).__name__}: {e}"
        log.error(f"❌ {args.command} failed: {error}")
        code = EXIT_RUNTIME
    except Exception as e:
        error = f"{type(e).__name__}: {e}"
        log.exception(f"❌ {args.command} crashed: {error}")
        code = EXIT_RUNTIME
    finally:
        set_float64(previous)

    if args.log_dir:
        record = RunLogger(args.log_dir).log_run(args.command, resolved, result, error)
        log.debug(f"📦 run record {record}")
    return code
