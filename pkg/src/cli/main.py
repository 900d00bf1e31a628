#!/usr/bin/env python3
"""
coalbranch CLI entry point.

The root Typer app owns the global logging options. Each module named in
COMMAND_TABLE (src/cli/common/runner.py) exposes its own Typer app, whose
commands are mounted here under their own names.
"""

import importlib
import logging
import os
import platform
import sys
from importlib.metadata import PackageNotFoundError, version as package_version
from typing import Dict, List, Optional, Tuple

import typer
from rich.console import Console
from rich.logging import RichHandler

from src.cli.common.config import config
from src.cli.common.runner import COMMAND_TABLE, set_consoles

LOGGER_NAME = "coalbranch"
FILE_LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s: %(message)s"

app = typer.Typer(
    help="coalbranch: simulate multitype Lambda-coalescents and CSBPs and check their moment duality",
    add_completion=True,
)


def _log_level(verbose: bool, quiet: bool) -> int:
    if quiet:
        return logging.ERROR
    return logging.DEBUG if verbose else logging.INFO


def _make_consoles(no_color: bool, ci: bool) -> Tuple[Console, Console]:
    """Stdout console for results, stderr console for logs and errors."""
    plain = ci or no_color
    options = {
        "color_system": None if plain else "auto",
        "highlight": not ci,
        "markup": not ci,
        "emoji": not ci,
    }
    return Console(**options), Console(stderr=True, **options)


def _handlers(err_console: Console, json_logs: bool, log_file: Optional[str], ci: bool) -> List[logging.Handler]:
    if json_logs:
        from pythonjsonlogger import json as jsonlog

        handler = logging.FileHandler(log_file) if log_file else logging.StreamHandler()
        handler.setFormatter(jsonlog.JsonFormatter())
        return [handler]

    handlers: List[logging.Handler] = [
        RichHandler(console=err_console, rich_tracebacks=True, show_time=not ci, show_path=not ci)
    ]
    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(FILE_LOG_FORMAT))
        handlers.append(file_handler)
    return handlers


def setup_logging(verbose: bool = False, quiet: bool = False, json_logs: bool = False, log_file: Optional[str] = None,
                  no_color: bool = False, ci: bool = False) -> Tuple[Console, logging.Logger]:
    """
    Configure the root logger and the shared consoles from the global options.

    Rich output goes to stderr unless --log-json is given, in which case
    records are JSON objects (on stderr, or in --log-file). Calling this
    again replaces the previous handlers.

    Returns:
        The stdout console and the "coalbranch" logger
    """
    out_console, err_console = _make_consoles(no_color, ci)

    logging.root.handlers.clear()
    logging.basicConfig(
        level=_log_level(verbose, quiet),
        format="%(levelname)s: %(message)s" if ci else "%(message)s",
        datefmt="[%X]",
        handlers=_handlers(err_console, json_logs, log_file, ci),
    )
    set_consoles(out_console, err_console)
    return out_console, logging.getLogger(LOGGER_NAME)


def register_command(module_path: str, object_name: str = "app") -> List[str]:
    """
    Mount the commands of one module's Typer app on the root app.

    Commands keep their own names, so the CLI stays flat
    (coalbranch simulate-csbp, not coalbranch simulate csbp).

    Returns:
        The names that were added; empty if the module could not be loaded
    """
    logger = logging.getLogger(LOGGER_NAME)
    try:
        command_app = getattr(importlib.import_module(module_path), object_name)
    except (ImportError, AttributeError) as e:
        logger.warning(f"Could not import commands from {module_path}: {e}")
        return []
    present = {info.name for info in app.registered_commands}
    added = []
    for info in command_app.registered_commands:
        if info.name in present:
            continue
        app.registered_commands.append(info)
        added.append(info.name)
    return added


def load_commands() -> List[str]:
    """
    Register every module named in COMMAND_TABLE, once per module.

    A module that fails to import is skipped with a warning so the
    remaining commands stay usable. Returns the names that were registered.
    """
    logger = logging.getLogger(LOGGER_NAME)
    registered: List[str] = []
    for module_path in dict.fromkeys(path for path, _ in COMMAND_TABLE.values()):
        registered.extend(register_command(module_path))
    missing = set(COMMAND_TABLE) - {info.name for info in app.registered_commands}
    if missing:
        logger.warning(f"Commands without a Typer entry: {', '.join(sorted(missing))}")
    logger.debug(f"Registered commands: {', '.join(registered)}")
    return registered


def _dependency_versions() -> Dict[str, str]:
    versions = {}
    for package in ("coalbranch", "numpy", "scipy"):
        try:
            versions[package] = package_version(package)
        except PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def capture_environment() -> Dict[str, object]:
    """Interpreter, platform, library versions and threading used by this run."""
    return {
        "python_version": platform.python_version(),
        "platform": platform.platform(),
        "pwd": os.getcwd(),
        "config_file": str(config.config_file) if config.config_file else None,
        "threads": config.thread_count(),
        **_dependency_versions(),
    }


def _print_version() -> None:
    versions = _dependency_versions()
    typer.echo(f"coalbranch v{versions['coalbranch']}")
    typer.echo(f"numpy {versions['numpy']}, scipy {versions['scipy']}")
    typer.echo(f"Python {sys.version.split()[0]} on {platform.platform()}")


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose output"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Suppress all output except errors"),
    ci: bool = typer.Option(False, "--ci", help="Run in non-interactive CI mode"),
    json_logs: bool = typer.Option(False, "--log-json", help="Output logs in JSON format"),
    log_file: Optional[str] = typer.Option(None, "--log-file", help="Path to log file"),
    no_color: bool = typer.Option(False, "--no-color", help="Disable colored output"),
    show_version: bool = typer.Option(False, "--version", help="Show version and exit"),
):
    """
    coalbranch: multitype Lambda-coalescents and continuous-state branching processes.

    Simulate either side, map parameters between them and check the moment duality.
    """
    if show_version:
        _print_version()
        raise typer.Exit()

    _, logger = setup_logging(verbose=verbose, quiet=quiet, json_logs=json_logs, log_file=log_file,
                              no_color=no_color, ci=ci)
    logger.debug(f"Environment: {capture_environment()}")

    if ctx.invoked_subcommand is None:
        typer.echo(ctx.get_help())


# Commands must exist before click resolves the subcommand name
load_commands()

if __name__ == "__main__":
    app()
