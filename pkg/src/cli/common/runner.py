#!/usr/bin/env python3
"""
Command dispatch for the coalbranch CLI.

Every subcommand builds a RunConfig and hands it to run(), which resolves
the handler from COMMAND_TABLE and turns library exceptions into exit
codes: 0 on success, 1 when a validation fails, 2 on any other error.
"""

import importlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from rich.console import Console
from rich.markup import escape

from src.cli.common.config import config
from src.models.errors import CoalbranchError, InvalidParamsError, PreconditionError
from src.utils.seeding import MASK64

logger = logging.getLogger("coalbranch.runner")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ERROR = 2

# name -> (module path, handler); each module exposes a Typer app holding its commands
COMMAND_TABLE: Dict[str, Tuple[str, str]] = {
    "simulate-csbp": ("src.cli.simulate.main", "run_simulate_csbp"),
    "simulate-pair": ("src.cli.simulate.main", "run_simulate_pair"),
    "simulate-coalescent": ("src.cli.simulate.main", "run_simulate_coalescent"),
    "simulate-frequency": ("src.cli.simulate.main", "run_simulate_frequency"),
    "transform": ("src.cli.transform.main", "run_transform"),
    "validate": ("src.cli.validate.main", "run_validate"),
    "verify-duality": ("src.cli.verify.main", "run_verify_duality"),
}


@dataclass
class RunConfig:
    """One CLI invocation: command name, input file, options, seed and output path."""

    command: str
    params_path: Optional[str] = None
    options: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    out_path: Optional[str] = None

    def option(self, key: str, default: Any = None) -> Any:
        value = self.options.get(key)
        return default if value is None else value

    def require(self, key: str) -> Any:
        value = self.options.get(key)
        if value is None:
            raise PreconditionError(f"--{key} is required for {self.command}")
        return value

    def output(self, suffix: str) -> Path:
        """Explicit --out, or <default_output_dir>/<command><suffix>."""
        if self.out_path:
            return Path(self.out_path)
        return Path(config.get("default_output_dir", "artifacts")) / f"{self.command}{suffix}"


_consoles = {"out": Console(), "err": Console(stderr=True)}


def set_consoles(out: Console, err: Console) -> None:
    """Called by setup_logging so commands print with the configured colour settings."""
    _consoles["out"], _consoles["err"] = out, err


def get_console(stderr: bool = False) -> Console:
    return _consoles["err" if stderr else "out"]


def report_error(error: BaseException) -> None:
    get_console(stderr=True).print(f"[red]Error:[/red] {type(error).__name__}: {escape(str(error))}")


def parse_floats(text: str, name: str) -> List[float]:
    """Comma-separated floats from a CLI option."""
    try:
        values = [float(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise PreconditionError(f"--{name} must be comma-separated numbers, got '{text}'")
    if not values:
        raise PreconditionError(f"--{name} is empty")
    return values


def parse_ints(text: str, name: str) -> List[int]:
    """Comma-separated non-negative integers from a CLI option."""
    try:
        values = [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise PreconditionError(f"--{name} must be comma-separated integers, got '{text}'")
    if not values:
        raise PreconditionError(f"--{name} is empty")
    if any(v < 0 for v in values):
        raise PreconditionError(f"--{name} must be non-negative, got '{text}'")
    return values


def _handler(command: str) -> Callable[[RunConfig], int]:
    if command not in COMMAND_TABLE:
        raise PreconditionError(f"Unknown command '{command}'")
    module_path, handler_name = COMMAND_TABLE[command]
    module = importlib.import_module(module_path)
    return getattr(module, handler_name)


def run(cfg: RunConfig) -> int:
    """
    Execute one command and map its outcome to an exit code.

    Returns:
        EXIT_OK, EXIT_INVALID (failed validation or invalid parameters) or
        EXIT_ERROR (malformed input, unreadable files, precondition failures)
    """
    logger.debug(f"Running {cfg.command}: params={cfg.params_path} seed={cfg.seed} options={cfg.options}")
    try:
        if not 0 <= cfg.seed <= MASK64:
            raise PreconditionError(f"--seed must be a 64-bit unsigned integer, got {cfg.seed}")
        return _handler(cfg.command)(cfg)
    except InvalidParamsError as e:
        if e.report is not None:
            logger.warning(f"Failing checks: {e.report.failed()}")
        report_error(e)
        return EXIT_INVALID
    except CoalbranchError as e:
        report_error(e)
        return EXIT_ERROR
    except OSError as e:
        report_error(e)
        return EXIT_ERROR
