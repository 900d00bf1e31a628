#!/usr/bin/env python3
"""
Validate subcommand for the coalbranch CLI

This module implements the 'validate' subcommand, which checks a branching
or coalescent parameter file against its admissibility conditions and
writes the resulting report as JSON (schemas/validate/v1.0).
"""

import logging
from typing import Any, Dict, Optional

import typer

from src.cli.common.runner import EXIT_INVALID, EXIT_OK, RunConfig, get_console, run
from src.cli.utils.render import print_summary, render_report, write_report
from src.models.params import BranchingParams, validate_branching, validate_coalescent
from src.utils.json_utils import load_params

logger = logging.getLogger("coalbranch.validate")

app = typer.Typer(help="Check parameter admissibility")


def build_report(params) -> Dict[str, Any]:
    """Validation report of params plus its kind and digest."""
    if isinstance(params, BranchingParams):
        kind, report = "branching", validate_branching(params)
    else:
        kind, report = "coalescent", validate_coalescent(params)
    data = report.to_dict()
    data["kind"] = kind
    data["params"] = params.digest()
    return data


def _print_checks(report: Dict[str, Any]) -> None:
    rows = [
        [c["name"], c["value"], c["threshold"], "[green]pass[/green]" if c["passed"] else "[red]FAIL[/red]"]
        for c in report["checks"]
    ]
    print_summary(get_console(), f"{report['kind']} parameters", rows, ["check", "value", "threshold", "result"])


def run_validate(cfg: RunConfig) -> int:
    params = load_params(cfg.params_path)
    report = build_report(params)
    for check in report["checks"]:
        if not check["passed"]:
            logger.warning(f"Check {check['name']} failed: value={check['value']} threshold={check['threshold']}")

    if cfg.out_path:
        write_report(cfg.out_path, report, "validate")
        _print_checks(report)
    else:
        typer.echo(render_report(report, "validate"))
    return EXIT_OK if report["ok"] else EXIT_INVALID


@app.command("validate")
def validate(
    params: str = typer.Option(..., "--params", help="Parameter file to validate (JSON)"),
    out: Optional[str] = typer.Option(None, "--out", help="Write the report here instead of stdout"),
):
    """
    Validate a parameter file.

    Exits 0 when every check passes and 1 when any check fails.
    """
    raise typer.Exit(code=run(RunConfig("validate", params, {}, 0, out)))
