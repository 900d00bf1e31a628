#!/usr/bin/env python3
"""
Transform subcommand for the coalbranch CLI

Maps a branching parameter file to the coalescent side at level z
(--dir forward) or a coalescent file back to the branching side with
diagonal anchor a (--dir inverse, a defaults to 0).
"""

import logging
from enum import Enum
from typing import Optional

import typer

from src.cli.common.runner import EXIT_OK, RunConfig, get_console, run
from src.core.transform import DiagonalAnchor, MassLevel, h_z, h_z_inverse
from src.models.errors import PreconditionError
from src.models.params import BranchingParams, CoalescentParams
from src.utils.json_utils import dump_params, load_params

logger = logging.getLogger("coalbranch.transform")

app = typer.Typer(help="Map parameters between the branching and coalescent sides")


class Direction(str, Enum):
    forward = "forward"
    inverse = "inverse"


def run_transform(cfg: RunConfig) -> int:
    try:
        direction = Direction(cfg.option("dir", "forward"))
    except ValueError:
        raise PreconditionError(f"--dir must be forward or inverse, got '{cfg.option('dir')}'")
    z = MassLevel.from_csv(cfg.require("z"))
    params = load_params(cfg.params_path)

    if direction == Direction.forward:
        if not isinstance(params, BranchingParams):
            raise PreconditionError("--dir forward needs a branching parameter file (B, c, mu)")
        if cfg.option("a") is not None:
            logger.warning("Ignoring --a: the diagonal anchor only applies to --dir inverse")
        result = h_z(params, z)
    else:
        if not isinstance(params, CoalescentParams):
            raise PreconditionError("--dir inverse needs a coalescent parameter file (rho, Q)")
        a_text = cfg.option("a")
        anchor = DiagonalAnchor.from_csv(a_text) if a_text is not None else None
        result = h_z_inverse(params, z, anchor)

    path = cfg.output(".json")
    dump_params(result, path)
    logger.debug(f"transform {direction.value}: {params.digest()} -> {result.digest()}")
    get_console().print(f"[green]Wrote[/green] {type(result).__name__} (d={result.d}) to {path}")
    return EXIT_OK


@app.command("transform")
def transform(
    direction: Direction = typer.Option(Direction.forward, "--dir", help="forward: branching -> coalescent; inverse: back"),
    z: str = typer.Option(..., "--z", help="Mass level, comma-separated positive numbers"),
    a: Optional[str] = typer.Option(None, "--a", help="Diagonal anchor for --dir inverse (default 0)"),
    input_path: str = typer.Option(..., "--in", help="Input parameter file (JSON)"),
    out: Optional[str] = typer.Option(None, "--out", help="Output parameter file (JSON)"),
):
    """Map parameters between the branching and coalescent parameter spaces."""
    cfg = RunConfig("transform", input_path, {"dir": direction.value, "z": z, "a": a}, 0, out)
    raise typer.Exit(code=run(cfg))
