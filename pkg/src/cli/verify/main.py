#!/usr/bin/env python3
"""
Verify subcommand for the coalbranch CLI

verify-duality estimates E_r[prod R_i(t)^n_i] from the limit SDE and
E_n[prod r_i^N_i(t)] from the block-counting chain, and reports the
z-score of their difference (schemas/report/v1.0).
"""

import logging
from typing import Optional

import typer

from src.cli.common.config import config
from src.cli.common.runner import EXIT_INVALID, EXIT_OK, RunConfig, get_console, parse_floats, parse_ints, run
from src.cli.utils.render import print_summary, render_report, write_report
from src.core.duality import DualityReport, duality_check
from src.core.transform import MassLevel
from src.utils.json_utils import load_params

logger = logging.getLogger("coalbranch.verify")

app = typer.Typer(help="Check the moment duality")


def _print_report(report: DualityReport) -> None:
    rows = [
        ["forward", f"{report.forward.value:.6f}", f"{report.forward.stderr:.2e}", report.forward.reps],
        ["backward", f"{report.backward.value:.6f}", f"{report.backward.stderr:.2e}", report.backward.reps],
    ]
    print_summary(get_console(), "moment duality", rows, ["side", "estimate", "stderr", "reps"])
    verdict = "[green]passed[/green]" if report.passed else "[red]failed[/red]"
    get_console().print(f"z-score {report.zscore:.3f} (threshold {report.threshold}): {verdict}")


def run_verify_duality(cfg: RunConfig) -> int:
    p = load_params(cfg.params_path, "branching")
    z = MassLevel(parse_floats(cfg.require("z"), "z"))
    r = parse_floats(cfg.require("r"), "r")
    n = parse_ints(cfg.require("n"), "n")
    zthreshold = float(cfg.option("zthreshold", config.get_float("zthreshold")))
    report = duality_check(
        p,
        z,
        r,
        n,
        t=float(cfg.option("t", 1.0)),
        reps=int(cfg.option("reps", 10_000)),
        dt=float(cfg.option("dt", 1e-3)),
        seed=cfg.seed,
        zthreshold=zthreshold,
        exact_backward=bool(cfg.option("exact_backward", False)),
        state_cap=config.get_int("state_cap"),
    )
    data = report.to_dict()
    if cfg.out_path:
        write_report(cfg.out_path, data, "report")
        _print_report(report)
    else:
        typer.echo(render_report(data, "report"))
    if not report.passed:
        logger.warning(f"Duality check failed: |z| = {abs(report.zscore):.3f} > {report.threshold}")
        return EXIT_INVALID
    return EXIT_OK


@app.command("verify-duality")
def verify_duality(
    params: str = typer.Option(..., "--params", help="Branching parameter file (JSON)"),
    z: str = typer.Option(..., "--z", help="Mass level, comma-separated"),
    r: str = typer.Option(..., "--r", help="Initial frequencies in [0,1], comma-separated"),
    n: str = typer.Option(..., "--n", help="Initial block counts, comma-separated"),
    t: float = typer.Option(1.0, "--t", help="Time at which both moments are compared"),
    reps: int = typer.Option(10_000, "--reps", help="Monte Carlo repetitions per side"),
    dt: float = typer.Option(1e-3, "--dt", help="Step size of the limit SDE"),
    seed: int = typer.Option(0, "--seed", help="Base seed (64-bit unsigned)"),
    exact_backward: bool = typer.Option(False, "--exact-backward", help="Evaluate the backward side exactly"),
    zthreshold: Optional[float] = typer.Option(None, "--zthreshold", help="Pass threshold on |z-score| (default from config)"),
    out: Optional[str] = typer.Option(None, "--out", help="Write the report here instead of stdout"),
):
    """
    Check the moment duality between the frequency process and the coalescent.

    Exits 0 when |z-score| stays within the threshold and 1 otherwise.
    """
    options = {
        "z": z,
        "r": r,
        "n": n,
        "t": t,
        "reps": reps,
        "dt": dt,
        "exact_backward": exact_backward,
        "zthreshold": zthreshold,
    }
    raise typer.Exit(code=run(RunConfig("verify-duality", params, options, seed, out)))
