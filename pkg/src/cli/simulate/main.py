#!/usr/bin/env python3
"""
Simulate subcommands for the coalbranch CLI

simulate-csbp, simulate-pair, simulate-coalescent and simulate-frequency
write one trajectory per rep to a CSV file (columns rep, time, state).
Rep k is seeded with derive_seed(seed, k).
"""

import logging
from enum import Enum
from typing import Callable, List, Optional, Tuple

import typer

from src.cli.common.config import config
from src.cli.common.runner import (
    EXIT_OK,
    RunConfig,
    get_console,
    parse_floats,
    parse_ints,
    run,
)
from src.cli.utils.render import print_summary, trajectory_summary, write_trajectories_csv
from src.core.branching import simulate_csbp, simulate_pair_rz
from src.core.coalescent import (
    BlockCountingChain,
    PartitionChain,
    TypedPartition,
    simulate_block_counting,
    simulate_partition,
)
from src.core.ensemble import map_reps
from src.core.frequency import SeqSampleConfig, build_freq_params, sequential_sampling, simulate_limit_sde
from src.core.transform import MassLevel, h_z
from src.models.errors import PreconditionError
from src.models.params import BranchingParams
from src.models.trajectory import Trajectory
from src.utils.json_utils import load_params
from src.utils.seeding import derive_seed

logger = logging.getLogger("coalbranch.simulate")

app = typer.Typer(help="Simulate either side of the duality")


class CoalescentMode(str, Enum):
    blocks = "blocks"
    partition = "partition"


class FrequencyMode(str, Enum):
    sde = "sde"
    culling = "culling"


def _mode(kind, value):
    try:
        return kind(value)
    except ValueError:
        choices = ", ".join(m.value for m in kind)
        raise PreconditionError(f"--mode must be one of {choices}, got '{value}'")


def _reps(cfg: RunConfig) -> int:
    reps = int(cfg.option("reps", 1))
    if reps < 1:
        raise PreconditionError(f"--reps must be positive, got {reps}")
    return reps


def _run_reps(cfg: RunConfig, simulate: Callable[[int], Trajectory]) -> List[Trajectory]:
    """simulate(seed_k) for every rep k, on the configured thread pool."""
    return map_reps(lambda k: simulate(derive_seed(cfg.seed, k)), _reps(cfg), config.thread_count())


def _emit(cfg: RunConfig, trajectories: List[Trajectory], flags: Tuple[str, ...]) -> int:
    path = write_trajectories_csv(cfg.output(".csv"), trajectories)
    console = get_console()
    if flags:
        print_summary(console, cfg.command, trajectory_summary(trajectories, flags), ["flag", "runs"])
    console.print(f"[green]Wrote[/green] {len(trajectories)} trajectories to {path}")
    return EXIT_OK


def guard_rails(z: List[float], eps: Optional[float], L: Optional[float]) -> Tuple[float, float]:
    """Culling guard rails, defaulting to eps = fraction * min z and L = factor * max z + 1."""
    if eps is None:
        eps = config.get_float("default_eps_fraction") * min(z)
    if L is None:
        L = config.get_float("default_L_factor") * max(z) + 1.0
    return float(eps), float(L)


def _branching(cfg: RunConfig) -> BranchingParams:
    return load_params(cfg.params_path, "branching")


def run_simulate_csbp(cfg: RunConfig) -> int:
    p = _branching(cfg)
    x0 = parse_floats(cfg.require("x0"), "x0")
    T, dt = float(cfg.option("T", 1.0)), float(cfg.option("dt", 1e-3))
    cap = config.get_float("explosion_cap")
    logger.debug(f"simulate-csbp: d={p.d} x0={x0} T={T} dt={dt} explosion_cap={cap}")
    trajectories = _run_reps(cfg, lambda seed: simulate_csbp(p, x0, T, dt, seed, cap))
    return _emit(cfg, trajectories, ("absorbed", "exploded"))


def run_simulate_pair(cfg: RunConfig) -> int:
    p = _branching(cfg)
    r0 = parse_floats(cfg.require("r0"), "r0")
    z0 = parse_floats(cfg.require("z0"), "z0")
    eps, L = guard_rails(z0, cfg.option("eps"), cfg.option("L"))
    T, dt = float(cfg.option("T", 1.0)), float(cfg.option("dt", 1e-3))
    logger.debug(f"simulate-pair: r0={r0} z0={z0} eps={eps} L={L} T={T} dt={dt}")
    trajectories = _run_reps(cfg, lambda seed: simulate_pair_rz(p, r0, z0, T, dt, seed, eps, L))
    return _emit(cfg, trajectories, ("stopped",))


def run_simulate_coalescent(cfg: RunConfig) -> int:
    params = load_params(cfg.params_path)
    z_text = cfg.option("z")
    if isinstance(params, BranchingParams):
        if z_text is None:
            raise PreconditionError("--z is required when the parameter file holds branching parameters")
        params = h_z(params, MassLevel.from_csv(z_text))
        logger.debug(f"Mapped branching parameters to the coalescent side at z={z_text}")
    elif z_text is not None:
        logger.warning("Ignoring --z: the parameter file already holds coalescent parameters")

    n0 = parse_ints(cfg.require("n0"), "n0")
    T = float(cfg.option("T", 1.0))
    mode = _mode(CoalescentMode, cfg.option("mode", "blocks"))
    logger.debug(f"simulate-coalescent: mode={mode.value} n0={n0} T={T}")
    if mode == CoalescentMode.partition:
        pi0 = TypedPartition.from_counts(n0)
        chain = PartitionChain(params)
        trajectories = _run_reps(cfg, lambda seed: simulate_partition(pi0, params, T, seed, chain=chain))
    else:
        chain = BlockCountingChain(params)
        trajectories = _run_reps(cfg, lambda seed: simulate_block_counting(n0, params, None, T, seed, chain))
    return _emit(cfg, trajectories, ("absorbed",))


def run_simulate_frequency(cfg: RunConfig) -> int:
    p = _branching(cfg)
    z_values = parse_floats(cfg.require("z"), "z")
    z = MassLevel(z_values)
    r0 = parse_floats(cfg.require("r0"), "r0")
    T, dt = float(cfg.option("T", 1.0)), float(cfg.option("dt", 1e-3))
    mode = _mode(FrequencyMode, cfg.option("mode", "sde"))
    if mode == FrequencyMode.culling:
        eps, L = guard_rails(z_values, cfg.option("eps"), cfg.option("L"))
        sample = SeqSampleConfig(n=int(cfg.require("n")), eps=eps, L=L, inner_dt=dt)
        logger.debug(f"simulate-frequency culling: n={sample.n} eps={eps} L={L} inner_dt={sample.effective_inner_dt}")
        trajectories = _run_reps(cfg, lambda seed: sequential_sampling(p, z, r0, sample, T, seed))
    else:
        fp = build_freq_params(p, z)
        logger.debug(f"simulate-frequency sde: z={z_values} r0={r0} T={T} dt={dt}")
        trajectories = _run_reps(cfg, lambda seed: simulate_limit_sde(fp, r0, T, dt, seed))
    return _emit(cfg, trajectories, ())


@app.command("simulate-csbp")
def simulate_csbp_command(
    params: str = typer.Option(..., "--params", help="Branching parameter file (JSON)"),
    x0: str = typer.Option(..., "--x0", help="Initial state, comma-separated"),
    T: float = typer.Option(1.0, "--T", help="Time horizon"),
    dt: float = typer.Option(1e-3, "--dt", help="Step size"),
    reps: int = typer.Option(1, "--reps", help="Number of trajectories"),
    seed: int = typer.Option(0, "--seed", help="Base seed (64-bit unsigned)"),
    out: Optional[str] = typer.Option(None, "--out", help="Trajectory CSV path"),
):
    """Simulate multitype CSBP trajectories."""
    cfg = RunConfig("simulate-csbp", params, {"x0": x0, "T": T, "dt": dt, "reps": reps}, seed, out)
    raise typer.Exit(code=run(cfg))


@app.command("simulate-pair")
def simulate_pair_command(
    params: str = typer.Option(..., "--params", help="Branching parameter file (JSON)"),
    r0: str = typer.Option(..., "--r0", help="Initial frequencies in [0,1], comma-separated"),
    z0: str = typer.Option(..., "--z0", help="Initial total masses (> 0), comma-separated"),
    eps: Optional[float] = typer.Option(None, "--eps", help="Lower guard rail on Z (default 0.5 * min z0)"),
    L: Optional[float] = typer.Option(None, "--L", help="Upper guard rail on Z (default 2 * max z0 + 1)"),
    T: float = typer.Option(1.0, "--T", help="Time horizon"),
    dt: float = typer.Option(1e-3, "--dt", help="Step size"),
    reps: int = typer.Option(1, "--reps", help="Number of trajectories"),
    seed: int = typer.Option(0, "--seed", help="Base seed (64-bit unsigned)"),
    out: Optional[str] = typer.Option(None, "--out", help="Trajectory CSV path"),
):
    """Simulate two independent CSBP copies and record frequency and total mass."""
    options = {"r0": r0, "z0": z0, "eps": eps, "L": L, "T": T, "dt": dt, "reps": reps}
    raise typer.Exit(code=run(RunConfig("simulate-pair", params, options, seed, out)))


@app.command("simulate-coalescent")
def simulate_coalescent_command(
    params: str = typer.Option(..., "--params", help="Coalescent or branching parameter file (JSON)"),
    mode: CoalescentMode = typer.Option(CoalescentMode.blocks, "--mode", help="Block counts or typed partitions"),
    z: Optional[str] = typer.Option(None, "--z", help="Mass level for branching parameter files"),
    n0: str = typer.Option(..., "--n0", help="Initial block counts per type, comma-separated"),
    T: float = typer.Option(1.0, "--T", help="Time horizon"),
    reps: int = typer.Option(1, "--reps", help="Number of trajectories"),
    seed: int = typer.Option(0, "--seed", help="Base seed (64-bit unsigned)"),
    out: Optional[str] = typer.Option(None, "--out", help="Trajectory CSV path"),
):
    """Simulate the multitype coalescent as block counts or typed partitions."""
    options = {"mode": mode.value, "z": z, "n0": n0, "T": T, "reps": reps}
    raise typer.Exit(code=run(RunConfig("simulate-coalescent", params, options, seed, out)))


@app.command("simulate-frequency")
def simulate_frequency_command(
    params: str = typer.Option(..., "--params", help="Branching parameter file (JSON)"),
    mode: FrequencyMode = typer.Option(FrequencyMode.sde, "--mode", help="Limit SDE or culled pair process"),
    z: str = typer.Option(..., "--z", help="Mass level, comma-separated"),
    r0: str = typer.Option(..., "--r0", help="Initial frequencies in [0,1], comma-separated"),
    T: float = typer.Option(1.0, "--T", help="Time horizon"),
    dt: float = typer.Option(1e-3, "--dt", help="SDE step, or inner step of the culled process"),
    n: Optional[int] = typer.Option(None, "--n", help="Sampling intensity (culling mode)"),
    eps: Optional[float] = typer.Option(None, "--eps", help="Lower guard rail (default 0.5 * min z)"),
    L: Optional[float] = typer.Option(None, "--L", help="Upper guard rail (default 2 * max z + 1)"),
    reps: int = typer.Option(1, "--reps", help="Number of trajectories"),
    seed: int = typer.Option(0, "--seed", help="Base seed (64-bit unsigned)"),
    out: Optional[str] = typer.Option(None, "--out", help="Trajectory CSV path"),
):
    """Simulate the frequency process: limit SDE or sequential sampling."""
    options = {"mode": mode.value, "z": z, "r0": r0, "T": T, "dt": dt, "n": n, "eps": eps, "L": L, "reps": reps}
    raise typer.Exit(code=run(RunConfig("simulate-frequency", params, options, seed, out)))
