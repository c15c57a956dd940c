"""pytdp command-line interface.

Usage:
    pytdp bound --observations data.csv --sets sets.txt --output bounds.csv
    pytdp bound --evalues e.csv --sets sets.txt --output bounds.csv --resume state.json
    pytdp simulate --scenario scenarios/desk_scale.json --output metrics.csv
    pytdp oracle --instances 1000 --seed 42
    pytdp convert --evalues e.csv --output p.csv

Exit codes: 0 success, 1 input error, 2 configuration error, 3 numeric
error, 4 oracle mismatch.
"""
import functools
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import csvio
from .closed_testing import BoundRow, BoundTracker
from .eprocess import EProcessBank, EProcessFamily, e_to_p_matrix
from .errors import ConfigError, InputError, NumericalError, TDPError
from .oracle import cross_check, generate_instances
from .simulation import ScenarioConfig, run_scenario
from .snapshot import Snapshot

console = Console()
err_console = Console(stderr=True)


@dataclass
class RunManifest:
    "everything one invocation was asked to do"
    command: str
    inputs: dict = field(default_factory=dict)
    output: Optional[str] = None
    alpha: Optional[float] = None
    family: Optional[dict] = None
    sets: Optional[str] = None
    ard: bool = True
    seed: Optional[int] = None

    def __post_init__(self):
        if self.command == "bound":
            given = [k for k in ("observations", "evalues") if self.inputs.get(k)]
            if len(given) != 1:
                raise InputError("bound needs exactly one of --observations or --evalues")

    @property
    def mode(self) -> str:
        return "observations" if self.inputs.get("observations") else "evalues"


def error_handler(func):
    "map pytdp errors to messages and exit codes"
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except TDPError as e:
            logging.debug("command failed", exc_info=True)
            err_console.print(f"[red]Error:[/red] {e}")
            sys.exit(e.exit_code)
        except KeyboardInterrupt:
            err_console.print("\n[yellow]Operation cancelled by user[/yellow]")
            sys.exit(1)
        except Exception as e:
            err_console.print(f"[red]Unexpected error:[/red] {e}")
            if click.get_current_context().obj.get('debug', False):
                raise
            sys.exit(NumericalError.exit_code)
    return wrapper


@click.group()
@click.option('--debug', is_flag=True, help='Debug logging; re-raise unexpected errors')
@click.pass_context
def cli(ctx, debug):
    """Anytime-valid simultaneous true discovery proportion bounds"""
    ctx.ensure_object(dict)
    ctx.obj['debug'] = debug
    logging.basicConfig(level=logging.DEBUG if debug else logging.INFO, format="%(message)s",
                        handlers=[RichHandler(console=err_console, show_path=debug)], force=True)


def family_options(func):
    "shared e-process family flags"
    options = [
        click.option('--family', 'kind', default='mom', show_default=True,
                     type=click.Choice(['gaussian_lr', 't_lr', 'mom']), help='E-process family'),
        click.option('--delta', default=0.5, show_default=True, type=float,
                     help='Alternative effect for gaussian_lr and t_lr'),
        click.option('--delta-min', default=0.5, show_default=True, type=float,
                     help='Moment prior location for mom'),
        click.option('--nodes', default=64, show_default=True, type=int,
                     help='Quadrature nodes for mom'),
        click.option('--prior-sides', default='one_sided', show_default=True,
                     type=click.Choice(['one_sided', 'two_sided']), help='Moment prior support'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _display_last(rows: list[BoundRow], ard: bool) -> None:
    last: dict[str, BoundRow] = {}
    for row in rows:
        last[row.set_label] = row
    if not last:
        return
    table = Table(title="Bounds at last time", row_styles=['dim', ''])
    table.add_column("Set", style="blue")
    table.add_column("Time", justify="right")
    table.add_column("c", justify="right", style="yellow")
    table.add_column("TDP lower bound", justify="right", style="green")
    for row in last.values():
        c, tdp = (row.c_ard, row.tdp_ard) if ard else (row.c_inst, row.tdp_inst)
        table.add_row(row.set_label, str(row.time), str(c), f"{tdp:.4f}")
    console.print(table)


@cli.command(name='bound')
@click.option('--observations', type=click.Path(dir_okay=False), help='CSV time,h1..hm, one subject per row')
@click.option('--evalues', type=click.Path(dir_okay=False), help='CSV time,h1..hm of e-process values')
@click.option('--sets', 'sets_path', required=True, type=click.Path(dir_okay=False),
              help='Discovery sets, one label:1,2,5-9 per line')
@click.option('--alpha', default=0.05, show_default=True, type=float, help='Level')
@family_options
@click.option('--ard/--no-ard', default=True, show_default=True, help='Report the running-minimum bound')
@click.option('--output', '-o', required=True, type=click.Path(dir_okay=False), help='Bounds CSV')
@click.option('--emit-evalues', type=click.Path(dir_okay=False), help='Also write the computed e-values')
@click.option('--resume', type=click.Path(dir_okay=False), help='Snapshot to resume from and update')
@click.pass_context
@error_handler
def cmd_bound(ctx, observations, evalues, sets_path, alpha, kind, delta, delta_min, nodes, prior_sides,
              ard, output, emit_evalues, resume):
    """Stream observations or e-values in, TDP bounds out"""
    family = EProcessFamily(kind=kind, delta=delta, delta_min=delta_min,
                            quadrature_nodes=nodes, prior_sides=prior_sides)
    manifest = RunManifest(command="bound", inputs={'observations': observations, 'evalues': evalues},
                           output=output, alpha=alpha, family=family.to_dict(), sets=sets_path, ard=ard)
    logging.debug(f"manifest: {asdict(manifest)}")
    sets = csvio.read_sets(sets_path)

    if manifest.mode == "observations":
        times, data = csvio.read_observations(observations)
    else:
        times, data = csvio.read_evalues(evalues)
    m = data.shape[1]
    for s in sets:
        s.check_range(m)

    snapshot = None
    if resume and Path(resume).exists():
        snapshot = Snapshot.load(resume)
        snapshot.check_compatible(manifest.mode, alpha, m, sets,
                                  family if manifest.mode == "observations" else None)

    bank = None
    if manifest.mode == "observations":
        bank = EProcessBank.from_states(snapshot.states, family) if snapshot else EProcessBank(m, family)
    tracker = BoundTracker(sets, alpha, m, snapshot.running_min if snapshot else None)

    horizon = snapshot.horizon if snapshot else times[0] - 1
    keep = times > horizon
    if not keep.any():
        logging.warning(f"no rows after time {horizon}, nothing to do")
    elif times[keep][0] != horizon + 1:
        raise InputError(f"resuming at time {horizon + 1} but the input continues at {times[keep][0]}")

    rows: list[BoundRow] = []
    e_rows = []
    for time, row in zip(times[keep], data[keep]):
        e = bank.update(row) if bank is not None else row
        e_rows.append(e)
        rows.extend(tracker.step(int(time), e))

    append = snapshot is not None
    csvio.write_bounds(output, rows, append=append)
    if emit_evalues and e_rows:
        csvio.write_matrix(emit_evalues, times[keep], np.asarray(e_rows), append=append)

    if resume:
        new_horizon = int(times[keep][-1]) if keep.any() else horizon
        Snapshot(mode=manifest.mode, alpha=alpha, m=m, horizon=int(new_horizon), sets=sets,
                 running_min=dict(tracker.running_min),
                 family=family if manifest.mode == "observations" else None,
                 states=bank.states() if bank is not None else []).save(resume)
    _display_last(rows, ard)


@cli.command(name='simulate')
@click.option('--scenario', required=True, type=click.Path(dir_okay=False), help='Scenario file (key = value or JSON)')
@click.option('--iterations', type=int, help='Override the Monte-Carlo iteration count')
@click.option('--seed', type=int, help='Override the seed')
@click.option('--workers', type=int, help='Worker processes')
@click.option('--dump-raw', type=click.Path(dir_okay=False), help='Per-iteration bounds CSV')
@click.option('--output', '-o', required=True, type=click.Path(dir_okay=False), help='Metrics CSV')
@click.pass_context
@error_handler
def cmd_simulate(ctx, scenario, iterations, seed, workers, dump_raw, output):
    """Run a Monte-Carlo scenario and write validity and power metrics"""
    config = ScenarioConfig.from_file(scenario).with_overrides(iterations=iterations, seed=seed, workers=workers)
    manifest = RunManifest(command="simulate", inputs={'scenario': scenario}, output=output,
                           alpha=config.alpha, family=config.family.to_dict(), ard=config.ard, seed=config.seed)
    logging.debug(f"manifest: {asdict(manifest)}")
    table = run_scenario(config, keep_raw=dump_raw is not None, progress=True)
    csvio.write_metrics(output, table)
    if dump_raw:
        csvio.write_raw(dump_raw, table)
    console.print(table.summary_line())
    table.display()


@cli.command(name='oracle')
@click.option('--instances', default=1000, show_default=True, type=int, help='Number of instances')
@click.option('--seed', default=42, show_default=True, type=int, help='Seed')
@click.option('--max-m', default=12, show_default=True, type=int, help='Largest m drawn')
@click.option('--report', type=click.Path(dir_okay=False), help='JSON report with mismatching instances')
@click.pass_context
@error_handler
def cmd_oracle(ctx, instances, seed, max_m, report):
    """Check the shortcut bound against exhaustive closed testing"""
    if instances < 1:
        raise ConfigError(f"--instances must be positive, got {instances}")
    result = cross_check(generate_instances(instances, seed, max_m))
    if report:
        Path(report).write_text(result.to_json())
    if not result.ok:
        console.print_json(json.dumps(result.mismatches[0].to_dict()))
    result.raise_for_mismatch()
    console.print(f"[green]{result.checked} instances, no mismatches[/green]")


@cli.command(name='convert')
@click.option('--evalues', required=True, type=click.Path(dir_okay=False), help='CSV time,h1..hm of e-values')
@click.option('--output', '-o', required=True, type=click.Path(dir_okay=False), help='p-process CSV')
@click.pass_context
@error_handler
def cmd_convert(ctx, evalues, output):
    """Convert e-processes to p-processes (running min of 1/e, capped at 1)"""
    times, values = csvio.read_evalues(evalues)
    csvio.write_matrix(output, times, e_to_p_matrix(values))
    _, written = csvio.read_matrix(output)
    if np.any(written <= 0) or np.any(written > 1) or np.any(np.diff(written, axis=0) > 0):
        raise NumericalError(f"{output}: p-process columns must be nonincreasing in (0, 1]")
    logging.info(f"wrote {written.shape[0]} x {written.shape[1]} p-values to {output}")


if __name__ == '__main__':
    cli()
