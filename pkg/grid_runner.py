"""runs a scenario over the effect size x correlation x ARD grid
one metrics CSV per cell, written to results/
"""
import sys
from pathlib import Path
from rich import print
from rich.progress import track
from pytdp import ScenarioConfig, run_scenario
from pytdp.csvio import write_metrics

MU_ALT = [0.5, 1.0, 1.5]
RHO = [0.2, 0.6]
ARD = [True, False]


def run_cell(base: ScenarioConfig, mu_alt: float, rho: float, ard: bool, out_dir: Path) -> str:
    "run one grid cell and write its metrics"
    config = base.with_overrides(mu_alt=mu_alt, rho=rho, ard=ard)
    table = run_scenario(config)
    p = out_dir / f"mu{mu_alt:g}_rho{rho:g}_{'ard' if ard else 'inst'}.csv"
    write_metrics(p, table)
    return f"{p.name}: {table.summary_line()}"


if __name__ == '__main__':
    scenario = sys.argv[1] if len(sys.argv) > 1 else 'scenarios/desk_scale.json'
    base = ScenarioConfig.from_file(scenario)
    out_dir = Path('results')
    if not out_dir.exists():
        out_dir.mkdir(parents=True)
    cells = [(mu, rho, ard) for mu in MU_ALT for rho in RHO for ard in ARD]
    for mu, rho, ard in track(cells, description=f'Running {scenario} grid'):
        print(run_cell(base, mu, rho, ard, out_dir))
