"""Reference expected sample sizes for the two Gaussian scenarios and a
runner that reproduces them."""
from __future__ import annotations

from dataclasses import dataclass

from .config import load_config
from .engine import design_two_stage
from .montecarlo import CentralizedConfig, run_experiment

COLUMNS = ("delta_a", "delta_A", "delta_A2")
COLUMN_TITLES = {"delta_a": "centralized", "delta_A": "two-stage K=1", "delta_A2": "two-stage K=2"}

# (value, reported +-) per state; the centralized column has no reported spread
REFERENCE = {
    "ht1": {
        "delta_a": ((46.48, 0.0), (48.39, 0.0), (11.90, 0.0)),
        "delta_A": ((73.5, 0.9), (77.7, 0.9), (19.8, 0.2)),
        "delta_A2": ((36.8, 0.7), (38.9, 0.7), (9.9, 0.1)),
    },
    "ht2": {
        "delta_a": ((46.59, 0.0), (69.43, 0.0), (46.60, 0.0)),
        "delta_A": ((73.4, 0.9), (110.2, 0.9), (73.4, 0.9)),
        "delta_A2": ((37.8, 0.6), (55.2, 0.7), (37.8, 0.6)),
    },
}


@dataclass(frozen=True)
class Cell:
    scenario: str
    column: str
    m: int
    mean_N: float
    stderr_N: float
    reference: float
    reported: float

    @property
    def tolerance(self) -> float:
        return max(3 * self.stderr_N, self.reported)

    @property
    def contained(self) -> bool:
        return abs(self.mean_N - self.reference) <= self.tolerance


def run_column(scenario: str, column: str, R: int, master_seed: int = 0, threads: int = 1,
               cost: float = None, u: float = None):
    """Summary for one column of the table under one scenario."""
    cfg = load_config(scenario)
    cost = cfg.cost if cost is None else cost
    if column == "delta_a":
        cc = CentralizedConfig(cfg.thresholds, cost)
        return run_experiment(cc, cfg.hs, "centralized", R, master_seed, threads,
                              label=column).summary
    if column == "delta_A2":
        cfg = cfg.with_sensors(2)
    tcfg = design_two_stage(cfg.hs, cost, u=cfg.u if u is None else u, rule=cfg.rule,
                            first_stage=cfg.first_stage_vector(), block=cfg.block)
    return run_experiment(tcfg, cfg.hs, "two_stage", R, master_seed, threads,
                          label=column).summary


def table1(R: int = 10_000, master_seed: int = 0, threads: int = 1) -> tuple:
    """Run all six scenario/column experiments.

    Returns ``(cells, summaries)`` with summaries keyed by
    ``(scenario, column)``.
    """
    cells, summaries = [], {}
    for scenario in ("ht1", "ht2"):
        for column in COLUMNS:
            s = run_column(scenario, column, R, master_seed, threads)
            summaries[scenario, column] = s
            for m, st in enumerate(s.states):
                ref, pm = REFERENCE[scenario][column][m]
                cells.append(Cell(scenario, column, m, st.mean_N, st.stderr_N, ref, pm))
    return cells, summaries


def render(cells) -> str:
    lines = [f"{'E_m[N]':<12}" + "".join(f"{COLUMN_TITLES[c]:>34}" for c in COLUMNS)]
    for scenario in ("ht1", "ht2"):
        for m in range(3):
            row = f"{scenario.upper() + f' m={m}':<12}"
            for column in COLUMNS:
                c = next(x for x in cells if (x.scenario, x.column, x.m) == (scenario, column, m))
                mark = "ok" if c.contained else "MISS"
                ref = f"{c.reference:g}" + (f"±{c.reported:g}" if c.reported else "")
                row += f"{c.mean_N:>9.2f}±{c.stderr_N:<5.2f} [{ref:>10}] {mark:>4}"
            lines.append(row)
    lines.append("bracketed: reference value; ok = within max(3 stderr, reported spread)")
    return "\n".join(lines)
