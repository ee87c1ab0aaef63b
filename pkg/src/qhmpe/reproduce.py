"""Reference values for the two-state Q-table and the inventory tables, with comparison reports."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envs
from .evaluation import eval_q_qh, polish_mpe
from .mdp import QhDiscount

# Two-state MDP, sigma=0.5, gamma=0.8; rows (1,a1), (1,a2), (2,a1).
FIG1C = {
    "f": (18.88, 19.00, 32.11),
    "g": (16.83, 16.77, 29.56),
    "h": (18.00, 18.00, 31.00),
}
FIG1C_TOL = {"f": 0.01, "g": 0.1, "h": 1e-6}
FIG1C_DISCOUNT = QhDiscount(0.5, 0.8)

# Inventory, sigma=0.3, gamma=0.9; pairs (0,0),(0,1),(0,2),(1,0),(1,1),(2,0).
INVENTORY_Q = {
    "mpe1": (897.5, 1053, 1053, 1553, 1553, 2053),
    "mpe2": (873.75, 1040.5, 1040.5, 1540.5, 1540.5, 2040.5),
    "mpe3": (918.64, 1064.125, 1064.125, 1564.125, 1564.125, 2064.125),
    "optimal": (1080, 1235.5, 1228, 1735.5, 1728, 2228),
    "naive": (675, 830.5, 839.6, 1330.5, 1339.6, 1839.6),
}
INVENTORY_Q_TOL = 0.5
# Half a unit in the last printed digit of each policy matrix.
POLICY_ROUNDING = {"mpe1": 0.005, "mpe2": 0.05, "mpe3": 0.05, "optimal": 0.0, "naive": 0.0}
MPE_NAMES = ("mpe1", "mpe2", "mpe3")


@dataclass(frozen=True)
class Cell:
    table: str
    column: str
    row: str
    expected: float
    got: float
    tol: float

    @property
    def ok(self) -> bool:
        return abs(self.got - self.expected) <= self.tol


def fig1c_cells() -> list[Cell]:
    mdp = envs.two_state()
    rows = [f"({s},{a})" for s, a in mdp.pairs]
    out = []
    for name, ref in FIG1C.items():
        q = eval_q_qh(mdp, envs.two_state_policy(name), FIG1C_DISCOUNT)
        out += [Cell("fig1c", name, r, e, float(g), FIG1C_TOL[name]) for r, e, g in zip(rows, ref, q)]
    return out


def table_policy(name: str) -> tuple[np.ndarray, np.ndarray]:
    """Printed policy and the equilibrium it rounds (unchanged for the non-equilibria)."""
    mdp = envs.inventory()
    printed = envs.inventory_policy(name, mdp)
    if name not in MPE_NAMES:
        return printed, printed
    return printed, polish_mpe(mdp, printed, envs.PAPER_INVENTORY_DISCOUNT)


def inventory_q_cells(literal: bool = False) -> list[Cell]:
    """Table comparison; mixed equilibria are evaluated at their exact form unless ``literal``."""
    mdp = envs.inventory()
    rows = [f"({s},{a})" for s, a in mdp.pairs]
    out = []
    for name, ref in INVENTORY_Q.items():
        printed, exact = table_policy(name)
        pi = printed if literal else exact
        q = eval_q_qh(mdp, pi, envs.PAPER_INVENTORY_DISCOUNT)
        out += [Cell("q", name, r, float(e), float(g), INVENTORY_Q_TOL) for r, e, g in zip(rows, ref, q)]
    return out


def rounding_cells() -> list[Cell]:
    """How far each exact equilibrium sits from its printed matrix."""
    out = []
    for name in INVENTORY_Q:
        printed, exact = table_policy(name)
        out.append(Cell("policy", name, "max|dp|", 0.0, float(np.max(np.abs(exact - printed))), POLICY_ROUNDING[name]))
    return out


def report(cells: list[Cell]) -> str:
    lines = [f"{'table':<7} {'column':<8} {'row':<8} {'expected':>10} {'got':>12} {'tol':>8}  result"]
    for c in cells:
        lines.append(
            f"{c.table:<7} {c.column:<8} {c.row:<8} {c.expected:>10.4g} {c.got:>12.4f} {c.tol:>8.0e}  "
            f"{'pass' if c.ok else 'FAIL'}"
        )
    n_ok = sum(c.ok for c in cells)
    lines.append(f"{n_ok}/{len(cells)} cells pass")
    return "\n".join(lines)


TARGETS = {
    "fig1c": fig1c_cells,
    "tables": lambda: rounding_cells() + inventory_q_cells(),
}
