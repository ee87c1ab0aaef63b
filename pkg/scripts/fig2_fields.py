"""Write the two-state vector fields and sample trajectories as CSV.

For each sigma the slice fixes (2,a1) at the value of that sigma's
equilibrium, so the equilibrium shows up as a point of the plotted plane.
Output files: field_sigma<s>.csv (grid), quiver_sigma<s>.dat and
path_sigma<s>_<corner>.csv.
"""
import argparse
from pathlib import Path

from qhmpe import envs
from qhmpe.di import SliceSpec, field_grid, grid_csv, integrate_trajectory, path_csv
from qhmpe.evaluation import eval_q_qh
from qhmpe.mdp import QhDiscount

EQUILIBRIUM = {0.3: "g", 0.5: "h", 0.7: "f"}
CORNERS = [(10.0, 10.0), (10.0, 40.0), (40.0, 10.0), (40.0, 40.0)]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="fig2_out")
    p.add_argument("--n", type=int, default=21, help="grid points per axis")
    p.add_argument("--band", type=float, default=0.1, help="tie band, as the Euler step")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mdp = envs.two_state()
    for sigma, name in EQUILIBRIUM.items():
        disc = QhDiscount(sigma, 0.8)
        q = eval_q_qh(mdp, envs.two_state_policy(name), disc)
        spec = SliceSpec(("1", "a1"), ("1", "a2"), (0.0, 0.0, float(q[2])), (10, 40), (10, 40), args.n, args.n)
        recs = field_grid(mdp, disc, spec, band_h=args.band)
        (out / f"field_sigma{sigma}.csv").write_text(grid_csv(recs))
        (out / f"quiver_sigma{sigma}.dat").write_text(grid_csv(recs, quiver=True))
        for x, y in CORNERS:
            path = integrate_trajectory(mdp, disc, [x, y, q[2]], 0.1, 2000)
            (out / f"path_sigma{sigma}_{x:g}_{y:g}.csv").write_text(path_csv(mdp, path))
            print(f"sigma={sigma} start=({x:g},{y:g}) end={path[-1].round(4).tolist()} target={q.round(4).tolist()}")


if __name__ == "__main__":
    main()
