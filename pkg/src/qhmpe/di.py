"""The set-valued critic dynamics ``dW/dt in T(W) - W`` and its vector fields.

``T(W)`` collects ``T^pi(W)`` over policies greedy for ``W``.  Each such
image is a convex combination of the images of deterministic greedy
selections, so the set is represented by those vertices.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .evaluation import bellman_qh, greedy_set, vertex_selections
from .mdp import FiniteMdp, QhDiscount

VERTEX_CAP = 64
TIE_TOL = 1e-9


@dataclass(frozen=True)
class DirectionSet:
    selections: list[tuple[int, ...]]
    directions: np.ndarray  # one row per selection
    tie_states: tuple[int, ...]
    overflow: bool = False

    def mean(self) -> np.ndarray:
        return self.directions.mean(axis=0)


def selection_policy(mdp: FiniteMdp, selection: tuple[int, ...]) -> np.ndarray:
    pi = np.zeros(mdp.n_pairs)
    pi[list(selection)] = 1.0
    return pi


def di_directions(
    mdp: FiniteMdp,
    disc: QhDiscount,
    w: np.ndarray,
    tie_tol: float = TIE_TOL,
    cap: int = VERTEX_CAP,
) -> DirectionSet:
    """``T^pi(W) - W`` for every deterministic greedy selection ``pi`` (lexicographic, at most ``cap``)."""
    w = np.asarray(w, dtype=float)
    g = greedy_set(mdp, w, tie_tol)
    sels, overflow = vertex_selections(g, cap)
    dirs = np.array([bellman_qh(mdp, selection_policy(mdp, sel), disc, w) - w for sel in sels])
    ties = tuple(i for i, ks in enumerate(g.argmax) if len(ks) > 1)
    return DirectionSet(sels, dirs, ties, overflow)


def hull_distance(directions: np.ndarray, weight: float = 1e4) -> tuple[float, np.ndarray]:
    """Distance from the origin to the convex hull of the rows of ``directions``.

    Solves the simplex-constrained least-norm problem by NNLS with the
    sum-to-one constraint appended as a heavily weighted row, then
    renormalises, so the returned weights are feasible and the distance is
    never an underestimate.
    """
    v = np.atleast_2d(np.asarray(directions, dtype=float))
    scale = 1.0 + float(np.max(np.abs(v)))
    big = weight * scale
    a = np.vstack([v.T, np.full((1, v.shape[0]), big)])
    b = np.zeros(a.shape[0])
    b[-1] = big
    lam, _ = nnls(a, b, maxiter=50 * v.shape[0] + 100)
    lam = lam / lam.sum()
    return float(np.linalg.norm(lam @ v)), lam


@dataclass(frozen=True)
class SliceSpec:
    """A 2-D affine slice of W-space: two pair coordinates vary, the rest stay at ``base``."""

    x_pair: tuple[str, str]
    y_pair: tuple[str, str]
    base: tuple[float, ...]
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    nx: int = 21
    ny: int = 21

    def __post_init__(self):
        if tuple(self.x_pair) == tuple(self.y_pair):
            raise ValueError("slice axes must be two distinct pairs")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("slice resolution must be at least 2 per axis")

    def axes(self, mdp: FiniteMdp) -> tuple[int, int]:
        if len(self.base) != mdp.n_pairs:
            raise ValueError(f"slice base has {len(self.base)} entries, MDP has {mdp.n_pairs} pairs")
        return mdp.index(*self.x_pair), mdp.index(*self.y_pair)

    def points(self):
        """Grid points in row-major order (y outer, x inner)."""
        for y in np.linspace(*self.y_range, self.ny):
            for x in np.linspace(*self.x_range, self.nx):
                yield float(x), float(y)


@dataclass(frozen=True)
class GridRecord:
    x: float
    y: float
    region: str
    tie: bool
    vectors: tuple[tuple[float, float], ...]


def _region(mdp: FiniteMdp, w: np.ndarray, states: list[int], tol: float) -> tuple[str, bool]:
    g = greedy_set(mdp, w, tol)
    labels = ["|".join(mdp.pairs[k][1] for k in g.argmax[s]) for s in states]
    return ";".join(labels), any(len(g.argmax[s]) > 1 for s in states)


def field_grid(
    mdp: FiniteMdp,
    disc: QhDiscount,
    spec: SliceSpec,
    tie_tol: float = TIE_TOL,
    band_h: float = 0.0,
) -> list[GridRecord]:
    """Projected vertex directions over a slice.

    ``region`` names the greedy actions at the states owning the two axes.
    With ``band_h > 0`` a point also counts as a tie when its greedy margin
    is within ``band_h`` times the largest direction component, which makes
    the sliding band visible at finite grid resolution.
    """
    ix, iy = spec.axes(mdp)
    states = sorted({int(mdp.pair_state[ix]), int(mdp.pair_state[iy])})
    base = np.array(spec.base, dtype=float)
    out = []
    for x, y in spec.points():
        w = base.copy()
        w[ix], w[iy] = x, y
        ds = di_directions(mdp, disc, w, tie_tol)
        tol = max(tie_tol, band_h * float(np.max(np.abs(ds.directions))))
        region, tie = _region(mdp, w, states, tol)
        vecs = tuple((float(v[ix]), float(v[iy])) for v in ds.directions)
        out.append(GridRecord(x, y, region, tie, vecs))
    return out


def _g(x: float) -> str:
    return f"{x:.12g}"


def grid_csv(records: list[GridRecord], quiver: bool = False) -> str:
    """Grid CSV (``x,y,region,tie,vx1,vy1,...``) or whitespace quiver lines (``x y dx dy``, vertex mean)."""
    buf = io.StringIO()
    if quiver:
        for r in records:
            dx, dy = np.mean(r.vectors, axis=0)
            buf.write(f"{_g(r.x)} {_g(r.y)} {_g(dx)} {_g(dy)}\n")
        return buf.getvalue()
    width = max(len(r.vectors) for r in records) if records else 1
    header = ["x", "y", "region", "tie"]
    for k in range(1, width + 1):
        header += [f"vx{k}", f"vy{k}"]
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in records:
        row = [_g(r.x), _g(r.y), r.region, int(r.tie)]
        for vx, vy in r.vectors:
            row += [_g(vx), _g(vy)]
        row += [""] * (len(header) - len(row))
        wr.writerow(row)
    return buf.getvalue()


SELECTION_RULES = ("first", "mean")


def integrate_trajectory(
    mdp: FiniteMdp,
    disc: QhDiscount,
    w0: np.ndarray,
    step_h: float,
    n_steps: int,
    rule: str = "mean",
    tie_tol: float | None = None,
) -> np.ndarray:
    """Explicit Euler path ``W_{k+1} = W_k + h v_k``; returns ``n_steps + 1`` rows.

    ``v_k`` is the first vertex direction or the mean of all of them.  With
    ``tie_tol=None`` greedy ties are detected within the band
    ``h * max|v|``: a step that small could cross the switching surface, so
    both sides are treated as active and the path slides along it instead
    of chattering across.
    """
    if step_h <= 0:
        raise ValueError("step_h must be positive")
    if rule not in SELECTION_RULES:
        raise ValueError(f"unknown selection rule {rule!r}; expected one of {SELECTION_RULES}")
    path = np.empty((n_steps + 1, mdp.n_pairs))
    path[0] = np.asarray(w0, dtype=float)
    for k in range(n_steps):
        ds = di_directions(mdp, disc, path[k], TIE_TOL if tie_tol is None else tie_tol)
        if tie_tol is None:
            band = step_h * float(np.max(np.abs(ds.directions)))
            if band > TIE_TOL:
                ds = di_directions(mdp, disc, path[k], band)
        v = ds.directions[0] if rule == "first" else ds.mean()
        path[k + 1] = path[k] + step_h * v
    return path


def path_csv(mdp: FiniteMdp, path: np.ndarray) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["step"] + [f"{s}|{a}" for s, a in mdp.pairs])
    for k, w in enumerate(path):
        wr.writerow([k] + [_g(x) for x in w])
    return buf.getvalue()
