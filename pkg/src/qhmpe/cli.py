"""Command-line interface.

Exit codes: 0 success, 1 bad input, 2 a negative outcome (no converged
run, a policy that is not an equilibrium, a reproduction mismatch).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import di, envs, reproduce
from .evaluation import advantage, eval_q_exp, eval_q_qh, is_mpe
from .learning import RunConfig, ScheduleError, StepsizeSchedule, check_config, multi_restart
from .mdp import FiniteMdp, MdpFormatError, QhDiscount, dumps_mdp, load_mdp, load_policy, policy_to_dict
from .vanilla_pg import DEFAULT_PG_CONFIG

EXIT_OK, EXIT_INPUT, EXIT_NEGATIVE = 0, 1, 2

log = logging.getLogger("qhmpe")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- output helpers ---------------------------------------------------------

def _sig(x):
    """Round floats to 12 significant digits, recursively."""
    if isinstance(x, dict):
        return {k: _sig(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_sig(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(f"{float(x):.12g}")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _dumps(doc) -> str:
    return json.dumps(_sig(doc), indent=2) + "\n"


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _table(mdp: FiniteMdp, values) -> dict:
    return {f"{s}|{a}": float(v) for (s, a), v in zip(mdp.pairs, values)}


def _tables_csv(mdp: FiniteMdp, columns: dict[str, np.ndarray]) -> str:
    lines = ["state,action," + ",".join(columns)]
    for k, (s, a) in enumerate(mdp.pairs):
        lines.append(f"{s},{a}," + ",".join(f"{float(c[k]):.12g}" for c in columns.values()))
    return "\n".join(lines) + "\n"


# -- input helpers ----------------------------------------------------------

def _mdp(args) -> FiniteMdp:
    if getattr(args, "mdp", None):
        return load_mdp(args.mdp)
    try:
        return envs.builtin(args.env or "two-state")
    except KeyError as exc:
        raise InputError(exc.args[0]) from None


def _discount(args, mdp: FiniteMdp) -> QhDiscount:
    sigma, gamma = args.sigma, args.gamma
    if mdp.discount is not None:
        sigma = mdp.discount.sigma if sigma is None else sigma
        gamma = mdp.discount.gamma if gamma is None else gamma
    if sigma is None or gamma is None:
        raise InputError("--sigma and --gamma are required (or a discount in the MDP file)")
    return QhDiscount(sigma, gamma)


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"0..19"`` (inclusive) or comma-separated mixtures of both."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise InputError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        elif re.fullmatch(r"-?\d+", part):
            out.append(int(part))
        else:
            raise InputError(f"bad seed specification {part!r}")
    return out


def _floats(text: str, n: int | None, what: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise InputError(f"{what}: expected {n} numbers, got {len(vals)}")
    return vals


def _pair(mdp: FiniteMdp, text: str, what: str) -> tuple[str, str]:
    s, sep, a = text.partition("|")
    if not sep or (s, a) not in set(mdp.pairs):
        raise InputError(f"{what}: {text!r} is not an admissible 's|a' pair")
    return s, a


# -- config file ------------------------------------------------------------

_CONFIG_KEYS = {
    "env", "mdp", "sigma", "gamma", "alpha", "beta", "max_iters", "window", "eps_conv",
    "eps_actor", "patience", "seeds", "jobs", "out", "format", "clip",
}
_SCHEDULE_KEYS = {"scale", "exponent", "offset"}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise InputError(f"{path}: unknown field {unknown[0]!r}")
    for key in ("alpha", "beta"):
        if key in doc:
            if not isinstance(doc[key], dict) or set(doc[key]) - _SCHEDULE_KEYS:
                raise InputError(f"{path}: field {key!r} must be an object with keys {sorted(_SCHEDULE_KEYS)}")
    return doc


def _schedule(spec, what: str) -> StepsizeSchedule:
    if isinstance(spec, dict):
        vals = spec
    else:
        scale, exponent, offset = _floats(spec, 3, what)
        vals = {"scale": scale, "exponent": exponent, "offset": offset}
    try:
        return StepsizeSchedule(**{k: float(v) for k, v in vals.items()})
    except (TypeError, ValueError) as exc:
        raise InputError(f"{what}: {exc}") from None


def _merge(args, cfg: dict, key: str, default=None):
    v = getattr(args, key, None)
    if v is not None:
        return v
    return cfg.get(key, default)


# -- commands ---------------------------------------------------------------

def cmd_env(args) -> int:
    mdp = _mdp(args)
    if args.sigma is not None or args.gamma is not None:
        mdp = replace(mdp, discount=_discount(args, mdp))
    _emit(dumps_mdp(mdp), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    mdp = _mdp(args)
    disc = _discount(args, mdp)
    pi = load_policy(mdp, args.policy)
    q = eval_q_qh(mdp, pi, disc)
    q_exp = eval_q_exp(mdp, pi, disc.gamma)
    columns = {"q_qh": q, "q_exp": q_exp, "adv_qh": advantage(mdp, q, pi)}
    if args.format == "csv":
        _emit(_tables_csv(mdp, columns), args.out)
    else:
        doc = {"sigma": disc.sigma, "gamma": disc.gamma}
        doc.update({k: _table(mdp, v) for k, v in columns.items()})
        _emit(_dumps(doc), args.out)
    return EXIT_OK


def _verification_doc(mdp: FiniteMdp, report) -> dict:
    return {
        "verdict": report.verdict,
        "tol": report.tol,
        "margins": {s: float(m) for s, m in zip(mdp.states, report.margins)},
        "deviating_states": report.deviating_states(mdp),
        "support": {s: list(a) for s, a in zip(mdp.states, report.support)},
        "q": _table(mdp, report.q),
    }


def cmd_verify(args) -> int:
    mdp = _mdp(args)
    disc = _discount(args, mdp)
    pi = load_policy(mdp, args.policy)
    q = eval_q_qh(mdp, pi, disc)
    tol = args.tol if args.tol is not None else args.rel_tol * (1.0 + float(np.max(np.abs(q))))
    report = is_mpe(mdp, pi, disc, tol=tol)
    _emit(_dumps(_verification_doc(mdp, report)), args.out)
    return EXIT_OK if report.verdict else EXIT_NEGATIVE


def _run_config(args, cfg: dict) -> RunConfig:
    base = DEFAULT_PG_CONFIG if args.mode == "pg" else RunConfig()
    updates = {}
    for key in ("max_iters", "window", "patience"):
        v = _merge(args, cfg, key)
        if v is not None:
            updates[key] = int(v)
    for key in ("eps_conv", "eps_actor", "clip"):
        v = _merge(args, cfg, key)
        if v is not None:
            updates[key] = float(v)
    for key in ("alpha", "beta"):
        v = _merge(args, cfg, key)
        if v is not None:
            updates[key] = _schedule(v, key)
    if args.log_every:
        updates["log_every"] = args.log_every
    try:
        config = replace(base, **updates)
    except TypeError as exc:
        raise InputError(str(exc)) from None
    check_config(config)
    return config


def _run_doc(mdp: FiniteMdp, seed: int, res) -> dict:
    return {
        "seed": seed,
        "converged": res.converged,
        "converged_at": res.converged_at,
        "iterations": res.iterations,
        "clips": res.clips,
        "w_sup": res.w_sup,
        "policy": policy_to_dict(mdp, res.policy)["probs"],
        "w": _table(mdp, res.w),
        "last_window": (
            {"critic_drift": res.history[-1].critic_drift, "actor_stat": res.history[-1].actor_shortfall}
            if res.history else None
        ),
        "verification": _verification_doc(mdp, res.verification),
    }


def cmd_learn(args) -> int:
    cfg = _load_config(args.config)
    for key in ("env", "mdp", "sigma", "gamma"):
        if getattr(args, key) is None and key in cfg:
            setattr(args, key, cfg[key])
    mdp = _mdp(args)
    disc = _discount(args, mdp)
    config = _run_config(args, cfg)
    if args.seed is not None:
        seeds = [args.seed]
    elif args.seeds is not None or "seeds" in cfg:
        raw = args.seeds if args.seeds is not None else cfg["seeds"]
        seeds = [int(s) for s in raw] if isinstance(raw, list) else parse_seeds(raw)
    else:
        raise InputError("learn needs --seed or --seeds (no implicit seeding)")
    jobs = int(_merge(args, cfg, "jobs", 1))
    result = multi_restart(mdp, disc, config, seeds, jobs=jobs, mode=args.mode)
    doc = {
        "mode": args.mode,
        "sigma": disc.sigma,
        "gamma": disc.gamma,
        "config": {
            "alpha": asdict(config.alpha),
            "beta": asdict(config.beta),
            "max_iters": config.max_iters,
            "window": config.window,
            "eps_conv": config.eps_conv,
            "eps_actor": config.eps_actor,
            "patience": config.patience,
        },
        "runs": [_run_doc(mdp, s, r) for s, r in zip(result.seeds, result.runs)],
        "converged": sum(r.converged for r in result.runs),
    }
    if args.mode == "mpe":
        doc["equilibria"] = [
            {"seeds": e.seeds, "policy": policy_to_dict(mdp, e.policy)["probs"], "q": _table(mdp, e.q)}
            for e in result.equilibria
        ]
    _emit(_dumps(doc), _merge(args, cfg, "out"))
    return EXIT_OK if doc["converged"] else EXIT_NEGATIVE


def cmd_field(args) -> int:
    mdp = _mdp(args)
    disc = _discount(args, mdp)
    x_pair = _pair(mdp, args.x, "--x")
    y_pair = _pair(mdp, args.y, "--y")
    base = _floats(args.base, mdp.n_pairs, "--base")
    x0, x1, y0, y1 = _floats(args.range, 4, "--range")
    try:
        spec = di.SliceSpec(x_pair, y_pair, tuple(base), (x0, x1), (y0, y1), args.nx, args.ny or args.nx)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    records = di.field_grid(mdp, disc, spec, args.tie_tol, args.band)
    _emit(di.grid_csv(records, quiver=args.quiver), args.out)
    return EXIT_OK


def cmd_trajectory(args) -> int:
    mdp = _mdp(args)
    disc = _discount(args, mdp)
    w0 = _floats(args.start, mdp.n_pairs, "--start")
    if args.step <= 0 or args.steps < 0:
        raise InputError("--step must be positive and --steps non-negative")
    path = di.integrate_trajectory(mdp, disc, np.array(w0), args.step, args.steps, args.rule, args.tie_tol)
    _emit(di.path_csv(mdp, path), args.out)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cells = reproduce.inventory_q_cells(literal=True) if args.literal and args.target == "tables" else reproduce.TARGETS[args.target]()
    _emit(reproduce.report(cells) + "\n", args.out)
    return EXIT_OK if all(c.ok for c in cells) else EXIT_NEGATIVE


# -- parser -----------------------------------------------------------------

def _add_source(p, discount: bool = True):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--env", choices=sorted(envs.BUILTIN), help="built-in environment (default two-state)")
    g.add_argument("--mdp", help="MDP JSON file")
    if discount:
        p.add_argument("--sigma", type=float)
        p.add_argument("--gamma", type=float)
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qhmpe", description="Equilibria of quasi-hyperbolic MDPs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("env", help="write a built-in MDP as JSON")
    _add_source(e)
    e.set_defaults(func=cmd_env)

    ev = sub.add_parser("eval", help="QH, exponential and advantage tables of a policy")
    _add_source(ev)
    ev.add_argument("--policy", required=True)
    ev.add_argument("--format", choices=("json", "csv"), default="json")
    ev.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="equilibrium check of a policy (exit 0 iff it is one)")
    _add_source(v)
    v.add_argument("--policy", required=True)
    v.add_argument("--tol", type=float, help="absolute tolerance (overrides --rel-tol)")
    v.add_argument("--rel-tol", type=float, default=1e-3, help="tolerance relative to 1 + max|Q| (default 1e-3)")
    v.set_defaults(func=cmd_verify)

    lr = sub.add_parser("learn", help="critic-actor runs over seeds")
    lr.add_argument("mode", choices=("mpe", "pg"))
    _add_source(lr)
    lr.add_argument("--config", help="JSON config; flags override it")
    seeds = lr.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int)
    seeds.add_argument("--seeds", help="e.g. 0..19 or 1,4,9")
    lr.add_argument("--jobs", type=int, help="worker processes (0 = all cores)")
    lr.add_argument("--max-iters", dest="max_iters", type=int)
    lr.add_argument("--window", type=int)
    lr.add_argument("--patience", type=int)
    lr.add_argument("--eps-conv", dest="eps_conv", type=float)
    lr.add_argument("--eps-actor", dest="eps_actor", type=float)
    lr.add_argument("--clip", type=float)
    lr.add_argument("--alpha", help="critic schedule scale,exponent,offset")
    lr.add_argument("--beta", help="actor schedule scale,exponent,offset")
    lr.add_argument("--log-every", dest="log_every", type=int, default=0, help="log every k windows")
    lr.set_defaults(func=cmd_learn)

    f = sub.add_parser("field", help="vector field of the critic dynamics over a 2-D slice")
    _add_source(f)
    f.add_argument("--x", default="1|a1", help="x-axis pair 's|a'")
    f.add_argument("--y", default="1|a2", help="y-axis pair 's|a'")
    f.add_argument("--base", required=True, help="full W vector; the two axis entries are overwritten")
    f.add_argument("--range", default="10,40,10,40", help="x0,x1,y0,y1")
    f.add_argument("--nx", type=int, default=21)
    f.add_argument("--ny", type=int)
    f.add_argument("--tie-tol", dest="tie_tol", type=float, default=di.TIE_TOL)
    f.add_argument("--band", type=float, default=0.0, help="also flag ties within band*max|v|")
    f.add_argument("--quiver", action="store_true", help="whitespace 'x y dx dy' lines")
    f.set_defaults(func=cmd_field)

    t = sub.add_parser("trajectory", help="Euler path of the critic dynamics")
    _add_source(t)
    t.add_argument("--start", required=True, help="initial W, comma-separated")
    t.add_argument("--step", type=float, default=0.1)
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--rule", choices=di.SELECTION_RULES, default="mean")
    t.add_argument("--tie-tol", dest="tie_tol", type=float, help="fixed tie tolerance (default: step band)")
    t.set_defaults(func=cmd_trajectory)

    r = sub.add_parser("reproduce", help="compare against the published values")
    r.add_argument("target", choices=sorted(reproduce.TARGETS))
    r.add_argument("--literal", action="store_true", help="tables: evaluate the printed policies as is")
    r.add_argument("--out")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("QH_MPE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, MdpFormatError, ScheduleError, OSError, ValueError) as exc:
        print(f"qhmpe: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
