"""Command-line front end.

    rankreward COMMAND --config FILE [--set section.key=value ...] [--out DIR]

Commands: equilibrium, analytic, optimize, simulate, invariance, hjb-check.
Exit status: 0 success, 2 invalid input, 3 numerical non-convergence,
64 usage error. ``RANKREWARD_THREADS`` caps the BLAS thread pool.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import StabilityError
from .model import ClusterParams, CostProfile, MarketParams, check_portfolio

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_USAGE = 0, 2, 3, 64
COMMANDS = ("equilibrium", "analytic", "optimize", "simulate", "invariance", "hjb-check")

DEFAULTS = {
    "market": {"T": 3.0, "p": 0.17, "c_r": 0.15,
               "savings": {"alpha2": -0.1, "alpha1": 0.0, "alpha0": 0.0}},
    "clusters": [],
    "optimizer": {"M": 60.0, "N": 20, "lambda": 1000.0, "sigma0": 0.05, "budget": 20000,
                  "seed": 0},
    "grids": {"n_rank": 2001, "n_x": 4001, "padding": 0.0},
    "reward": {"kind": "constant", "value": 0.0},
    "simulation": {"n_agents": 1000, "n_display": 20, "n_steps": 300, "seed": 0},
    "invariance": {"C": [-0.05, 0.0, 0.0], "damping": 0.5, "eps": 1e-10, "n_max": 2000},
    "hjb": {"n_x": 801, "profile": {"c0": 5.5, "slope": -1.5}, "damping": 0.5,
            "eps": 1e-4, "n_max": 200},
    "output": "out",
}


class ConfigError(ValueError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class NonConvergence(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(cfg: dict, assignment: str):
    """Apply ``section.key=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError([f"--set expects section.key=value, got {assignment!r}"])
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def load_config(path, overrides=()) -> dict:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"])
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"])
    cfg = _merge(DEFAULTS, user)
    for item in overrides:
        apply_override(cfg, item)
    return cfg


def build_model(cfg: dict):
    """Validate the config and build (clusters, market); lists every problem found."""
    problems = []
    mk = cfg.get("market", {})
    sav = mk.get("savings", {})
    market = None
    try:
        market = MarketParams(T=float(mk["T"]), p=float(mk["p"]), c_r=float(mk["c_r"]),
                              alpha2=float(sav.get("alpha2", 0.0)),
                              alpha1=float(sav.get("alpha1", 0.0)),
                              alpha0=float(sav.get("alpha0", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"market: {exc!s}")
    clusters = []
    if not cfg.get("clusters"):
        problems.append("clusters: at least one cluster is required")
    for i, c in enumerate(cfg.get("clusters", [])):
        try:
            if "cost_profile" in c:
                prof = c["cost_profile"]
                cost = CostProfile.linear(float(prof["c0"]), float(prof["slope"]), market.T)
                cost.check(market.T)
            else:
                cost = float(c["c"])
            clusters.append(ClusterParams(float(c["x_nom"]), float(c["sigma"]), cost,
                                          float(c.get("rho", 1.0)), c.get("name", f"cluster {i}")))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            problems.append(f"clusters[{i}]: {exc!s}")
    if clusters and not problems:
        try:
            check_portfolio(clusters)
        except ValueError as exc:
            problems.append(f"clusters: {exc}")
    opt = cfg.get("optimizer", {})
    if not float(opt.get("M", 1)) > 0:
        problems.append("optimizer.M: must be positive")
    if int(opt.get("N", 2)) < 2:
        problems.append("optimizer.N: at least two knots are required")
    if float(opt.get("lambda", 0)) < 0:
        problems.append("optimizer.lambda: must be non-negative")
    if int(cfg.get("grids", {}).get("n_rank", 2)) < 2:
        problems.append("grids.n_rank: at least two ranks are required")
    if problems:
        raise ConfigError(problems)
    return clusters, market


# ---------------------------------------------------------------- helpers

def _ranks(cfg):
    from .numerics import rank_grid
    return rank_grid(int(cfg["grids"]["n_rank"]))


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serialisable: {type(v)}")


def _optimize(cfg, clusters, market):
    from .principal import OptimizeConfig, optimize_reward
    o = cfg["optimizer"]
    conf = OptimizeConfig(M=float(o["M"]), N=int(o["N"]), lam=float(o["lambda"]),
                          sigma0=float(o["sigma0"]), budget=int(o["budget"]), seed=int(o["seed"]))
    return optimize_reward(clusters, market, conf, _ranks(cfg))


def _reward(cfg, clusters, market, base: Path):
    """Ranked reward from the ``reward`` section."""
    from .principal import analytic_optimum
    from .rewards import PiecewiseReward
    r = cfg["reward"]
    kind = r.get("kind", "constant")
    if kind == "constant":
        return PiecewiseReward.constant(float(r.get("value", 0.0)))
    if kind == "csv":
        path = Path(r["path"])
        return PiecewiseReward.from_csv(path if path.is_absolute() else base / path)
    if kind == "analytic":
        if len(clusters) != 1:
            raise ConfigError(["reward.kind=analytic needs exactly one cluster"])
        A = analytic_optimum(clusters[0], market, M=float(cfg["optimizer"]["M"]))
        if A.B_star is None:
            raise ConfigError(["analytic optimum is increasing in rank (reduction desire >= 0)"])
        return A.B_star
    if kind == "optimize":
        return _optimize(cfg, clusters, market).reward
    raise ConfigError([f"reward.kind: unknown kind {kind!r}"])


def _ranked_payoff(B, cl, T, p):
    """``x -> B(F(x)) - p x`` at the closed-form equilibrium of ``B``."""
    from .mfg import equilibrium_closed_form
    eq = equilibrium_closed_form(B, p, cl, T)
    xs, F = eq.density.points, eq.density.cdf()
    return (lambda y: B(np.interp(y, xs, F)) - p * np.asarray(y)), eq


# --------------------------------------------------------------- commands

def cmd_equilibrium(cfg, clusters, market, out: Path, base: Path):
    from .mfg import equilibrium_closed_form, price_incentive, write_equilibrium_csv
    B = _reward(cfg, clusters, market, base)
    ranks = _ranks(cfg)
    write_equilibrium_csv(out / "equilibrium.csv", B, clusters, market.p, market.T, ranks)
    B.to_csv(out / "reward.csv")
    report = []
    for k, cl in enumerate(clusters):
        eq = equilibrium_closed_form(B, market.p, cl, market.T, ranks)
        x_pi, V_pi = price_incentive(cl, market.p, market.T)
        report.append({"cluster": k, "name": cl.name, "mean": eq.mean,
                       "consumer_value": eq.consumer_value, "x_pi": x_pi, "V_pi": V_pi})
    _write_json(out / "equilibrium.json", {"clusters": report})


def cmd_analytic(cfg, clusters, market, out: Path, base: Path):
    from .principal import analytic_optimum, quadratic_mean_closed_form
    if len(clusters) != 1:
        raise ConfigError(["analytic: the closed form needs exactly one cluster"])
    cl = clusters[0].with_rho(1.0)
    A = analytic_optimum(cl, market, M=float(cfg["optimizer"]["M"]))
    rep = {"m_star": A.m_star, "delta": A.delta, "pi_star": A.pi_star, "x_pi": A.x_pi,
           "decreasing": A.decreasing, "residual": A.residual,
           "B_star_at_half": float(np.interp(0.5, A.ranks, A.values))}
    if market.quadratic:
        rep["m_star_quadratic_formula"] = quadratic_mean_closed_form(
            market.alpha2, market.alpha1, cl, market)
    _write_json(out / "analytic.json", rep)
    if A.B_star is not None:
        A.B_star.to_csv(out / "B_star.csv")


def cmd_optimize(cfg, clusters, market, out: Path, base: Path):
    from .cmaes import write_trace_csv
    res = _optimize(cfg, clusters, market)
    res.reward.to_csv(out / "reward.csv")
    write_trace_csv(out / "trace.csv", res.trace)
    rep = json.loads(res.report.to_json())
    rep.update(evaluations=res.evaluations, initial_pi_lambda=res.initial_pi_lambda,
               feasibility_shift=res.shift)
    _write_json(out / "report.json", rep)


def cmd_simulate(cfg, clusters, market, out: Path, base: Path):
    from .sim import feedback_control, simulate_population, write_trajectories_csv
    s = cfg["simulation"]
    T, p, n_steps = market.T, market.p, int(s["n_steps"])
    B = _reward(cfg, clusters, market, base)
    ctl_pi, ctl_opt = [], []
    for cl in clusters:
        ctl_pi.append(feedback_control(lambda y: -p * np.asarray(y), cl, T, n_steps, p=p))
        payoff, _ = _ranked_payoff(B, cl, T, p)
        ctl_opt.append(feedback_control(payoff, cl, T, n_steps, p=p))
    controls = {"baseline": [None] * len(clusters), "price_incentive": ctl_pi,
                "optimal": ctl_opt}
    seed = int(s["seed"])
    shown = simulate_population(clusters, int(s["n_display"]), controls, T, n_steps, seed,
                                store_paths=True)
    write_trajectories_csv(out / "trajectories.csv", list(shown.values()))
    many = simulate_population(clusters, int(s["n_agents"]), controls, T, n_steps, seed)
    summary = {}
    for name, b in many.items():
        summary[name] = {"exits": b.exits, "noise_digest": b.noise_digest, "clusters": [
            {"cluster": k, "terminal_mean": float(b.cluster(k).mean()),
             "terminal_sd": float(b.cluster(k).std()),
             "mean_effort_cost": float(b.effort_cost[b.labels == k].mean())}
            for k in range(len(clusters))]}
    B.to_csv(out / "reward.csv")
    _write_json(out / "simulation.json", summary)


def cmd_invariance(cfg, clusters, market, out: Path, base: Path):
    from .mfg import consumption_grid, fixed_point_solve
    from .numerics import wasserstein1_density
    from .principal import invariance_transforms
    from .rewards import GeneralReward
    inv = cfg["invariance"]
    c2, c1, c0 = (float(v) for v in inv["C"])
    B = _reward(cfg, clusters, market, base)
    T, p = market.T, market.p
    report = []
    for k, cl in enumerate(clusters):
        R = GeneralReward(lambda x, r: B(r) + c2 * x * x + c1 * x + c0 - p * x,
                          purely_ranked=False)
        x = consumption_grid(cl, T, p, n=int(cfg["grids"]["n_x"]), pad_low=2.0, pad_high=2.0)
        fp = fixed_point_solve(R, cl, T, damping=float(inv["damping"]), eps=float(inv["eps"]),
                               n_max=int(inv["n_max"]), x=x)
        if not fp.converged:
            raise NonConvergence(f"cluster {k}: fixed point of the joint reward did not converge")
        res = invariance_transforms(R, fp.density, cl, market)
        R_B = GeneralReward.from_piecewise(res.B_hat, 0.0)
        eq_B = fixed_point_solve(R_B, cl, T, damping=float(inv["damping"]), eps=float(inv["eps"]),
                                 n_max=int(inv["n_max"]), mu0=fp.density)
        eq_R = fixed_point_solve(res.R_hat, cl, T, damping=float(inv["damping"]),
                                 eps=float(inv["eps"]), n_max=int(inv["n_max"]), mu0=fp.density)
        res.B_hat.to_csv(out / f"B_hat_{k}.csv")
        np.savetxt(out / f"R_hat_{k}.csv", np.column_stack((res.x, res.R_hat_values)),
                   delimiter=",", header="x,value", comments="", fmt="%.17g")
        report.append({"cluster": k, "cost_original": res.cost_original,
                       "cost_ranked": res.cost_ranked,
                       "w1_ranked_equilibrium": wasserstein1_density(eq_B.density, fp.density),
                       "w1_consumption_equilibrium": wasserstein1_density(eq_R.density, fp.density),
                       "equilibrium_mean": fp.density.mean()})
    _write_json(out / "invariance.json", {"clusters": report})


def cmd_hjb_check(cfg, clusters, market, out: Path, base: Path):
    from .hjb import default_grid, solve_best_response_timedep, timedep_fixed_point
    from .mfg import equilibrium_closed_form
    from .numerics import wasserstein1_density
    h = cfg["hjb"]
    T, p = market.T, market.p
    B = _reward(cfg, clusters, market, base)
    report = []
    for k, cl in enumerate(clusters):
        const = ClusterParams(cl.x_nom, cl.sigma, cl.cost if cl.constant_cost
                              else cl.profile().c_lo, 1.0, cl.name)
        payoff, eq = _ranked_payoff(B, const, T, p)
        grid = default_grid(const, T, p, n_x=int(h["n_x"]), payoff=payoff)
        res = solve_best_response_timedep(payoff, const.profile(), const, T, grid)
        ref = equilibrium_closed_form(B, p, const, T, x=grid.x).density
        w1 = wasserstein1_density(res.density, ref)
        prof = h["profile"]
        profile = CostProfile.linear(float(prof["c0"]), float(prof["slope"]), T)
        timedep = ClusterParams(cl.x_nom, cl.sigma, profile, 1.0, cl.name)
        fp = timedep_fixed_point(B, timedep, T, p, profile, damping=float(h["damping"]),
                                 eps=float(h["eps"]), n_max=int(h["n_max"]), n_x=int(h["n_x"]))
        if not fp.converged:
            raise NonConvergence(f"cluster {k}: time-dependent fixed point did not converge")
        F = fp.density.cdf()
        xs = fp.density.points
        final_payoff = lambda y: B(np.interp(y, xs, F)) - p * np.asarray(y)  # noqa: E731
        tgrid = default_grid(timedep, T, p, n_x=int(h["n_x"]), payoff=final_payoff)
        final = solve_best_response_timedep(final_payoff, profile, timedep, T, tgrid)
        final.control.to_csv(out / f"control_{k}.csv", every=max(1, tgrid.n_t // 100))
        report.append({"cluster": k, "constant_cost_w1": w1,
                       "constant_cost_value": res.value_at_origin,
                       "closed_form_value": eq.consumer_value,
                       "timedep_iterations": fp.iterations,
                       "timedep_last_gap": fp.trace[-1], "timedep_mean": fp.density.mean(),
                       "timedep_value": final.value_at_origin})
    _write_json(out / "hjb_check.json", {"clusters": report})


HANDLERS = {"equilibrium": cmd_equilibrium, "analytic": cmd_analytic, "optimize": cmd_optimize,
            "simulate": cmd_simulate, "invariance": cmd_invariance, "hjb-check": cmd_hjb_check}


def _limit_threads():
    n = os.environ.get("RANKREWARD_THREADS")
    if not n:
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    threadpool_limits(int(n))


def main(argv=None) -> int:
    parser = _Parser(prog="rankreward", description="Rank-based reward design experiments.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config entry (repeatable)")
    parser.add_argument("--out", help="output directory (overrides the config)")
    args = parser.parse_args(argv)
    _limit_threads()
    try:
        cfg = load_config(args.config, args.set)
        clusters, market = build_model(cfg)
        out = Path(args.out or cfg["output"])
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, clusters, market, out, Path(args.config).resolve().parent)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for item in exc.problems:
            print(f"  - {item}", file=sys.stderr)
        return EXIT_INVALID
    except (NonConvergence, StabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
