"""Command line entry point: ``python -m tangle_fluid <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import equilibrium, fluid, harness, oracle, sim
from .errors import TangleError
from .params import load_config
from .svg import line_chart


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _float_list(value: str) -> list[float]:
    try:
        return [float(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {value!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tangle-fluid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="key = value config file")
        p.add_argument("--output-dir", help="overrides output_dir from the config")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--svg", type=_on_off, default=False, metavar="on|off")

    p = sub.add_parser("simulate", help="one simulation run: series.csv, wgrid.csv")
    common(p)

    p = sub.add_parser("fluid", help="integrate the fluid limit: fluid.csv, fluid_wgrid.csv")
    common(p)
    p.add_argument("--source", choices=("sim", "constants", "equilibrium"), default="sim")
    p.add_argument("--f0", type=float)
    p.add_argument("--l0", type=float)
    p.add_argument("--delta", type=float, default=0.0, help="relative perturbation for --source equilibrium")
    p.add_argument("--dt", type=float)

    p = sub.add_parser("equilibrium", help="stationary point: equilibrium_wgrid.csv")
    common(p)
    p.add_argument("--dt", type=float)

    p = sub.add_parser("oracle", help="exact one-tick expectations for a tiny instance (CSV on stdout)")
    p.add_argument("instance", help="instance file")

    p = sub.add_parser("compare", help="replicas of simulation vs fluid: report.csv")
    common(p)
    p.add_argument("--replicas", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("study", help="lambda-scaling study: study.csv")
    common(p)
    p.add_argument("--lambdas", type=_float_list, default=[100.0, 200.0, 400.0])
    p.add_argument("--replicas", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--workers", type=int, default=1)
    return parser


def _setup(args):
    cfg = load_config(args.config)
    params = cfg.params if args.seed is None else cfg.params.replace(seed=args.seed)
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, params, out


def _sim_init(cfg, params):
    if cfg.init_mode == "equilibrium":
        l_star = equilibrium.equilibrium_general(params).l_star
        return sim.constant_history(params, l_star)
    return sim.Warmup(cfg.warmup_ticks)


def cmd_simulate(args):
    cfg, params, out = _setup(args)
    traj = sim.run(params, params.seed, _sim_init(cfg, params))
    sim.write_series_csv(traj, out / "series.csv")
    sim.write_wgrid_csv(traj, out / "wgrid.csv")
    if args.svg:
        c = traj.counts()
        line_chart([("L/lambda", c["tick"] * params.epsilon, c["L"] / params.lam),
                    ("F/lambda", c["tick"] * params.epsilon, c["F"] / params.lam)],
                   out / "series.svg", title="simulation", ylabel="scaled count")
    print(f"wrote {out / 'series.csv'} and {out / 'wgrid.csv'} ({params.n_T} ticks)")
    return 0


def cmd_fluid(args):
    cfg, params, out = _setup(args)
    if args.source == "constants":
        if args.f0 is None or args.l0 is None:
            print("error: UsageError: --source constants needs --f0 and --l0", file=sys.stderr)
            return 2
        source = fluid.Constants(args.f0, args.l0)
    elif args.source == "equilibrium":
        source = fluid.EquilibriumPerturbed(args.delta)
    else:
        source = fluid.FromSim(sim.run(params, params.seed, _sim_init(cfg, params)))
    series = fluid.integrate(params, params.horizon, source, dt=args.dt)
    fluid.write_fluid_csv(series, out / "fluid.csv")
    fluid.write_fluid_wgrid_csv(series, out / "fluid_wgrid.csv")
    diag = fluid.diagnostics(series)
    print(f"dt={series.dt:g} steps={series.steps}")
    print(f"xi_hat={diag.xi_hat:.6g} gamma_hat={diag.gamma_hat:.6g} "
          f"m_hat={diag.m_hat:.6g} w_residual={diag.w_residual:.3g}")
    if args.svg:
        lines = [("l", series.t, series.l), ("f", series.t, series.f)]
        if isinstance(source, fluid.FromSim):
            c = source.trajectory.counts()
            lines.insert(0, ("L/lambda", c["tick"] * params.epsilon, c["L"] / params.lam))
        line_chart(lines, out / "fluid.svg", title="fluid limit", ylabel="scaled count")
    return 0


def cmd_equilibrium(args):
    cfg, params, out = _setup(args)
    res = equilibrium.equilibrium_general(params, dt=args.dt)
    print(f"l_star={res.l_star!r}")
    print(f"f_star={res.f_star!r}")
    print(f"residual={res.residual:.3g}")
    if params.num_types == 2:
        m2 = equilibrium.equilibrium_m2(params, dt=args.dt)
        print(f"m2_l_star={m2.l_star!r} m2_residual={m2.residual:.3g} "
              f"w1_boundary_gap={m2.notes['w1_boundary_gap']:.6g}")
    with open(out / "equilibrium_wgrid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["type", "u", "w_i"])
        for i, (grid, prof) in enumerate(zip(res.u_grid, res.profiles)):
            for u, v in zip(grid, prof):
                w.writerow([i + 1, repr(float(u)), repr(float(v))])
    if args.svg:
        line_chart([(f"w_{i + 1}", g, pr) for i, (g, pr) in enumerate(zip(res.u_grid, res.profiles))],
                   out / "equilibrium.svg", title="stationary profiles", xlabel="u", ylabel="w_i")
    return 0


def cmd_oracle(args):
    inst = oracle.load_instance(args.instance)
    exact = oracle.enumerate_expectations(inst)
    lead = oracle.leading_order_expectations(inst)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["quantity", "i", "j", "u", "exact", "exact_float", "leading_order"])
    for row, lrow in zip(exact.as_rows(), lead.as_rows()):
        q, i, j, u, v = row
        w.writerow([q, i, j, u, str(v), repr(float(v)), repr(float(lrow[4]))])
    return 0


def cmd_compare(args):
    cfg, params, out = _setup(args)
    replicas = args.replicas or cfg.replicas
    init = _sim_init(cfg, params)
    report = harness.compare(params, replicas, args.delta, init=init, workers=args.workers)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica", "seed", "gT", "comp_F", "comp_L", "comp_W"])
        for r in report.replicas:
            w.writerow([r.index, r.seed, repr(r.gT), repr(r.comp_F), repr(r.comp_L), repr(r.comp_W)])
    for r in report.failures:
        print(f"replica {r.index} failed: {r.error}", file=sys.stderr)
    iqr = f"{report.iqr_gT:.6g}" if report.iqr_defined else "undefined"
    print(f"replicas={replicas} median_gT={report.median_gT:.6g} iqr_gT={iqr}")
    if report.tail is not None:
        t = report.tail
        print(f"P(gT > {t.delta:g}) = {t.p_hat:.4g} [{t.low:.4g}, {t.high:.4g}] ({t.exceed}/{t.total})")
    if args.svg:
        traj = sim.run(params, report.replicas[0].seed, init)
        series = fluid.integrate(params, params.horizon, fluid.FromSim(traj), dt=params.epsilon)
        c = traj.counts()
        line_chart([("L/lambda", c["tick"] * params.epsilon, c["L"] / params.lam),
                    ("l", series.t, series.l)],
                   out / "compare.svg", title="replica 0: simulation vs fluid", ylabel="tips / lambda")
    return 0


def cmd_study(args):
    cfg, params, out = _setup(args)
    replicas = args.replicas or cfg.replicas
    study = harness.convergence_study(params, args.lambdas, replicas, args.delta, workers=args.workers)
    for note in study.adjustments:
        print(note)
    with open(out / "study.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "N", "epsilon", "median_gT", "iqr_gT"])
        for row in study.rows:
            rep = row.report
            w.writerow([repr(row.lam), row.params.batch_size, repr(row.params.epsilon),
                        repr(rep.median_gT), repr(rep.iqr_gT) if rep.iqr_defined else "nan"])
    if replicas < 2:
        print("iqr undefined with a single replica")
    verdict = "strictly decreasing" if study.strictly_decreasing else "NOT strictly decreasing"
    print(f"median g(T) by lambda: {verdict}")
    if args.svg:
        line_chart([("median g(T)", [r.lam for r in study.rows], study.medians)],
                   out / "study.svg", title="convergence in lambda", xlabel="lambda", ylabel="g(T)")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fluid": cmd_fluid,
    "equilibrium": cmd_equilibrium,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "study": cmd_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (TangleError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
