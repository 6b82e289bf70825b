"""Command-line entry point: ``fiml <subcommand> [--config FILE]``.

Each invocation writes a fresh run directory
``<output_dir>/<timestamp>-<label>-<subcommand>`` holding CSV/JSON artifacts,
the resolved ``config.toml`` and a ``command.json`` with the input arguments.
Wall-clock figures go to ``timing.json``, the only non-reproducible file.
"""
import argparse
import sys
import time
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__, io
from . import augment as aug
from . import inversion as inv
from . import nn
from . import pipeline as pl
from .channel import (
    bulk_velocity,
    grid_for,
    pressure_gradient_parameter,
    skin_friction,
    solve_forward,
    wall_shear_stress,
)
from .config import RunConfig
from .errors import ConfigurationError, FimlError
from .inversion import Observation

SUBCOMMANDS = ("forward", "invert", "gradcheck", "twin", "train", "predict", "ensemble", "study-objectives")


def make_run_dir(cfg: RunConfig, sub: str, root=None) -> Path:
    root = Path(root if root is not None else cfg.run.output_dir)
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    base = root / f"{stamp}-{cfg.run.label}-{sub}"
    path, k = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}-{k}")
        k += 1
    path.mkdir(parents=True)
    return path


def _truth_from_args(args, case, grid):
    out = []
    if getattr(args, "truth_profile", None):
        ds = io.ingest_profile(args.truth_profile, args.units, case)
        if ds.y[0] < grid.y[0] or ds.y[-1] > grid.y[-1]:
            raise ConfigurationError("truth profile extends outside the computational grid")
        out.append(Observation.velocity_profile(ds.y, ds.u, rel_sigma=args.rel_sigma))
    if getattr(args, "truth_cf", None) is not None:
        out.append(Observation.scalar_cf(args.truth_cf, rel_sigma=args.rel_sigma))
    return out


def _forward_summary(res, grid, case):
    st = res.state
    return dict(
        iterations=res.iterations,
        converged_at=res.converged_at,
        cf=skin_friction(st, grid, case),
        tau_wall=wall_shear_stress(st, grid, case),
        bulk_velocity=bulk_velocity(st, grid),
        pressure_gradient_parameter=pressure_gradient_parameter(st, grid, case),
        final_residual=dict(momentum=res.history[-1][1], sa=res.history[-1][2]),
    )


def _opt_history(path, history):
    keys = ("iteration", "f", "gnorm", "step", "nfev", "misfit", "reg")
    io.write_csv(path, keys, ([h.get(k, float("nan")) for k in keys] for h in history))


# ---------------------------------------------------------------------------
# subcommands; each returns (exit code, summary dict, timing dict)


def cmd_forward(cfg: RunConfig, args, out: Path):
    case = cfg.case_config()
    grid = grid_for(case)
    res = solve_forward(np.ones(grid.n), case, grid)
    io.write_state(out / "state.csv", res.state, grid, case)
    io.write_history(out / "history.csv", res.history)
    return 0, _forward_summary(res, grid, case)


def cmd_invert(cfg: RunConfig, args, out: Path):
    case = cfg.case_config()
    grid = grid_for(case)
    truth = _truth_from_args(args, case, grid)
    if len(truth) != 1:
        raise ConfigurationError("invert needs exactly one of --truth-profile or --truth-cf")
    res = inv.minimize(truth[0], case, cfg.inversion_config(), grid)
    io.write_beta(out / "beta.csv", grid, res.beta)
    io.write_state(out / "state.csv", res.state, grid, case, res.beta)
    _opt_history(out / "optimizer_history.csv", res.history)
    names = tuple(cfg.train.features)
    X, y = pl.samples_from_state(res.state, res.beta, grid, case, names)
    ts = nn.TrainingSet.from_samples(X, y, names, np.full(y.size, cfg.run.label), cfg.train.val_fraction,
                                     cfg.train.split_seed)
    io.write_training_set(out / "training_set.csv", ts)
    return 0, dict(
        kind=truth[0].kind, iterations=res.iterations, status=res.status, value=res.value,
        misfit=res.misfit, reg=res.reg, initial_misfit=res.initial_misfit,
        misfit_reduction=res.misfit_reduction, cf=skin_friction(res.state, grid, case),
    )


def cmd_gradcheck(cfg: RunConfig, args, out: Path):
    gc = cfg.gradcheck
    case = cfg.case_config(re_tau=gc.re_tau, n=gc.n)
    grid = grid_for(case)
    truth = solve_forward(cfg.family()(grid, case), case, grid).state
    reports = {}
    worst = 0.0
    for kind in gc.kinds:
        obs = inv.synthetic_observation(kind, truth, grid, case, cfg.inversion.rel_sigma)
        rep = inv.gradcheck(obs, case, cfg.inversion_config(), grid, n_nodes=gc.nodes, step=gc.step, seed=gc.seed)
        io.write_gradcheck(out / f"gradcheck-{kind}.csv", rep)
        reports[kind] = dict(max_rel_err=rep.max_rel_err, nodes=rep.nodes)
        worst = max(worst, rep.max_rel_err)
    ok = worst < gc.threshold
    return (0 if ok else 1), dict(max_rel_err=worst, threshold=gc.threshold, passed=ok, kinds=reports)


def _twin_rows(grid, rep):
    return zip(grid.y, rep.beta_true, rep.beta_opt, rep.state_true.u, rep.state_opt.u, rep.sensitive)


def cmd_twin(cfg: RunConfig, args, out: Path):
    case = cfg.case_config()
    grid = grid_for(case)
    kind = cfg.inversion.observation
    rep = inv.twin_experiment(cfg.family()(grid, case), kind, case, cfg.inversion_config(), grid,
                              cfg.inversion.rel_sigma)
    io.write_csv(out / "twin.csv", ("y", "beta_true", "beta_opt", "u_true", "u_opt", "sensitive"), _twin_rows(grid, rep))
    io.write_beta(out / "beta.csv", grid, rep.beta_opt)
    io.write_state(out / "state.csv", rep.state_opt, grid, case, rep.beta_opt)
    _opt_history(out / "optimizer_history.csv", rep.inversion.history)
    run = pl.TwinRun(pl.case_label(case.re_tau, kind), case, grid, rep)
    ts = pl.training_set([run], tuple(cfg.train.features), cfg.train.val_fraction, cfg.train.split_seed)
    io.write_training_set(out / "training_set.csv", ts)
    return 0, rep.summary()


def _load_training_sets(paths, names, cfg):
    Xs, ys, cs = [], [], []
    for p in paths:
        p = Path(p)
        f = p / "training_set.csv" if p.is_dir() else p
        X, y, cols, cases = io.read_training_set(f)
        missing = [n for n in names if n not in cols]
        if missing:
            raise ConfigurationError(f"{f}: training set lacks features {missing}")
        Xs.append(X[:, [cols.index(n) for n in names]])
        ys.append(y)
        cs.append(cases)
    return nn.TrainingSet.from_samples(np.vstack(Xs), np.concatenate(ys), names, np.concatenate(cs),
                                       cfg.train.val_fraction, cfg.train.split_seed)


def _twin_training_set(cfg, re_taus):
    twins = pl.run_twins(re_taus, cfg.case_config(), cfg.inversion_config(), cfg.family(), cfg.inversion.observation,
                         cfg.inversion.rel_sigma)
    return pl.training_set(twins, tuple(cfg.train.features), cfg.train.val_fraction, cfg.train.split_seed)


def cmd_train(cfg: RunConfig, args, out: Path):
    names = tuple(cfg.train.features)
    if args.inputs:
        ts = _load_training_sets(args.inputs, names, cfg)
    else:
        ts = _twin_training_set(cfg, cfg.train.re_tau)
    io.write_training_set(out / "training_set.csv", ts)
    t0 = time.perf_counter()
    res = nn.train(ts, cfg.train_config())
    seconds = time.perf_counter() - t0
    nn.save(res.network, out / "network.json")
    io.write_csv(out / "loss_history.csv", ("epoch", "train_sse", "validation_sse"), res.history)
    summary = dict(
        samples=int(ts.y.size), cases=sorted(set(ts.cases.tolist())), epochs=len(res.history),
        best_epoch=res.best_epoch, validation_sse=res.best_val_sse, validation_rms=nn.validation_rms(res, ts),
        features=list(res.network.features),
    )
    return 0, summary, dict(train_seconds=seconds)


def _predict_case(cfg):
    case = cfg.case_config(re_tau=cfg.predict.re_tau)
    return case, grid_for(case)


def _predict_truth(cfg, args, case, grid):
    truth = _truth_from_args(args, case, grid)
    if truth:
        return truth, "external"
    return pl.truth_observations(case, cfg.family()(grid, case), grid, rel_sigma=cfg.inversion.rel_sigma), "twin"


def cmd_predict(cfg: RunConfig, args, out: Path):
    net = nn.load(args.network)
    case, grid = _predict_case(cfg)
    truth, source = _predict_truth(cfg, args, case, grid)
    opts = cfg.augment_config()
    cmp = aug.compare_with_baseline(net, case, truth, grid, opts)
    run = aug.solve_augmented(net, case, grid, opts)
    base = solve_forward(np.ones(grid.n), case, grid)
    io.write_state(out / "state.csv", run.state, grid, case, run.beta)
    io.write_state(out / "baseline_state.csv", base.state, grid, case)
    io.write_history(out / "history.csv", run.history)
    summary = cmp.summary()
    per_query = summary.pop("nn_seconds_per_query")
    summary.update(truth_source=source, nn_queries=run.nn_queries, re_tau=case.re_tau)
    return 0, summary, dict(nn_seconds_per_query=per_query, nn_seconds_total=run.nn_seconds)


def cmd_ensemble(cfg: RunConfig, args, out: Path):
    case, grid = _predict_case(cfg)
    if args.networks:
        nets = [nn.load(p) for p in args.networks]
        subsets = None
    else:
        ts = _twin_training_set(cfg, cfg.ensemble.pool_re_tau)
        labels = sorted(set(ts.cases.tolist()))
        subsets = pl.leave_one_out(labels)
        nets = pl.train_subsets(ts, subsets, cfg.train_config())
        for i, net in enumerate(nets):
            nn.save(net, out / f"network-{i}.json")
    truth, source = _predict_truth(cfg, args, case, grid)
    rep = aug.ensemble_predict(nets, case, truth, grid, cfg.augment_config())
    io.write_csv(out / "envelope.csv", ("y", "u_min", "u_max", "u_mean"), zip(rep.y, rep.u_min, rep.u_max, rep.u_mean))
    summary = rep.summary()
    summary.update(
        truth_source=source, subsets=subsets,
        all_members_at_or_below_baseline=all(m <= rep.misfit_baseline for m in rep.misfits),
    )
    return 0, summary


def cmd_study(cfg: RunConfig, args, out: Path):
    case = cfg.case_config()
    grid = grid_for(case)
    rep = inv.objective_equivalence_study(cfg.family()(grid, case), case, cfg.inversion_config(), grid)
    rows = zip(grid.y, rep.scalar.beta_true, rep.scalar.beta_opt, rep.profile.beta_opt, rep.scalar.state_true.u,
               rep.scalar.state_opt.u, rep.profile.state_opt.u)
    io.write_csv(out / "comparison.csv",
                 ("y", "beta_true", "beta_scalar", "beta_profile", "u_true", "u_scalar", "u_profile"), rows)
    return 0, rep.summary()


COMMANDS = {
    "forward": cmd_forward,
    "invert": cmd_invert,
    "gradcheck": cmd_gradcheck,
    "twin": cmd_twin,
    "train": cmd_train,
    "predict": cmd_predict,
    "ensemble": cmd_ensemble,
    "study-objectives": cmd_study,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fiml", description="SA field inversion and learned augmentation for channel flow")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", "-c", help="TOML run configuration (defaults if omitted)")
        sp.add_argument("--output-dir", help="override [run].output_dir")
        sp.add_argument("--label", help="override [run].label")
        return sp

    def truth_args(sp):
        sp.add_argument("--truth-profile", help="CSV velocity profile")
        sp.add_argument("--units", choices=("physical", "plus"), default="physical")
        sp.add_argument("--truth-cf", type=float, help="skin-friction coefficient")
        sp.add_argument("--rel-sigma", type=float, default=inv.DEFAULT_REL_SIGMA,
                        help="relative observational uncertainty setting the data weights")

    add("forward", "baseline solve")
    truth_args(add("invert", "field inversion against truth data"))
    add("gradcheck", "adjoint versus finite-difference gradient report")
    add("twin", "twin experiment with the configured bump")
    sp = add("train", "train a network on pooled inversion outputs")
    sp.add_argument("--inputs", nargs="*", help="run directories or training-set CSVs (default: run twins)")
    sp = add("predict", "augmented solve compared with baseline")
    sp.add_argument("--network", required=True)
    truth_args(sp)
    sp = add("ensemble", "augmented solves for several networks")
    sp.add_argument("--networks", nargs="*", help="network files (default: train leave-one-out subsets)")
    truth_args(sp)
    add("study-objectives", "scalar versus profile objective comparison")
    return p


def _command_record(args) -> dict:
    keep = {k: v for k, v in vars(args).items() if k not in ("config", "output_dir", "label")}
    return keep


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.label:
            cfg = cfg.with_label(args.label)
        out = make_run_dir(cfg, args.command, args.output_dir)
        cfg.save(out / "config.toml")
        io.write_json(out / "command.json", _command_record(args))
        t0 = time.perf_counter()
        result = COMMANDS[args.command](cfg, args, out)
        code, summary = result[0], result[1]
        timing = dict(result[2]) if len(result) > 2 else {}
        timing["wall_seconds"] = time.perf_counter() - t0
        io.write_json(out / "summary.json", summary)
        io.write_json(out / "timing.json", timing)
    except FimlError as exc:
        print(f"fiml {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fiml {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(out)
    if code:
        print(f"fiml {args.command}: check failed, see {out / 'summary.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
