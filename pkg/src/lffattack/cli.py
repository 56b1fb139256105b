"""``lff`` command line: gen-data, train, attack, sweep, verify.

Outputs go under ``--out`` (default ``lff-out``)::

    dataset.txt            gen-data
    models/<id>.model      train
    report.csv             attack
    traces/<attack>.log    attack
    sweep-<axis>/...       sweep

Exit codes: 0 success, 1 runtime failure (e.g. training diverged), 2 usage or
configuration error, 3 a budget/box/determinism invariant or verify check failed.
"""

import argparse
import os
import sys

from . import config as config_mod
from . import harness, verify
from .errors import ConfigError, DivergenceError, InvariantViolation
from .oracles import load_model, save_model

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _load_config(args):
    ref = args.config
    try:
        if ref.startswith("@"):
            text = config_mod.bundled(ref[1:])
        else:
            with open(ref, encoding="utf-8") as f:
                text = f.read()
    except (OSError, FileNotFoundError) as exc:
        raise UsageError(f"cannot read config {ref!r}: {exc}") from None
    return config_mod.loads(text, args.seed_override)


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _paths(out):
    return {
        "dataset": os.path.join(out, "dataset.txt"),
        "models": os.path.join(out, "models"),
        "report": os.path.join(out, "report.csv"),
        "traces": os.path.join(out, "traces"),
    }


def _load_dataset(paths):
    if not os.path.exists(paths["dataset"]):
        raise UsageError(f"{paths['dataset']} not found; run gen-data first")
    return harness.load_dataset(paths["dataset"])


def _load_models(cfg, paths):
    trained = {}
    for mid, entry in cfg.models.items():
        if entry.kind == "ensemble":
            continue
        path = os.path.join(paths["models"], f"{mid}.model")
        if not os.path.exists(path):
            raise UsageError(f"{path} not found; run train first")
        trained[mid] = load_model(path)
    return harness.assemble_models(cfg, trained)


def cmd_gen_data(args, cfg, out):
    paths = _paths(args.out)
    ds = harness.generate_dataset(cfg.dataset, (cfg.seed, cfg.dataset_seed))
    _write(paths["dataset"], harness.dumps_dataset(ds, cfg.hash))
    out.write(f"wrote {paths['dataset']}: {len(ds.train_y)} train, {len(ds.test_y)} test, "
              f"N={ds.dim}, K={ds.classes}\n")


def cmd_train(args, cfg, out):
    paths = _paths(args.out)
    ds = _load_dataset(paths)
    os.makedirs(paths["models"], exist_ok=True)
    for mid, result in harness.train_models(cfg, ds).items():
        save_model(result.model, os.path.join(paths["models"], f"{mid}.model"), cfg.hash)
        test_acc = harness.accuracy(result.model, ds.test_x, ds.test_y)
        out.write(f"{mid} kind={result.model.kind} train_acc={result.accuracy!r} "
                  f"test_acc={test_acc!r}\n")


def _check_runs(cfg, runs, surrogate, ds):
    ds = ds.limited(cfg.test_limit)
    for run in runs.values():
        harness.check_budget(run)
        harness.check_determinism(run, surrogate, ds.test_x, ds.test_y, harness.attack_seed(cfg))


def _trace_log(cfg, run):
    lines = [f"# config_sha256={cfg.hash}", f"# attack {run.attack.name}",
             "# example t delta_sha256 linf l2 loss oracle_calls"]
    for e in run.examples:
        lines.extend(e.trace.audit_lines(e.index))
    return "\n".join(lines) + "\n"


def cmd_attack(args, cfg, out):
    paths = _paths(args.out)
    ds = _load_dataset(paths)
    models = _load_models(cfg, paths)
    report, runs = harness.run_experiment(cfg, ds, models, jobs=args.jobs)
    _write(paths["report"], report.to_csv())
    for name, run in runs.items():
        _write(os.path.join(paths["traces"], f"{name}.log"), _trace_log(cfg, run))
    _check_runs(cfg, runs, models[cfg.surrogate], ds)
    out.write(f"wrote {paths['report']}\n")
    for a in report.attacks():
        out.write(f"{a}: mean victim asr={report.mean_victim_asr(a):.4f}\n")


def _parse_values(raw):
    return [v for item in raw for v in item.split(",") if v.strip()]


def cmd_sweep(args, cfg, out):
    paths = _paths(args.out)
    ds = _load_dataset(paths)
    models = _load_models(cfg, paths)
    values = harness.sweep_values(args.axis, _parse_values(args.values))
    result = harness.sweep(cfg, ds, models, args.axis, values, jobs=args.jobs)
    folder = os.path.join(args.out, f"sweep-{args.axis}")
    for v, rep in zip(result.values, result.reports):
        _write(os.path.join(folder, f"report_{args.axis}={v!r}.csv"), rep.to_csv())
    _write(os.path.join(folder, "summary.csv"), result.summary_csv(cfg.hash))
    out.write(f"wrote {folder}/summary.csv\n")
    for a in result.reports[0].attacks():
        best = result.maximizers(a)
        out.write(f"{a}: best {args.axis}={', '.join(repr(b) for b in best)}\n")


def cmd_verify(args, cfg, out):
    failed = 0
    for name, ok, detail in verify.run_all():
        out.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
        failed += not ok
    if failed:
        raise InvariantViolation("verify", f"{failed} check(s) failed")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "attack": cmd_attack,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def _jobs(v):
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("--jobs must be >= 1")
    return n


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="lff-out", help="output directory (default: lff-out)")
    common.add_argument("--jobs", type=_jobs, default=1, help="worker processes for attacks")
    common.add_argument("--seed-override", type=int, default=None,
                        help="replace experiment.seed")
    parser = argparse.ArgumentParser(prog="lff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--config", required=name != "verify",
                       help="config file, or @name for a bundled one (e.g. @default)")
        if name == "sweep":
            p.add_argument("--axis", choices=harness.AXES, required=True)
            p.add_argument("--values", nargs="+", required=True,
                           help="axis values, space or comma separated")
    return parser


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        cfg = _load_config(args) if args.config else None
        COMMANDS[args.command](args, cfg, out)
    except (UsageError, ConfigError) as exc:
        err.write(f"lff {args.command}: {exc}\n")
        return EXIT_USAGE
    except InvariantViolation as exc:
        err.write(f"lff {args.command}: {exc}\n")
        return EXIT_INVARIANT
    except (DivergenceError, ValueError, OSError) as exc:
        err.write(f"lff {args.command}: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
