"""Command-line experiment runner.

Subcommands mirror the experiments: ``rs-coding``, ``ers-coding``,
``matching``, ``wz``, ``grs-example``, ``bounds``, plus ``verify`` for
re-checking a results CSV.  Every run writes a CSV with a header row and
prints one PASS/FAIL line per bound with its margin; ``--strict`` turns
any FAIL into a nonzero exit code.  Progress goes to stderr; stdout is
reserved for the summary.

Options may come from ``--config`` files in flat ``key=value`` lines;
explicit flags override file values and unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import sys

from . import dist, experiments

PRESETS = {
    "fig2": {"experiment": "rs-coding", "trials": 100000,
             "sigma2": "0.01,0.03,0.05,0.1"},
    "fig3": {"experiment": "ers-coding", "trials": 100000,
             "sigma2": "0.0001,0.0005,0.001,0.005", "batch": "32",
             "extra_batch": "2,8,32,128,512", "extra_sigma2": "0.001"},
    "fig4": {"experiment": "matching", "trials": 20000,
             "q": "kind=gaussian mean=0 var=100",
             "pa": "kind=gaussian mean=0.5 var=0.7",
             "pb": "kind=gaussian mean=-0.5 var=0.7", "batch": "2,8,32,64"},
    "matchbound": {"experiment": "matching", "trials": 20000,
                   "q": "kind=gaussian mean=0 var=1",
                   "pa": "kind=gaussian mean=0.5 var=0.7",
                   "pb": "kind=gaussian mean=-0.5 var=0.7", "batch": "32",
                   "bins": 20},
    "grs": {"experiment": "grs-example", "trials": 100000, "k": "1,4,16"},
    "fig5-desk": {"experiment": "wz", "trials": 10000,
                  "sigma2": "0.02,0.05", "n_joint": "1,2,4",
                  "log2v": "6,7,8,9,10,11,12", "batch": "4096",
                  "feedback_log2v": "8,10,12"},
    # Paper-scale operating point (hours of runtime; not exercised in CI).
    "fig5-paper": {"experiment": "wz", "trials": 1000000, "sigma2": "0.005",
                   "n_joint": "4", "log2v": "3", "batch": str(2 ** 20),
                   "feedback_log2v": ""},
}

DEFAULT_SEED = "a1a2a3a4a5a6a7a8b1b2b3b4b5b6b7b8"

_KEYS = {
    "rs-coding": {"experiment", "seed", "trials", "sigma2", "out", "workers"},
    "ers-coding": {"experiment", "seed", "trials", "sigma2", "batch",
                   "extra_batch", "extra_sigma2", "unscaled", "out", "workers"},
    "matching": {"experiment", "seed", "trials", "q", "pa", "pb", "batch",
                 "bins", "out", "workers"},
    "wz": {"experiment", "seed", "trials", "sigma2", "n_joint", "log2v",
           "batch", "feedback_log2v", "feedback_trials", "out", "workers"},
    "grs-example": {"experiment", "seed", "trials", "k", "out", "workers"},
    "bounds": {"experiment", "seed", "q", "pa", "pb", "batch", "out", "workers"},
}


def _parse_config_file(path):
    options = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SystemExit(f"malformed config line: {line!r}")
            key, value = line.split("=", 1)
            options[key.strip()] = value.strip()
    return options


def _floats(text):
    return [float(tok) for tok in str(text).split(",") if tok != ""]


def _ints(text):
    return [int(tok) for tok in str(text).split(",") if tok != ""]


def _gather(args):
    """Merge preset, config file, and explicit flags (flags win)."""
    options = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise SystemExit(f"unknown preset {args.preset!r}")
        options.update(PRESETS[args.preset])
    if args.config:
        options.update(_parse_config_file(args.config))
    if args.experiment:
        options["experiment"] = args.experiment
    for key in ("seed", "trials", "sigma2", "batch", "extra_batch",
                "extra_sigma2", "q", "pa", "pb", "bins", "k", "n_joint",
                "log2v", "feedback_log2v", "feedback_trials", "out", "workers",
                "unscaled"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            options[key] = value
    experiment = options.get("experiment")
    if experiment not in _KEYS:
        raise SystemExit(f"unknown or missing experiment {experiment!r}")
    unknown = set(options) - _KEYS[experiment]
    if unknown:
        raise SystemExit(f"unknown keys for {experiment}: {sorted(unknown)}")
    options.setdefault("seed", DEFAULT_SEED)
    options.setdefault("out", f"{experiment}.csv")
    options.setdefault("workers", 1)
    return experiment, options


def _run(experiment, opt):
    seed = str(opt["seed"]).removeprefix("0x")
    trials = int(opt.get("trials", 10000))
    workers = int(opt.get("workers", 1))
    extra_csvs = []
    if experiment == "rs-coding":
        rows = experiments.run_rs_coding(seed, trials, _floats(opt["sigma2"]),
                                         workers=workers)
    elif experiment == "ers-coding":
        batches = _ints(opt.get("batch", "32"))
        configs = [(s, n) for s in _floats(opt["sigma2"]) for n in batches]
        for n in _ints(opt.get("extra_batch", "")):
            for s in _floats(opt.get("extra_sigma2", "")):
                if (s, n) not in configs:
                    configs.append((s, n))
        rows = experiments.run_ers_coding(
            seed, trials, configs, workers=workers,
            use_scale=not int(opt.get("unscaled", 0)))
    elif experiment == "matching":
        rows, bin_rows = experiments.run_matching(
            seed, trials, dist.from_config(opt["q"]),
            dist.from_config(opt["pa"]), dist.from_config(opt["pb"]),
            _ints(opt.get("batch", "2,8,32,64")), workers=workers,
            bins=int(opt.get("bins", 0)))
        if bin_rows:
            extra_csvs.append(("matching-bins", bin_rows,
                               str(opt["out"]) + ".bins.csv"))
    elif experiment == "wz":
        rows = experiments.run_wz(
            seed, trials, _floats(opt["sigma2"]), _ints(opt["n_joint"]),
            _ints(opt["log2v"]), n_batch=int(opt.get("batch", 4096)),
            feedback_log2v=_ints(opt.get("feedback_log2v", "")),
            feedback_trials=int(opt["feedback_trials"])
            if opt.get("feedback_trials") else None)
    elif experiment == "grs-example":
        rows = experiments.run_grs_example(seed, trials, _ints(opt["k"]),
                                           workers=workers)
    elif experiment == "bounds":
        rows = experiments.run_bounds(
            seed, dist.from_config(opt["q"]), dist.from_config(opt["pa"]),
            dist.from_config(opt["pb"]), _ints(opt.get("batch", "2,8,32,128")))
    else:
        raise SystemExit(f"unknown experiment {experiment!r}")
    return rows, extra_csvs


def _report(experiment, rows, out, strict):
    columns, _ = experiments.SCHEMAS[experiment]
    experiments.write_csv(out, rows, columns)
    checks = experiments.verify_rows(experiment, rows)
    failed = 0
    for check in checks:
        print(check.line())
        failed += not check.passed
    print(f"{experiment}: {len(checks) - failed}/{len(checks)} checks passed; "
          f"wrote {out}")
    return 1 if (strict and failed) else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="channel-sim",
        description="Channel simulation and distributed matching experiments")
    sub = parser.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="run an experiment")
    verify_p = sub.add_parser("verify", help="re-check a results CSV")
    verify_p.add_argument("csv_path")
    verify_p.add_argument("--strict", action="store_true")

    # Experiment subcommands double as `run --experiment <name>`.
    for name in experiments.SCHEMAS:
        if name == "matching-bins":
            continue
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_run_args(p)
        p.set_defaults(command=name)
    _add_run_args(run_p)

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    if args.command == "verify":
        try:
            checks = experiments.verify_csv(args.csv_path)
        except (ValueError, OSError) as exc:
            print(f"verify error: {exc}", file=sys.stderr)
            return 2
        failed = 0
        for check in checks:
            print(check.line())
            failed += not check.passed
        print(f"{len(checks) - failed}/{len(checks)} checks passed")
        return 1 if (args.strict and failed) else 0

    if args.command != "run":
        args.experiment = args.command
    experiment, opt = _gather(args)
    print(f"running {experiment} (seed {opt['seed']}) ...", file=sys.stderr)
    rows, extra = _run(experiment, opt)
    code = _report(experiment, rows, str(opt["out"]), args.strict)
    for extra_experiment, extra_rows, extra_out in extra:
        code = max(code, _report(extra_experiment, extra_rows, extra_out,
                                 args.strict))
    return code


def _add_run_args(p):
    p.add_argument("--preset", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--experiment", default=None)
    p.add_argument("--seed", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--sigma2", default=None)
    p.add_argument("--batch", default=None)
    p.add_argument("--extra-batch", dest="extra_batch", default=None)
    p.add_argument("--extra-sigma2", dest="extra_sigma2", default=None)
    p.add_argument("--unscaled", type=int, default=None)
    p.add_argument("--q", default=None)
    p.add_argument("--pa", default=None)
    p.add_argument("--pb", default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--k", default=None)
    p.add_argument("--n-joint", dest="n_joint", default=None)
    p.add_argument("--log2v", default=None)
    p.add_argument("--feedback-log2v", dest="feedback_log2v", default=None)
    p.add_argument("--feedback-trials", dest="feedback_trials", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--strict", action="store_true")


if __name__ == "__main__":
    sys.exit(main())
