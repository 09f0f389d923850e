"""Command-line entry point.

Subcommands map one-to-one onto the experiment runners:

    chain         per-layer diagnostics of a single configuration
    width-sweep   mean gap vs. width with a log-log slope (about -1/2)
    depth-sweep   gap vs. layer at fixed width, decay + plateau diagnostics
    cosine        normalized-vs-vanilla |cosine| contrast for a sample pair
    conjecture    stationarity-gap sweep for a nonlinear activation
    theory-check  run every bound verifier; nonzero exit on any failure
    init-demo     layer-by-layer gap under an initialization scheme

Data (CSV) goes to --out or stdout; the effective parameters and a one-line
summary go to stderr so pipelines can consume the CSV cleanly. --plot-dir
additionally renders the matching matplotlib figure(s) next to the data.
"""

import argparse
import json
import os
import sys

from . import experiments, plots

_SUBCOMMAND_KIND = {
    "chain": "chain",
    "width-sweep": "width_sweep",
    "depth-sweep": "depth_sweep",
    "cosine": "cosine_contrast",
    "conjecture": "conjecture_sweep",
    "theory-check": "theory_battery",
    "init-demo": "init_demo",
}

_SPEC_KEYS = ("kind", "n", "d", "d_list", "depth", "activation", "chain_kind",
              "seeds", "n_seeds", "master_seed", "burn_in", "out")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="orthochain",
        description="Simulate normalized random linear chains, verify the "
                    "contraction theory, and demo the SVD initializer.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_KIND:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--n", type=int, help="batch size (columns)")
        p.add_argument("--d", type=int, help="width (rows)")
        p.add_argument("--d-list", type=str,
                       help="comma-separated widths for sweeps, e.g. 32,64,128")
        p.add_argument("--depth", type=int, help="number of layers")
        p.add_argument("--seeds", type=int, help="number of replicate seeds")
        p.add_argument("--master-seed", type=int, help="master seed (default 0)")
        p.add_argument("--activation", type=str,
                       choices=("linear", "relu", "tanh", "sin", "sigmoid"))
        p.add_argument("--chain", type=str, choices=("bn", "vanilla"),
                       help="chain kind")
        p.add_argument("--init", type=str, default=None,
                       choices=("iterative_orthogonal", "xavier",
                                "gaussian_variance_over_d"),
                       help="initialization scheme for init-demo")
        p.add_argument("--burn-in", type=int, help="burn-in layers (conjecture)")
        p.add_argument("--config", type=str, help="JSON config file")
        p.add_argument("--out", type=str, help="CSV output path (default stdout)")
        p.add_argument("--plot-dir", type=str,
                       help="also render figures into this directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker cap (default: available parallelism, "
                            "env ORTHOCHAIN_THREADS overrides)")
    return parser


def _load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    unknown = set(cfg) - set(_SPEC_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _merge_spec(kind, args):
    """Config-file values first, then explicit flags on top."""
    merged = {"kind": kind}
    if args.config:
        cfg = _load_config(args.config)
        cfg.pop("kind", None)
        merged.update(cfg)
    flag_map = {
        "n": args.n, "d": args.d, "depth": args.depth,
        "activation": args.activation, "chain_kind": args.chain,
        "n_seeds": args.seeds, "master_seed": args.master_seed,
        "burn_in": args.burn_in, "out": args.out,
    }
    if args.d_list:
        flag_map["d_list"] = [int(tok) for tok in args.d_list.split(",") if tok]
    for key, value in flag_map.items():
        if value is not None:
            merged[key] = value
    if kind == "cosine_contrast":
        merged.setdefault("n", 2)
    return experiments.ExperimentSpec(**merged)


def _resolve_threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("ORTHOCHAIN_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _echo_parameters(spec, threads, extra=""):
    fields = {k: getattr(spec, k) for k in _SPEC_KEYS}
    fields["threads"] = threads
    line = " ".join(f"{k}={v}" for k, v in fields.items() if v is not None)
    print(f"[orthochain] {line}{' ' + extra if extra else ''}", file=sys.stderr)


def _render_plots(command, result, plot_dir):
    os.makedirs(plot_dir, exist_ok=True)
    path = os.path.join(plot_dir, f"{command.replace('-', '_')}.png")
    if command == "cosine":
        plots.plot_cosine_contrast(result.records, path)
    elif command == "depth-sweep":
        plots.plot_depth_sweep(result.records, path)
    elif command == "width-sweep":
        plots.plot_loglog_sweep(result.records, path)
    elif command == "conjecture":
        plots.plot_loglog_sweep(result.records, path, metric="mean_l",
                                ylabel="mean stationarity gap L")
    elif command == "init-demo":
        plots.plot_init_demo(result.records, path)
    elif command == "theory-check":
        plots.plot_battery(result.records, path)
    elif command == "chain":
        plots.plot_depth_sweep(result.records, path)
    print(f"[orthochain] wrote {path}", file=sys.stderr)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        spec = _merge_spec(_SUBCOMMAND_KIND[command], args)
        threads = _resolve_threads(args)
        _echo_parameters(spec, threads)
        if command == "chain":
            result = experiments.run_chain(spec, threads=threads)
        elif command == "width-sweep":
            result = experiments.run_width_sweep(spec, threads=threads)
        elif command == "depth-sweep":
            result = experiments.run_depth_sweep(spec, threads=threads)
        elif command == "cosine":
            result = experiments.run_cosine_contrast(spec, threads=threads)
        elif command == "conjecture":
            result = experiments.run_conjecture_sweep(spec, threads=threads)
        elif command == "init-demo":
            result = experiments.run_init_demo(
                spec, threads=threads,
                init_kind=args.init or "iterative_orthogonal")
        else:
            result = experiments.run_theory_battery(spec, threads=threads)
        experiments.write_csv(result.records, spec.out)
        print(f"[orthochain] {result.summary}", file=sys.stderr)
        if args.plot_dir:
            _render_plots(command, result, args.plot_dir)
        if command == "theory-check" and result.failures:
            print(f"[orthochain] FAILED checks: {', '.join(result.failures)}",
                  file=sys.stderr)
            return 1
        return 0
    except ValueError as exc:
        # bad parameter combinations are usage errors, like unknown flags
        print(f"[orthochain] error: {exc}", file=sys.stderr)
        print(f"usage: see `orthochain {command} --help`", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as exc:
        print(f"[orthochain] error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
