"""``advreg`` command line.

Exit codes: 0 success, 1 selfcheck failure, 2 input error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import benchmark as B
from .errors import AdvRegError, InvalidArgumentError, NumericalAbort
from .icp import IcpConfig, icp_register
from .pointcloud import PointCloud, load_bundled_cloud, load_point_cloud
from .registration import TrainConfig, register

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
RECORD_VERSION = 1


def _g(x):
    return "%.17g" % float(x)


def format_record(result, method, seed=None, mode=None):
    """Plain-text transform record; ``wall_time_s`` is always the last line."""
    R = result.transform.rotation
    lines = [f"# advreg transform record v{RECORD_VERSION}", f"method {method}"]
    if mode is not None:
        lines.append(f"mode {mode}")
    if seed is not None:
        lines.append(f"seed {seed}")
    lines.append("rotation_matrix")
    lines += ["  " + " ".join(_g(v) for v in row) for row in R]
    lines.append("rotation_vector " + " ".join(_g(v) for v in result.transform.rotation_vector))
    lines.append("translation " + " ".join(_g(v) for v in result.transform.translation))
    lines.append(f"epochs {result.epochs_run}")
    if result.loss_trace:
        last = result.loss_trace[-1]
        names = ("final_critic_loss", "final_generator_loss") if method == "adversarial" \
            else ("final_correspondence_mse", "final_fit_mse")
        lines.append(f"{names[0]} {_g(last[1])}")
        lines.append(f"{names[1]} {_g(last[2])}")
    lines.append(f"wall_time_s {result.wall_time:.6f}")
    return "\n".join(lines) + "\n"


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def _load_pair(args):
    src = load_point_cloud(args.source, args.format)
    tgt = load_point_cloud(args.target, args.format)
    return src, tgt


def cmd_register(args):
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.mode is not None:
        cfg = cfg.replace(mode=args.mode)
    if args.epochs is not None:
        cfg = cfg.replace(n_epochs=args.epochs)
    src, tgt = _load_pair(args)
    res = register(src, tgt, cfg)
    _emit(format_record(res, "adversarial", cfg.seed, cfg.mode), args.out)
    return EXIT_OK


def _icp_config(path):
    if not path:
        return IcpConfig()
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
    else:
        data = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                k, _, v = line.partition("=")
                data[k.strip()] = v.strip()
    kw = {}
    for key, value in data.items():
        if key == "max_iterations":
            kw[key] = int(value)
        elif key == "convergence_epsilon":
            kw[key] = float(value)
        elif key == "leaf_size":
            kw[key] = int(value)
        else:
            raise InvalidArgumentError(f"{path}: unknown ICP option {key!r}")
    return IcpConfig(**kw)


def cmd_icp(args):
    cfg = _icp_config(args.config)
    src, tgt = _load_pair(args)
    res = icp_register(src, tgt, cfg)
    _emit(format_record(res, "icp"), args.out)
    return EXIT_OK


def cmd_benchmark(args):
    if not args.config:
        raise InvalidArgumentError("benchmark needs --config SPEC.json")
    plan = B.load_plan(args.config)
    if args.seed is not None:
        plan.spec.seed = args.seed
    if args.mode is not None:
        plan.train = plan.train.replace(mode=args.mode)
    base = load_point_cloud(args.source, args.format) if args.source else load_bundled_cloud()
    if plan.n_points and plan.n_points < len(base.points):
        # deterministic thinning, independent of the trial seeds
        keep = np.linspace(0, len(base.points) - 1, plan.n_points).round().astype(int)
        base = PointCloud(base.points[keep])
    results = B.run_experiment(base, plan.spec, plan.methods, plan.train, plan.icp, jobs=args.jobs)
    csv_text = B.results_to_csv(results)
    if args.out:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    print(B.format_summary(results))
    return EXIT_OK


def cmd_selfcheck(args):
    from .selfcheck import run_selfcheck

    results = run_selfcheck()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "ok  " if r.passed else "FAIL"
        print(f"{status} {r.name.ljust(width)}  max_error={r.max_error:.3e}  tol={r.tolerance:.0e}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("selfcheck failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_CHECK
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="advreg", description="Adversarial rigid point-cloud registration.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def io_flags(sp, pair=True):
        sp.add_argument("--source", required=pair, help="source cloud (moved onto the target)")
        if pair:
            sp.add_argument("--target", required=True)
        sp.add_argument("--format", choices=("ply", "xyz"), help="input format (default: from extension)")
        sp.add_argument("--config", help="config file (JSON or key = value lines)")
        sp.add_argument("--out", help="output path (default: stdout)")

    r = sub.add_parser("register", help="adversarial registration")
    io_flags(r)
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=("joint", "two-phase", "rotation"))
    r.add_argument("--epochs", type=int, help="override n_epochs")
    r.set_defaults(func=cmd_register)

    i = sub.add_parser("icp", help="ICP baseline")
    io_flags(i)
    i.set_defaults(func=cmd_icp)

    b = sub.add_parser("benchmark", help="synthetic experiment sweep")
    io_flags(b, pair=False)
    b.add_argument("--seed", type=int)
    b.add_argument("--mode", choices=("joint", "two-phase", "rotation"))
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("selfcheck", help="gradient and metric self-test")
    s.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalAbort as exc:
        print(f"advreg: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (AdvRegError, OSError, ValueError) as exc:
        print(f"advreg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
