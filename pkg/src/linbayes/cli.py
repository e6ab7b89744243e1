"""Command-line driver for the inversion pipeline.

Exit codes: 0 success, 2 configuration error, 3 model/solver failure,
4 I/O failure, 5 missing upstream stage artifacts.
"""

import os

# Thread cap must land in the environment before numpy initializes its BLAS.
_threads = os.environ.get("LINBAYES_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import sys

from .errors import (ConfigError, InvalidParameterError, MissingArtifactError,
                     SolverFailure, StabilityError)
from .pipeline import PIPELINE_STAGES, run_pipeline

_STAGE_COMMANDS = ("sample-prior", "map", "spectrum", "variance", "sample-posterior")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="linbayes",
        description="Linearized Bayesian inversion pipeline over FEM parameter fields")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed-data", type=int, default=None, dest="seed_data")
        p.add_argument("--seed-sample", type=int, default=None, dest="seed_sample")
        p.add_argument("--seed-lanczos", type=int, default=None, dest="seed_lanczos")
        p.add_argument("--verbose", action="store_true")

    run = sub.add_parser("run", help="run the full pipeline (or one stage)")
    common(run)
    run.add_argument("--stage", choices=PIPELINE_STAGES, default=None)

    for name in _STAGE_COMMANDS:
        p = sub.add_parser(name, help=f"run the '{name}' stage")
        common(p)
        if name.startswith("sample"):
            p.add_argument("--count", type=int, default=None)
            p.add_argument("--seed", type=int, default=None,
                           help="shorthand for --seed-sample")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    seed_overrides = {
        "data_noise": args.seed_data,
        "sampling": getattr(args, "seed", None)
        if getattr(args, "seed", None) is not None else args.seed_sample,
        "lanczos": args.seed_lanczos,
    }
    if args.command == "run":
        stages = [args.stage] if args.stage else None
    else:
        stages = [args.command]
    try:
        artifacts = run_pipeline(args.config, outdir=args.out, stages=stages,
                                 seed_overrides=seed_overrides,
                                 count=getattr(args, "count", None),
                                 verbose=args.verbose)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"missing upstream stage: {exc}", file=sys.stderr)
        return 5
    except (SolverFailure, InvalidParameterError, StabilityError) as exc:
        print(f"solver/model failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return 4
    if args.verbose:
        for name, digest in sorted(artifacts.checksums.items()):
            print(f"{digest}  {name}")
    print(f"wrote {len(artifacts.checksums)} artifacts to {artifacts.outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
