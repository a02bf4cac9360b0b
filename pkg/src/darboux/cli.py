"""Command line entry points.

Each subcommand consumes the same TOML configuration and runs the pipeline
through the requested stage; outputs land in a run directory named by the
configuration hash.  Exit codes: 0 ok, 2 configuration, 3 unsupported
topology, 4 solver failure, 5 patch failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, config_hash, load_config
from .errors import (DarbouxError, InstabilityError, InternalConsistencyError,
                     NonFlatError, PatchFailureError, SolverBreakdownError,
                     TransversalityError, UnsupportedTopologyError)

_STAGES = ("curvature", "seed", "regions", "solve", "develop", "verify")


def _run(config_path, stage, overrides):
    from .pipeline import run_pipeline

    cfg = load_config(config_path)
    for key, value in overrides.items():
        if value is not None:
            if key == "resolution":
                cfg.metric.resolution = value
                cfg.sector_resolution = value
            else:
                setattr(cfg, key, value)
    cfg.validate()
    out_root = Path(overrides.get("out") or cfg.out_dir)
    out_dir = out_root / f"run-{config_hash(cfg)}"
    verbose = overrides.get("verbose")

    stop_after = {"curvature": "curvature", "regions": "regions",
                  "seed": "seed", "solve": "solve", "develop": "verify",
                  "verify": "verify"}[stage]

    class _StopPipeline(Exception):
        pass

    reached = []

    def progress(name):
        reached.append(name)
        if verbose:
            print(f"[stage] {name}", file=sys.stderr)
        if name == stop_after and stage not in ("develop", "verify"):
            raise _StopPipeline

    try:
        report, artifacts = run_pipeline(cfg, out_dir=out_dir, progress=progress)
    except _StopPipeline:
        print(f"stopped after stage {stop_after}; artifacts in {out_dir}")
        return 0
    print(report.to_text(include_timings=bool(verbose)), end="")
    print(f"artifacts in {out_dir}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="darboux",
        description="Isometric embedding of a surface chart with mixed-sign "
                    "curvature: curvature analysis, sector solves, and mesh output.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGES:
        p = sub.add_parser(name, help=f"run the pipeline through the {name} stage")
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--stage", default=None, help=argparse.SUPPRESS)
        p.add_argument("--out", default=None, help="output directory root")
        p.add_argument("--resolution", type=int, default=None,
                       help="override chart and sector resolution")
        p.add_argument("--epsilon", dest="eps", type=float, default=None,
                       help="override the amplitude parameter")
        p.add_argument("--max-iter", dest="max_iter", type=int, default=None,
                       help="override the iteration cap")
        p.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    overrides = {
        "out": args.out, "resolution": args.resolution, "eps": args.eps,
        "max_iter": args.max_iter, "verbose": args.verbose,
    }
    try:
        return _run(args.config, args.stage or args.command, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (UnsupportedTopologyError, TransversalityError) as exc:
        print(f"unsupported topology: {exc}", file=sys.stderr)
        return 3
    except (SolverBreakdownError, InstabilityError, InternalConsistencyError,
            NonFlatError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4
    except PatchFailureError as exc:
        print(f"patch failure: {exc}", file=sys.stderr)
        return 5
    except DarbouxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
