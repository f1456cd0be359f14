"""Command-line entry point: ``hamlearn <mode> --plan FILE --seed INT ... --out DIR``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

MODES = ("simulate", "learn", "evaluate", "verify", "classify", "bench-noise", "full")
OUT_ENV = "HAMLEARN_OUT"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hamlearn",
        description="Learn short-time Hamiltonian dynamics from randomized measurements.",
    )
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--plan", help="Hamiltonian plan document (JSON)")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int, help="number of measurement records N")
    p.add_argument("--epsilon", type=float, help="target channel error")
    p.add_argument("--delta", type=float, help="failure probability")
    p.add_argument("--gamma", type=float, help="depolarizing strength of the simulated device")
    p.add_argument("--trunc-m", type=int, dest="trunc_m", help="override the truncation order M")
    p.add_argument("--kappa", type=float, help="constant-time truncation parameter")
    p.add_argument("--threads", type=int, help="cap on BLAS worker threads")
    p.add_argument("--dataset", help="dataset file to learn from (default OUT/dataset.bin)")
    p.add_argument("--model", help="model file to evaluate (default OUT/model.json)")
    p.add_argument("--trials", type=int, help="random states used for trace distances")
    p.add_argument("--no-threshold", dest="threshold", action="store_const", const=False,
                   help="keep coefficients below two standard errors")
    p.add_argument("--out", help=f"output directory (overridden by ${OUT_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="hamlearn: %(message)s", stream=sys.stderr)
    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    # Heavy imports happen after the thread cap is in place.
    from .pipeline import ExperimentConfig, StageError, run

    overrides = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    if os.environ.get(OUT_ENV):
        overrides["out"] = os.environ[OUT_ENV]
    try:
        if args.config:
            if not os.path.exists(args.config):
                print(f"hamlearn: config file not found: {args.config}", file=sys.stderr)
                return 2
            cfg = ExperimentConfig.from_file(args.config, **overrides)
        else:
            cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
    except (ValueError, TypeError) as exc:
        print(f"hamlearn: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        run(cfg)
    except StageError as exc:
        print(f"hamlearn: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - surface any failure as a nonzero exit
        print(f"hamlearn: unexpected failure: {exc!r}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
