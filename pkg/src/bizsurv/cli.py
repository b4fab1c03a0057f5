"""Command-line entry point: one subcommand per pipeline stage, plus ``all``.

Exit codes: 0 success, 1 stage failure, 2 missing prerequisite artifact,
3 invalid configuration, 4 work directory locked.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from . import MANIFEST_SCHEMA_VERSION, __version__
from .config import ENV_PREFIX, STAGES, ConfigError, load_config

log = logging.getLogger("bizsurv")

EXIT_OK, EXIT_FAILED, EXIT_MISSING, EXIT_CONFIG, EXIT_LOCKED = 0, 1, 2, 3, 4


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--workdir", help="work directory for artifacts")
    p.add_argument("--observation", help="observation snapshot directory")
    p.add_argument("--prediction", help="prediction snapshot directory")
    p.add_argument("--observation-end", help="observation snapshot date (YYYY-MM-DD)")
    p.add_argument("--prediction-end", help="prediction snapshot date (YYYY-MM-DD)")
    p.add_argument("--task", choices=("survival", "sentiment"))
    p.add_argument("--force", action="store_true", help="rerun even when the manifest is current")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bizsurv",
        description="Business survival prediction pipeline.",
        epilog=f"Config fields can be overridden with {ENV_PREFIX}<SECTION>__<FIELD> environment variables, "
               f"e.g. {ENV_PREFIX}SMOTE__K=7.",
    )
    parser.add_argument("--version", action="version",
                        version=f"bizsurv {__version__} (manifest schema {MANIFEST_SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    helps = {
        "synth": "generate a synthetic snapshot pair",
        "ingest": "parse and normalise the snapshots",
        "label": "derive survival labels",
        "features": "compute the four feature families",
        "train": "train the classifiers (SMOTE on the training fold)",
        "evaluate": "AUC/ROC on the test fold",
        "ablate": "feature-family ablation grid",
        "explain": "local explanation for one restaurant",
    }
    for stage in STAGES:
        sp = sub.add_parser(stage, parents=[common], help=helps[stage])
        if stage == "explain":
            sp.add_argument("--business-id", help="restaurant to explain (default: first test restaurant)")
            sp.add_argument("--model", default="GBDT", choices=("LR", "GBDT", "MLP"))
            sp.add_argument("--features", default="A", choices=("G", "U", "A", "L"),
                            help="feature family of the model to explain")
            sp.add_argument("--top-k", type=int)
            sp.add_argument("--samples", type=int)
            sp.add_argument("--format", default="json", choices=("json", "html"))
    sub.add_parser("all", parents=[common], help="run every stage from synth/ingest to ablate")
    return parser


def _overrides(args) -> dict:
    out: dict = {}
    for attr, key in (("seed", "seed"), ("workdir", "workdir"), ("observation", "observation_path"),
                      ("prediction", "prediction_path"), ("observation_end", "observation_end"),
                      ("prediction_end", "prediction_end"), ("task", "task")):
        v = getattr(args, attr, None)
        if v is not None:
            out[key] = v
    return out


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    # Heavy imports are deferred so --version and config errors stay fast.
    from .pipeline import StageError, pipeline_stages, run_stage

    if args.command == "explain":
        if args.top_k is not None and args.top_k < 1 or args.samples is not None and args.samples < 2:
            print("invalid configuration: explain.top_k must be >= 1 and explain.samples >= 2", file=sys.stderr)
            return EXIT_CONFIG
        plan = [("explain", {
            "business_id": args.business_id, "family": args.features, "kind": args.model,
            "fmt": args.format, "top_k": args.top_k, "samples": args.samples,
        })]
    elif args.command == "all":
        plan = [(s, {}) for s in pipeline_stages(cfg)]
    else:
        plan = [(args.command, {})]

    for stage, options in plan:
        try:
            res = run_stage(stage, cfg, force=args.force, **options)
        except StageError as exc:
            print(f"{stage}: {exc}", file=sys.stderr)
            return exc.exit_code
        except Exception as exc:  # noqa: BLE001 - reported as a stage failure
            log.debug("stage failure", exc_info=True)
            print(f"{stage}: failed: {exc}", file=sys.stderr)
            return EXIT_FAILED
        state = "up to date" if res.skipped else "done"
        print(f"{stage}: {state} ({len(res.outputs)} artifacts)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
