import argparse
import logging
import sys
from typing import Optional

from varlab import __version__
from varlab.config import settings
from varlab.errors import VarlabError
from varlab.experiments import build_config, compare, load_config, load_manifest, run
from varlab.models import Experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="silt-varlab",
        description="Numerical checks of the 4/3-variation of the derivative of self-intersection local time",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level (default: %(default)s)")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run the experiment described by a config file")
    run_parser.add_argument("--config", required=True, help="JSON or 'key = value' config file")
    run_parser.add_argument("--seed", type=int, help="root seed, overrides the config file")
    run_parser.add_argument("--threads", type=int, help="worker threads, overrides the config file")
    run_parser.add_argument("--out", help="output directory, overrides the config file")

    compare_parser = commands.add_parser("compare", help="compare the summaries of two runs")
    compare_parser.add_argument("manifest_a")
    compare_parser.add_argument("manifest_b")

    lemma_parser = commands.add_parser("verify-lemmas", help="check the Gaussian moment lemmas")
    lemma_parser.add_argument("--quick", action="store_true", help="fewer Monte Carlo samples")
    lemma_parser.add_argument("--seed", type=int)
    lemma_parser.add_argument("--out", help="output directory")
    return parser


def _run(args) -> int:
    config = load_config(args.config, {"seed": args.seed, "threads": args.threads, "output_dir": args.out})
    manifest = run(config)
    print(f"{config.experiment.value}: {sum(manifest.assertions.values())}/{len(manifest.assertions)} "
          f"assertions passed, results in {config.output_dir}")
    return EXIT_OK if manifest.passed else EXIT_ASSERTION


def _compare(args) -> int:
    report = compare(load_manifest(args.manifest_a), load_manifest(args.manifest_b))
    print(report.model_dump_json(indent=2))
    return EXIT_OK


def _verify_lemmas(args) -> int:
    data = {"experiment": Experiment.VERIFY_LEMMAS.value, "quick": args.quick}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    manifest = run(build_config(data))
    for name, passed in manifest.assertions.items():
        print(f"{'ok  ' if passed else 'FAIL'} {name}")
    return EXIT_OK if manifest.passed else EXIT_ASSERTION


COMMANDS = {"run": _run, "compare": _compare, "verify-lemmas": _verify_lemmas}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except VarlabError as e:
        logger.error("%s: %s", type(e).__name__, e.detail)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
