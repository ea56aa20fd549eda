"""Command-line entry point: ``noisyrcs <experiment> --config cfg.json``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments
from .errors import CapacityError, IntegrityError

EXIT_OK, EXIT_VALIDATION, EXIT_SIZING = 0, 2, 3
COMMANDS = {"cmi-scan": "cmi_scan", "mpoee-bench": "mpoee_bench",
            "patch-sample": "patch_sample", "validate": "validate"}

log = logging.getLogger("noisyrcs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisyrcs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path (CSV, samples or JSON verdict)")
        p.add_argument("--realizations", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args) -> experiments.ExperimentConfig:
    data = json.loads(Path(args.config).read_text())
    data.setdefault("experiment", COMMANDS[args.command])
    if data["experiment"] != COMMANDS[args.command]:
        raise ValueError(f"config is for {data['experiment']!r}, not {args.command!r}")
    for key, value in (("seed", args.seed), ("output", args.out),
                       ("realizations", args.realizations), ("threads", args.threads)):
        if value is not None:
            data[key] = value
    return experiments.ExperimentConfig.from_dict(data)


def run(config: experiments.ExperimentConfig) -> int:
    if config.experiment == "cmi_scan":
        text = experiments.write_csv(experiments.run_cmi_scan(config), experiments.CMI_COLUMNS, config.output)
    elif config.experiment == "mpoee_bench":
        text = experiments.write_csv(experiments.run_mpoee_bench(config), experiments.MPOEE_COLUMNS, config.output)
    elif config.experiment == "patch_sample":
        result = experiments.run_patch_sample(config)
        text = "\n".join(result["lines"]) + "\n"
        if config.output:
            Path(config.output).write_text(text)
            Path(config.output + ".json").write_text(json.dumps(result["sidecar"], indent=2) + "\n")
    else:
        verdict = experiments.run_validate(config)
        text = json.dumps(verdict, indent=2, default=float) + "\n"
        if config.output:
            Path(config.output).write_text(text)
        if not config.output:
            sys.stdout.write(text)
        return EXIT_OK if verdict["passed"] else EXIT_VALIDATION
    if not config.output:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = load_config(args)
        return run(config)
    except CapacityError as exc:
        log.error("sizing error: %s", exc)
        return EXIT_SIZING
    except IntegrityError as exc:
        log.error("integrity error: %s", exc)
        return EXIT_VALIDATION
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
