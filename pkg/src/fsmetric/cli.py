"""Command-line entry point: ``fsmetric <subcommand> --config FILE [--seed N] [--out DIR]``."""

import argparse
import sys

from . import __version__
from .errors import FsmError
from .experiment import STAGES, Experiment, load_config, read_manifest, write_synthetic

SUBCOMMANDS = ("ingest", "synth", "train", "embed", "cluster", "evaluate", "report", "visualize", "run")


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config file")
    common.add_argument("--seed", type=_u64, help="override the config's experiment seed")
    common.add_argument("--out", help="output directory (overrides [experiment] out)")
    common.add_argument("--stage", choices=STAGES,
                        help="with 'run': resume the pipeline at this stage")
    parser = argparse.ArgumentParser(prog="fsmetric", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fsmetric {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "load or generate the dataset, augment and split it",
        "synth": "write the synthetic shapes benchmark as a dataset directory",
        "train": "train every configured model",
        "embed": "embed the test split with every model and build the PCA+t-SNE layout",
        "cluster": "run K-Means and GMM on every embedding set",
        "evaluate": "classification metrics and silhouette scores",
        "report": "write the CSV and markdown report tables",
        "visualize": "write SVG scatter plots of the clusterings",
        "run": "run the full pipeline",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.stage and args.command != "run":
        parser.error("--stage only applies to the 'run' subcommand")
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.command == "synth":
            out = args.out or (config.resolve(config.out) / "synthetic" if config.out else None)
            if out is None:
                parser.error("synth needs --out or [experiment] out")
            for path in write_synthetic(config, out):
                print(path)
            return 0
        exp = Experiment(config, args.out)
        if args.command == "run":
            exp.run(args.stage or "ingest")
        else:
            exp.run_stage(args.command)
        manifest = read_manifest(exp.out)
        for stage in STAGES:
            if stage in manifest.stage_seconds and (args.command == "run" or stage == args.command):
                print(f"{stage}: {manifest.stage_seconds[stage]:.1f}s, "
                      f"{len(manifest.artifacts.get(stage, {}))} artifacts")
        if args.command in ("run", "report"):
            for name in ("table1.md", "table2.md"):
                p = exp.path("reports", name)
                if p.is_file():
                    print(p.read_text(encoding="utf-8"))
        return 0
    except FsmError as exc:
        print(f"fsmetric: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
