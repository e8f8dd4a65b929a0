"""Command line interface: ``omega-rater {run,features,cluster,infer}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .cluster import DbscanParams, SCALINGS
from .errors import ConfigError, OmegaRaterError
from .features import DEFAULT_EPSILON
from .geometry import ANGLE_MODES
from .ingest import FORMATS, DatasetSpec
from .pipeline import PROVIDERS, InferenceParams, RunConfig, StageError, run_pipeline

log = logging.getLogger("omega_rater")

STAGES = {
    "run": ("features", "cluster", "infer"),
    "features": ("features",),
    "cluster": ("cluster",),
    "infer": ("infer",),
}


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("general")
    g.add_argument("--output-dir", "-o", type=Path, default=Path("out"), help="directory for all outputs (default: out)")
    g.add_argument("--seed", type=int, default=42, help="top-level seed; stage seeds derive from it (default: 42)")
    g.add_argument("--timings", action="store_true", help="record wall-clock seconds per stage in manifest.json "
                   "(makes the manifest non-reproducible)")
    g.add_argument("-v", "--verbose", action="count", default=0)


def _ingest(p: argparse.ArgumentParser, required: bool):
    g = p.add_argument_group("input")
    g.add_argument("--input", "-i", type=Path, required=required, help="review dataset (CSV with header, or JSONL)")
    g.add_argument("--format", choices=FORMATS, default=None, help="input format (default: from file extension)")
    g.add_argument("--text-column", default=None, help="review text column (default: Review, unless "
                   "--sentiment-columns is given)")
    g.add_argument("--rating-column", default=None, help="held-out star rating column, used only after clustering")
    g.add_argument("--sentiment-columns", default=None, metavar="POS,NEU,NEG",
                   help="precomputed proportion columns, in pos,neu,neg order")
    g.add_argument("--rating-scale", type=int, default=5)
    g.add_argument("--id-column", default=None, help="record id column (default: 0-based row index)")


def _sentiment(p: argparse.ArgumentParser):
    g = p.add_argument_group("sentiment and features")
    g.add_argument("--lexicon", type=Path, default=None, help="token<TAB>valence lexicon (default: bundled)")
    g.add_argument("--sentiment-provider", choices=PROVIDERS, default=None,
                   help="default: lexicon for text input, passthrough for sentiment columns")
    g.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    g.add_argument("--angle-mode", choices=ANGLE_MODES, default="paper")


def _cluster(p: argparse.ArgumentParser):
    g = p.add_argument_group("clustering")
    g.add_argument("--eps", type=float, default=0.09)
    g.add_argument("--min-pts", type=int, default=7)
    g.add_argument("--scaling", choices=SCALINGS, default="none")
    g.add_argument("--polarity-mass-threshold", type=float, default=0.05)


def _infer(p: argparse.ArgumentParser):
    g = p.add_argument_group("inference")
    g.add_argument("--mcmc-samples", type=int, default=20000)
    g.add_argument("--burn-in", type=int, default=2000)
    g.add_argument("--chains", type=int, default=4)
    g.add_argument("--thin", type=int, default=2)
    g.add_argument("--hdi-mass", type=float, default=0.94)
    g.add_argument("--tail-hi", type=int, default=4, help="report P(rating >= HI) (default: 4)")
    g.add_argument("--tail-lo", type=int, default=2, help="report P(rating <= LO) (default: 2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omega-rater", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="features, clustering and inference in one go")
    _common(p)
    _ingest(p, required=True)
    _sentiment(p)
    _cluster(p)
    _infer(p)

    p = sub.add_parser("features", help="write features.csv")
    _common(p)
    _ingest(p, required=True)
    _sentiment(p)

    p = sub.add_parser("cluster", help="cluster an existing features.csv")
    _common(p)
    _cluster(p)
    p.add_argument("--features", type=Path, default=None, help="default: OUTPUT_DIR/features.csv")

    p = sub.add_parser("infer", help="rating posteriors for an existing clusters.csv")
    _common(p)
    _ingest(p, required=False)
    _infer(p)
    p.add_argument("--features", type=Path, default=None, help="default: OUTPUT_DIR/features.csv")
    p.add_argument("--clusters", type=Path, default=None, help="default: OUTPUT_DIR/clusters.csv")
    return parser


def _dataset(args) -> DatasetSpec | None:
    if getattr(args, "input", None) is None:
        return None
    fmt = args.format
    if fmt is None:
        fmt = "jsonl" if args.input.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    sent = None
    if args.sentiment_columns:
        sent = tuple(c.strip() for c in args.sentiment_columns.split(","))
        if len(sent) != 3 or not all(sent):
            raise ConfigError("--sentiment-columns takes exactly three names: pos,neu,neg")
    text = args.text_column if args.text_column is not None else (None if sent else "Review")
    return DatasetSpec(path=args.input, format=fmt, text_column=text, rating_column=args.rating_column,
                       sentiment_columns=sent, rating_scale=args.rating_scale, id_column=args.id_column)


def config_from_args(args) -> RunConfig:
    try:
        dbscan = DbscanParams(eps=getattr(args, "eps", 0.09), min_pts=getattr(args, "min_pts", 7),
                              scaling=getattr(args, "scaling", "none"))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    inf = InferenceParams(
        mcmc_samples=getattr(args, "mcmc_samples", 20000),
        burn_in=getattr(args, "burn_in", 2000),
        chains=getattr(args, "chains", 4),
        thin=getattr(args, "thin", 2),
        hdi_mass=getattr(args, "hdi_mass", 0.94),
        tail_hi=getattr(args, "tail_hi", 4),
        tail_lo=getattr(args, "tail_lo", 2),
    )
    return RunConfig(
        output_dir=args.output_dir,
        dataset=_dataset(args),
        provider=getattr(args, "sentiment_provider", None),
        lexicon_path=getattr(args, "lexicon", None),
        epsilon=getattr(args, "epsilon", DEFAULT_EPSILON),
        angle_mode=getattr(args, "angle_mode", "paper"),
        dbscan=dbscan,
        polarity_mass_threshold=getattr(args, "polarity_mass_threshold", 0.05),
        inference=inf,
        seed=args.seed,
        features_path=getattr(args, "features", None),
        clusters_path=getattr(args, "clusters", None),
        record_timings=args.timings,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        manifest = run_pipeline(cfg, STAGES[args.command])
    except StageError as e:
        print(f"omega-rater: error: {e}", file=sys.stderr)
        return e.exit_code
    except OmegaRaterError as e:
        print(f"omega-rater: error: {e}", file=sys.stderr)
        return e.exit_code
    rc = manifest.get("row_counts", {})
    log.info("done: %s", ", ".join(f"{k}={v}" for k, v in rc.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
