"""End-to-end orchestration: ingest -> sentiment -> features -> cluster -> infer.

Each stage can run alone from the files the previous stage wrote, and the
staged sequence produces the same bytes as a single ``run``. All output is
written into a private staging directory first and moved into place only
when the whole invocation succeeds.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import shutil
import tempfile
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .cluster import (NOISE, ClusterAssignment, DbscanParams, dbscan, evaluate_against_ratings,
                      label_polarity)
from .errors import ConfigError, DataError, InvariantError
from .features import DEFAULT_EPSILON, FLAG_NAMES, FeatureRecord, compute_features, feature_vector
from .geometry import ANGLE_MODES, SideLengths
from .inference import RatingCounts, infer_ratings
from .ingest import DatasetSpec, LoadSummary, ReviewRecord, load_dataset
from .sentiment import SentimentTriple, TripleError, load_lexicon, passthrough, score_text

log = logging.getLogger(__name__)

FEATURE_COLUMNS = ["id", "pos", "neu", "neg", "a", "b", "c", "alpha", "beta", "gamma", "omega", "flags"]
CLUSTER_COLUMNS = ["id", "cluster_id", "role", "polarity"]
PROVIDERS = ("lexicon", "passthrough")
THREADS_ENV = "OMEGA_RATER_THREADS"
HIST_BINS = 50


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class InferenceParams:
    mcmc_samples: int = 20000
    burn_in: int = 2000
    chains: int = 4
    thin: int = 2
    hdi_mass: float = 0.94
    tail_hi: int = 4
    tail_lo: int = 2


@dataclass
class RunConfig:
    output_dir: Path
    dataset: DatasetSpec | None = None
    provider: str | None = None  # None: follow the dataset (text -> lexicon, columns -> passthrough)
    lexicon_path: Path | None = None
    epsilon: float = DEFAULT_EPSILON
    angle_mode: str = "paper"
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    polarity_mass_threshold: float = 0.05
    inference: InferenceParams = field(default_factory=InferenceParams)
    seed: int = 42
    features_path: Path | None = None
    clusters_path: Path | None = None
    record_timings: bool = False

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.provider is not None and self.provider not in PROVIDERS:
            raise ConfigError(f"sentiment provider must be one of {PROVIDERS}")
        if self.angle_mode not in ANGLE_MODES:
            raise ConfigError(f"angle mode must be one of {ANGLE_MODES}")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if not 0 <= self.polarity_mass_threshold <= 1:
            raise ConfigError("polarity mass threshold must lie in [0, 1]")
        inf = self.inference
        if not 0 < inf.hdi_mass < 1:
            raise ConfigError("hdi mass must lie in (0, 1)")
        if inf.mcmc_samples < 1 or inf.chains < 1 or inf.thin < 1 or inf.burn_in < 0:
            raise ConfigError("mcmc samples, chains and thin must be >= 1 and burn-in >= 0")
        scale = self.dataset.rating_scale if self.dataset else 5
        for name, v in (("tail-hi", inf.tail_hi), ("tail-lo", inf.tail_lo)):
            if not 1 <= v <= scale:
                raise ConfigError(f"--{name} {v} outside 1..{scale}")

    @property
    def rating_scale(self) -> int:
        return self.dataset.rating_scale if self.dataset else 5


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic per-stage/per-cluster seed from the top-level seed."""
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def thread_count() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
        return max(1, n)
    return max(1, min(4, os.cpu_count() or 1))


def parallel_map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Order-preserving map over chunks of ``items``."""
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) < 1024:
        return [fn(x) for x in items]
    size = -(-len(items) // (threads * 4))
    chunks = [items[i:i + size] for i in range(0, len(items), size)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda chunk: [fn(x) for x in chunk], chunks)
    return [y for part in parts for y in part]


# --- output staging --------------------------------------------------------

class OutputTree:
    """Collects files in a staging directory; ``commit`` moves them into ``root``."""

    def __init__(self, root: Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            self.staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.root))
        except OSError as e:
            raise ConfigError(f"output directory {self.root} is not writable: {e}") from None
        self.files: list[str] = []
        self.stale_globs: list[str] = []

    def path(self, rel: str) -> Path:
        p = self.staging / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.files:
            self.files.append(rel)
        return p

    def write_text(self, rel: str, text: str):
        with open(self.path(rel), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    def write_json(self, rel: str, obj):
        self.write_text(rel, json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")

    def write_csv(self, rel: str, header: Sequence[str], rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.write_text(rel, buf.getvalue())

    def existing(self, rel: str) -> Path | None:
        """Staged file if present, else the committed one, else None."""
        for base in (self.staging, self.root):
            if (base / rel).is_file():
                return base / rel
        return None

    def commit(self):
        # per-cluster files left over from an earlier run with different clusters
        for pattern in self.stale_globs:
            for old in self.root.glob(pattern):
                if old.relative_to(self.root).as_posix() not in self.files:
                    old.unlink()
        for rel in self.files:
            dst = self.root / rel
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(self.staging / rel, dst)
        shutil.rmtree(self.staging, ignore_errors=True)

    def abort(self):
        shutil.rmtree(self.staging, ignore_errors=True)


class StageError(Exception):
    """Wraps a fatal error with the name of the stage it happened in."""

    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {err}")
        self.stage = stage
        self.err = err
        self.exit_code = getattr(err, "exit_code", 3)


# --- manifest --------------------------------------------------------------

def _new_manifest() -> dict:
    return {"tool": "omega-rater", "version": __version__, "stages": {}}


def _load_manifest(out: OutputTree, fresh: bool) -> dict:
    if fresh:
        return _new_manifest()
    p = out.existing("manifest.json")
    if p is None:
        return _new_manifest()
    try:
        m = json.loads(p.read_text("utf-8"))
    except (OSError, json.JSONDecodeError):
        return _new_manifest()
    m.setdefault("stages", {})
    return m


def _dataset_echo(spec: DatasetSpec | None) -> dict | None:
    if spec is None:
        return None
    return {
        "path": str(spec.path),
        "format": spec.format,
        "text_column": spec.text_column,
        "rating_column": spec.rating_column,
        "sentiment_columns": list(spec.sentiment_columns) if spec.sentiment_columns else None,
        "rating_scale": spec.rating_scale,
        "id_column": spec.id_column,
    }


def flag_frequencies(features: Sequence[FeatureRecord]) -> dict:
    counts = Counter(f for rec in features for f in rec.flags)
    out = {name: counts.get(name, 0) for name in FLAG_NAMES}
    out["records_with_any_flag"] = sum(1 for rec in features if rec.flags)
    return out


# --- stage: features -------------------------------------------------------

def load_records(cfg: RunConfig) -> tuple[list[ReviewRecord], LoadSummary]:
    if cfg.dataset is None:
        raise ConfigError("no input dataset given (--input)")
    return load_dataset(cfg.dataset)


def _provider_for(cfg: RunConfig, summary: LoadSummary) -> str:
    natural = "passthrough" if summary.mode == "precomputed" else "lexicon"
    if summary.mode is None:  # empty file
        return cfg.provider or natural
    if cfg.provider is not None and cfg.provider != natural:
        raise ConfigError(f"--sentiment-provider {cfg.provider} does not match the dataset "
                          f"({'sentiment columns' if natural == 'passthrough' else 'text column'})")
    return natural


def score_records(records: Sequence[ReviewRecord], provider: str, lexicon=None) -> list[tuple[str, SentimentTriple]]:
    if provider == "passthrough":
        def one(rec):
            return rec.id, passthrough(rec)
    else:
        if lexicon is None:
            raise ConfigError("lexicon provider needs a lexicon")

        def one(rec):
            return rec.id, score_text(rec.text or "", lexicon)
    return parallel_map(one, records)


def featurize(triples: Sequence[tuple[str, SentimentTriple]], epsilon: float = DEFAULT_EPSILON,
              angle_mode: str = "paper") -> list[FeatureRecord]:
    return parallel_map(lambda it: compute_features(it[0], it[1], epsilon, angle_mode), triples)


def feature_rows(features: Sequence[FeatureRecord]):
    for r in features:
        t, s = r.triple, r.sides
        yield [r.id, fmt(t.pos), fmt(t.neu), fmt(t.neg), fmt(s.a), fmt(s.b), fmt(s.c),
               fmt(r.alpha), fmt(r.beta), fmt(r.gamma), fmt(r.omega), ";".join(sorted(r.flags))]


def run_features(cfg: RunConfig, out: OutputTree, manifest: dict):
    t0 = time.perf_counter()
    records, summary = load_records(cfg)
    provider = _provider_for(cfg, summary)
    lexicon = None
    if provider == "lexicon":
        try:
            lexicon = load_lexicon(cfg.lexicon_path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot load lexicon: {e}") from None
    try:
        triples = score_records(records, provider, lexicon)
    except TripleError as e:
        raise DataError(str(e)) from None
    features = featurize(triples, cfg.epsilon, cfg.angle_mode)
    out.write_csv("features.csv", FEATURE_COLUMNS, feature_rows(features))
    section = {
        "dataset": _dataset_echo(cfg.dataset),
        "sentiment_provider": provider,
        "lexicon": str(cfg.lexicon_path) if cfg.lexicon_path else ("bundled" if provider == "lexicon" else None),
        "epsilon": cfg.epsilon,
        "angle_mode": cfg.angle_mode,
        "load": summary.to_dict(),
        "rows_out": len(features),
        "flag_frequencies": flag_frequencies(features),
    }
    if cfg.record_timings:
        section["wall_clock_s"] = time.perf_counter() - t0
    manifest["stages"]["features"] = section
    return records, features


def read_features(path: Path) -> list[FeatureRecord]:
    rows = _read_csv_checked(path, FEATURE_COLUMNS)
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            triple = SentimentTriple(float(row["pos"]), float(row["neu"]), float(row["neg"]))
            sides = SideLengths(float(row["a"]), float(row["b"]), float(row["c"]))
            flags = frozenset(f for f in row["flags"].split(";") if f)
            unknown = flags - set(FLAG_NAMES)
            if unknown:
                raise ValueError(f"unknown flags {sorted(unknown)}")
            out.append(FeatureRecord(row["id"], triple, sides, float(row["alpha"]), float(row["beta"]),
                                     float(row["gamma"]), float(row["omega"]), flags))
        except (ValueError, TripleError) as e:
            raise DataError(f"{path}: line {lineno}: {e}") from None
    return out


def _read_csv_checked(path: Path, expected: Sequence[str]) -> list[dict]:
    if not Path(path).is_file():
        raise ConfigError(f"file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file, expected header {expected}")
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        if missing or extra:
            parts = []
            if missing:
                parts.append(f"missing column(s) {missing}")
            if extra:
                parts.append(f"unexpected column(s) {extra}")
            raise DataError(f"{path}: schema mismatch: " + "; ".join(parts))
        rows = []
        for lineno, values in enumerate(reader, start=2):
            if len(values) != len(header):
                raise DataError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(values)}")
            rows.append(dict(zip(header, values)))
    return rows


# --- stage: cluster --------------------------------------------------------

def run_cluster(cfg: RunConfig, out: OutputTree, manifest: dict, features: Sequence[FeatureRecord]):
    t0 = time.perf_counter()
    assignments = dbscan([feature_vector(r) for r in features], cfg.dbscan, ids=[r.id for r in features])
    assignments = label_polarity(assignments, features, cfg.polarity_mass_threshold)
    out.write_csv("clusters.csv", CLUSTER_COLUMNS,
                  ([a.id, a.cluster_id, a.role, a.polarity] for a in assignments))
    out.write_csv("plotdata/feature_space.csv", ["id", "a", "c", "omega", "cluster_id", "polarity"],
                  ([r.id, fmt(r.sides.a), fmt(r.sides.c), fmt(r.omega), a.cluster_id, a.polarity]
                   for r, a in zip(features, assignments)))
    out.write_csv("plotdata/cluster_simplex.csv", ["id", "pos", "neu", "neg", "cluster_id", "polarity"],
                  ([r.id, fmt(r.triple.pos), fmt(r.triple.neu), fmt(r.triple.neg), a.cluster_id, a.polarity]
                   for r, a in zip(features, assignments)))
    sizes = Counter(a.cluster_id for a in assignments)
    polarity = {str(a.cluster_id): a.polarity for a in assignments if a.cluster_id != NOISE}
    section = {
        "eps": cfg.dbscan.eps,
        "min_pts": cfg.dbscan.min_pts,
        "scaling": cfg.dbscan.scaling,
        "polarity_mass_threshold": cfg.polarity_mass_threshold,
        "rows_in": len(features),
        "rows_out": len(assignments),
        "n_clusters": len([c for c in sizes if c != NOISE]),
        "cluster_sizes": {str(c): sizes[c] for c in sorted(sizes)},
        "roles": dict(sorted(Counter(a.role for a in assignments).items())),
        "polarity": dict(sorted(polarity.items(), key=lambda kv: int(kv[0]))),
    }
    if cfg.record_timings:
        section["wall_clock_s"] = time.perf_counter() - t0
    manifest["stages"]["cluster"] = section
    return assignments


def read_clusters(path: Path) -> list[ClusterAssignment]:
    rows = _read_csv_checked(path, CLUSTER_COLUMNS)
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            out.append(ClusterAssignment(row["id"], int(row["cluster_id"]), row["role"], row["polarity"]))
        except ValueError as e:
            raise DataError(f"{path}: line {lineno}: {e}") from None
    return out


# --- stage: infer ----------------------------------------------------------

def run_infer(cfg: RunConfig, out: OutputTree, manifest: dict, assignments: Sequence[ClusterAssignment],
              features: Sequence[FeatureRecord] | None, records: Sequence[ReviewRecord] | None):
    t0 = time.perf_counter()
    ratings = {r.id: r.rating for r in records or () if r.rating is not None}
    scale = cfg.rating_scale
    inf = cfg.inference
    clusters = sorted({a.cluster_id for a in assignments if a.cluster_id != NOISE})
    by_cluster: dict[int, list[int]] = {c: [] for c in clusters}
    for a in assignments:
        if a.cluster_id != NOISE and a.id in ratings:
            by_cluster[a.cluster_id].append(ratings[a.id])
    polarity = {a.cluster_id: a.polarity for a in assignments}

    out.stale_globs += ["posterior_*.json", "samples_*.csv", "plotdata/posterior_hist_*.csv",
                        "plotdata/rating_simplex.csv"]
    report = evaluate_against_ratings(assignments, ratings, scale)
    out.write_json("cluster_evaluation.json", report)

    if features is not None and ratings:
        out.write_csv("plotdata/rating_simplex.csv", ["id", "pos", "neu", "neg", "rating"],
                      ([r.id, fmt(r.triple.pos), fmt(r.triple.neu), fmt(r.triple.neg), ratings[r.id]]
                       for r in features if r.id in ratings))

    posteriors = {}
    for cid in clusters:
        if not ratings:
            out.write_json(f"posterior_{cid}.json",
                           {"cluster_id": cid, "polarity": polarity[cid], "status": "unavailable: no ratings"})
            continue
        counts = RatingCounts.from_ratings(by_cluster[cid], scale)
        seed = derive_seed(cfg.seed, 3, cid)
        post = infer_ratings(counts, hdi_mass=inf.hdi_mass, hi=inf.tail_hi, lo=inf.tail_lo,
                             n_samples=inf.mcmc_samples, burn_in=inf.burn_in, seed=seed,
                             n_chains=inf.chains, thin=inf.thin)
        doc = {"cluster_id": cid, "polarity": polarity[cid], "status": "ok",
               "top_level_seed": cfg.seed, **post.to_dict()}
        out.write_json(f"posterior_{cid}.json", doc)
        samples = post.samples
        out.write_csv(f"samples_{cid}.csv", [f"theta_{r}" for r in range(1, scale + 1)],
                      ([fmt(x) for x in row] for row in samples))
        edges = np.linspace(0.0, 1.0, HIST_BINS + 1)
        hist_rows = []
        for r in range(scale):
            dens, _ = np.histogram(samples[:, r], bins=edges, density=True)
            hist_rows.extend([r + 1, fmt(edges[i]), fmt(edges[i + 1]), fmt(dens[i])] for i in range(HIST_BINS))
        out.write_csv(f"plotdata/posterior_hist_{cid}.csv", ["rating", "bin_lo", "bin_hi", "density"], hist_rows)
        posteriors[str(cid)] = {
            "n": counts.n,
            "p_rating_ge_hi": post.tail_probs["analytic"]["p_rating_ge_hi"],
            "p_rating_le_lo": post.tail_probs["analytic"]["p_rating_le_lo"],
        }

    section = {
        "seed": cfg.seed,
        "mcmc_samples": inf.mcmc_samples,
        "burn_in": inf.burn_in,
        "chains": inf.chains,
        "thin": inf.thin,
        "hdi_mass": inf.hdi_mass,
        "tail_hi": inf.tail_hi,
        "tail_lo": inf.tail_lo,
        "rows_in": len(assignments),
        "rows_rated": sum(len(v) for v in by_cluster.values()),
        "ratings_available": bool(ratings),
        "posteriors": posteriors,
    }
    if cfg.record_timings:
        section["wall_clock_s"] = time.perf_counter() - t0
    manifest["stages"]["infer"] = section


# --- entry points ----------------------------------------------------------

def _finish_manifest(manifest: dict):
    st = manifest["stages"]
    counts = {}
    if "features" in st:
        counts["rows_read"] = st["features"]["load"]["rows_read"]
        counts["records_loaded"] = st["features"]["load"]["records"]
        counts["features"] = st["features"]["rows_out"]
    if "cluster" in st:
        counts["clustered"] = st["cluster"]["rows_out"]
    if "infer" in st:
        counts["rated_in_clusters"] = st["infer"]["rows_rated"]
    vals = list(counts.values())
    if any(b > a for a, b in zip(vals, vals[1:])):
        raise InvariantError(f"row counts increase through the pipeline: {counts}")
    manifest["row_counts"] = counts


def _stage(name: str, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except (ConfigError, DataError, InvariantError) as e:
        raise StageError(name, e) from e
    except Exception as e:  # anything else is a bug in this package
        raise StageError(name, InvariantError(f"{type(e).__name__}: {e}")) from e


def run_pipeline(cfg: RunConfig, stages: Sequence[str] = ("features", "cluster", "infer")) -> dict:
    """Run the requested stages and return the manifest.

    Missing upstream inputs are read from ``cfg.features_path`` /
    ``cfg.clusters_path`` or from the output directory.
    """
    out = OutputTree(cfg.output_dir)
    try:
        manifest = _load_manifest(out, fresh="features" in stages)
        records = features = assignments = None
        if "features" in stages:
            records, features = _stage("features", run_features, cfg, out, manifest)
        if "cluster" in stages:
            if features is None:
                features = _stage("cluster", lambda: read_features(_upstream(cfg.features_path, out, "features.csv")))
            assignments = _stage("cluster", run_cluster, cfg, out, manifest, features)
        if "infer" in stages:
            if assignments is None:
                assignments = _stage("infer", lambda: read_clusters(_upstream(cfg.clusters_path, out, "clusters.csv")))
            if features is None:
                fp = cfg.features_path or out.existing("features.csv")
                features = _stage("infer", read_features, fp) if fp else None
            if records is None and cfg.dataset is not None and cfg.dataset.rating_column is not None:
                records, _ = _stage("infer", load_records, cfg)
            _stage("infer", run_infer, cfg, out, manifest, assignments, features, records)
        _stage("manifest", _finish_manifest, manifest)
        out.write_json("manifest.json", manifest)
        out.commit()
    except BaseException:
        out.abort()
        raise
    return manifest


def _upstream(explicit: Path | None, out: OutputTree, name: str) -> Path:
    if explicit is not None:
        return Path(explicit)
    p = out.existing(name)
    if p is None:
        raise ConfigError(f"no {name} found in {out.root}; run the previous stage or pass its path")
    return p
