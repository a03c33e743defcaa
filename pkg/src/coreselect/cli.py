"""Command-line pipeline: generate -> reduce -> cluster -> sample -> evaluate.

Every stage writes its outputs under the configured output directory and
records a digest of its inputs in ``state.json``; re-running a stage with
unchanged inputs is a no-op. All diagnostics go to stderr, all data to
files (or stdout with ``--stdout``). Exit codes: 0 success, 2 config
error, 3 data error, 4 numeric/degenerate error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import data_model, evaluate, kmedoids, pca, sampler, synthetic
from .errors import ConfigError, DataError, NumericError

log = logging.getLogger("coreselect")

STATE_VERSION = 1

DEFAULTS = {
    "pca_threshold": 0.95,
    "k_range": [2, 8],
    "metric": "euclidean",
    "split_fraction": 0.7,
    "split_seed": 0,
    "stratified": True,
    "fractions": [0.2],
    "methods": ["random", "intelligent"],
    "seeds": [0],
    "allocation": "equal",
    "class_allocation": "proportional",
    "knn_k": 5,
    "max_iter": 100,
    "cluster_seed": 0,
}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CORESELECT_WORKERS", "1")))
    except ValueError:
        return 1


def _map_maybe_parallel(fn, items):
    w = _workers()
    if w <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))


def load_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
        cfg.update(doc)
    if getattr(args, "pca_threshold", None) is not None:
        cfg["pca_threshold"] = args.pca_threshold
    if getattr(args, "k_range", None):
        parts = args.k_range.split(",")
        if len(parts) != 2:
            raise ConfigError(f"--k-range expects 'min,max', got {args.k_range!r}")
        cfg["k_range"] = [int(parts[0]), int(parts[1])]
    if getattr(args, "fraction", None) is not None:
        cfg["fractions"] = [args.fraction]
    if getattr(args, "method", None):
        cfg["methods"] = [args.method]
    if getattr(args, "seed", None) is not None:
        cfg["seeds"] = [args.seed]
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if "out" not in cfg:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    if "manifest" not in cfg:
        raise ConfigError("config must name the input 'manifest'")
    for f in cfg["fractions"]:
        if not 0.0 < f <= 1.0:
            raise ConfigError(f"fraction must be in (0,1], got {f}")
    if not Path(cfg["manifest"]).exists():
        raise ConfigError(f"manifest not found: {cfg['manifest']}")
    return cfg


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, Path):
            h.update(p.read_bytes())
        else:
            h.update(json.dumps(p, sort_keys=True).encode())
        h.update(b"\0")
    return h.hexdigest()


class State:
    """JSON-indexed pipeline state living in the output directory."""

    def __init__(self, out_dir: Path):
        self.out = out_dir
        self.path = out_dir / "state.json"
        if self.path.exists():
            try:
                doc = json.loads(self.path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                raise DataError(f"corrupted state file: {self.path}") from None
            if doc.get("version") != STATE_VERSION:
                raise DataError(f"unsupported state version in {self.path}")
            self.doc = doc
        else:
            self.doc = {"version": STATE_VERSION, "stages": {}}

    def fresh(self, stage: str, digest: str, outputs: list[str]) -> bool:
        rec = self.doc["stages"].get(stage)
        return (rec is not None and rec["digest"] == digest
                and all((self.out / p).exists() for p in rec["outputs"])
                and rec["outputs"] == outputs)

    def record(self, stage: str, digest: str, outputs: list[str]) -> None:
        self.doc["stages"][stage] = {"digest": digest, "outputs": outputs}
        self.path.write_text(json.dumps(self.doc, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")

    def require(self, stage: str) -> dict:
        rec = self.doc["stages"].get(stage)
        if rec is None:
            raise ConfigError(f"stage {stage!r} has not been run in {self.out}")
        return rec


def cmd_generate(args) -> None:
    spec, exact = synthetic.spec_from_json(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    m, truth = synthetic.generate(spec, exact_counts=exact)
    fmt = args.format
    emb = out / ("embeddings.csv" if fmt == "csv" else "embeddings.bin")
    data_model.save_embeddings(m, emb, format=fmt)
    data_model.save_manifest(out / "manifest.json", dataset=args.name,
                             class_names=m.class_names, embedding_path=emb.name,
                             dim=m.dim, n=m.n,
                             provenance=f"synthetic mixture seed={spec.seed}")
    with (out / "ground_truth.csv").open("w", encoding="utf-8", newline="\n") as f:
        f.write("id,cluster\n")
        for i in m.ids:
            f.write(f"{int(i)},{truth[int(i)]}\n")
    log.info("generated %d samples, %d classes, d=%d -> %s", m.n, len(m.class_names), m.dim, out)
    if args.stdout:
        sys.stdout.write((out / "manifest.json").read_text(encoding="utf-8"))


def _load_dataset(cfg) -> tuple[data_model.EmbeddingMatrix, Path]:
    manifest_path = Path(cfg["manifest"])
    manifest = data_model.load_manifest(manifest_path)
    emb_path = manifest_path.parent / manifest["embedding_path"]
    if not emb_path.exists():
        raise ConfigError(f"embedding file not found: {emb_path}")
    return data_model.load_embeddings(emb_path), emb_path


def cmd_reduce(args) -> None:
    cfg = load_config(args)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    state = State(out)
    m, emb_path = _load_dataset(cfg)
    digest = _digest(emb_path, {k: cfg[k] for k in
                                ("pca_threshold", "split_fraction", "split_seed", "stratified")})
    outputs = ["pca_model.bin", "reduced_train.bin", "reduced_test.bin"]
    if state.fresh("reduce", digest, outputs):
        log.info("reduce: up to date, skipping")
        return
    spec = data_model.SplitSpec(train_fraction=cfg["split_fraction"],
                                seed=cfg["split_seed"], stratified=cfg["stratified"])
    train, test = data_model.split(m, spec)
    model, red_train = pca.fit_transform(train, cfg["pca_threshold"])
    red_test = pca.transform(model, test)
    with (out / "pca_model.bin").open("wb") as f:
        pca.save_model(model, f)
    data_model.save_embeddings(red_train, out / "reduced_train.bin", format="binary")
    data_model.save_embeddings(red_test, out / "reduced_test.bin", format="binary")
    state.record("reduce", digest, outputs)
    cumvar = float(model.explained_ratio[-1])
    log.info("pca: retained k=%d cumulative_variance=%s", model.retained, repr(cumvar))
    if args.stdout:
        sys.stdout.write(f"k={model.retained} cumulative_variance={repr(cumvar)}\n")


def _load_clusterings(out: Path) -> dict[int, kmedoids.ClassClustering]:
    doc = json.loads((out / "clusters.json").read_text(encoding="utf-8"))
    clusterings = {}
    for key, c in doc["classes"].items():
        ci = int(key)
        sil = c["per_cluster_silhouette"]
        clusterings[ci] = kmedoids.ClassClustering(
            class_index=ci,
            ids=np.array(c["ids"], dtype=np.int64),
            assignment=np.array(c["assignment"], dtype=np.int64),
            medoid_ids=np.array(c["medoid_ids"], dtype=np.int64),
            k=c["k"],
            mean_silhouette=c["mean_silhouette"],
            per_cluster_silhouette=None if sil is None else np.array(sil),
            fallback=c["fallback"])
    return clusterings


def cmd_cluster(args) -> None:
    cfg = load_config(args)
    out = Path(cfg["out"])
    state = State(out)
    state.require("reduce")
    digest = _digest(out / "reduced_train.bin",
                     {k: cfg[k] for k in ("k_range", "metric", "max_iter", "cluster_seed")})
    outputs = ["clusters.json", "cluster_report.csv"]
    if state.fresh("cluster", digest, outputs):
        log.info("cluster: up to date, skipping")
        return
    train = data_model.load_embeddings(out / "reduced_train.bin")
    config = kmedoids.ClusterConfig(k_range=tuple(cfg["k_range"]), metric=cfg["metric"],
                                    seed=cfg["cluster_seed"], max_iter=cfg["max_iter"])
    by_class = data_model.partition_by_class(train)
    items = sorted(by_class.items())
    results = _map_maybe_parallel(lambda it: kmedoids.cluster_class(it[1], config), items)
    clusterings = {}
    for (ci, sub), (_, cc) in zip(items, results):
        if cc.fallback:
            name = train.class_names[ci] if train.class_names else str(ci)
            log.warning("class %s has only %d samples; falling back to a single cluster",
                        name, sub.n)
        clusterings[ci] = cc
    doc = {"classes": {
        str(ci): {
            "ids": cc.ids.tolist(),
            "assignment": cc.assignment.tolist(),
            "medoid_ids": cc.medoid_ids.tolist(),
            "k": cc.k,
            "mean_silhouette": cc.mean_silhouette,
            "per_cluster_silhouette": None if cc.per_cluster_silhouette is None
            else cc.per_cluster_silhouette.tolist(),
            "fallback": cc.fallback,
        } for ci, cc in sorted(clusterings.items())}}
    (out / "clusters.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    kmedoids.write_cluster_report(clusterings, out / "cluster_report.csv", train.class_names)
    state.record("cluster", digest, outputs)
    for ci, cc in sorted(clusterings.items()):
        log.info("class %d: k=%d sizes=%s", ci, cc.k, cc.cluster_sizes.tolist())
    if args.stdout:
        sys.stdout.write((out / "cluster_report.csv").read_text(encoding="utf-8"))


def _selection_name(method: str, fraction: float, seed: int) -> str:
    return f"{method}_f{fraction:g}_s{seed}"


def cmd_sample(args) -> None:
    cfg = load_config(args)
    out = Path(cfg["out"])
    state = State(out)
    state.require("reduce")
    need_clusters = "intelligent" in cfg["methods"]
    inputs = [out / "reduced_train.bin"]
    if need_clusters:
        state.require("cluster")
        inputs.append(out / "clusters.json")
    digest = _digest(*inputs, {k: cfg[k] for k in
                               ("fractions", "methods", "seeds", "allocation",
                                "class_allocation")})
    names = [_selection_name(m, f, s)
             for m in cfg["methods"] for f in cfg["fractions"] for s in cfg["seeds"]]
    outputs = []
    for n in names:
        outputs += [f"selections/{n}.csv", f"selections/{n}.json", f"selections/{n}_report.csv"]
    if state.fresh("sample", digest, outputs):
        log.info("sample: up to date, skipping")
        return
    train = data_model.load_embeddings(out / "reduced_train.bin")
    clusterings = _load_clusterings(out) if (out / "clusters.json").exists() else None
    (out / "selections").mkdir(exist_ok=True)
    for method in cfg["methods"]:
        for fraction in cfg["fractions"]:
            n = min(train.n, max(1, int(np.floor(fraction * train.n + 0.5))))
            for seed in cfg["seeds"]:
                if method == "random":
                    sel = sampler.random_sample(train, n, seed=seed)
                elif method == "intelligent":
                    if clusterings is None:
                        raise ConfigError("intelligent sampling requires the cluster stage")
                    sel = sampler.intelligent_sample(
                        train, clusterings, n, allocation=cfg["allocation"],
                        class_allocation=cfg["class_allocation"], seed=seed)
                else:
                    raise ConfigError(f"unknown method {method!r}")
                base = out / "selections" / _selection_name(method, fraction, seed)
                sampler.save_selection(sel, train, clusterings, Path(str(base) + ".csv"))
                if clusterings:
                    rows = sampler.representation_report(sel, clusterings)
                    sampler.write_representation_report(
                        rows, Path(str(base) + "_report.csv"), train.class_names)
                else:
                    Path(str(base) + "_report.csv").write_text(
                        "class,cluster,source_size,selected,rate,rs_expected\n",
                        encoding="utf-8")
                log.info("selection %s: %d ids", base.name, len(sel.ids))
    state.record("sample", digest, outputs)
    if args.stdout:
        for n in names:
            sys.stdout.write((out / "selections" / f"{n}.csv").read_text(encoding="utf-8"))


def cmd_evaluate(args) -> None:
    cfg = load_config(args)
    out = Path(cfg["out"])
    state = State(out)
    state.require("reduce")
    state.require("cluster")
    digest = _digest(out / "reduced_train.bin", out / "reduced_test.bin", out / "clusters.json",
                     {k: cfg[k] for k in ("fractions", "methods", "seeds", "allocation",
                                          "class_allocation", "knn_k")})
    outputs = ["eval_rows.csv", "eval_report.json", "eval_long.csv"]
    if state.fresh("evaluate", digest, outputs):
        log.info("evaluate: up to date, skipping")
        return
    train = data_model.load_embeddings(out / "reduced_train.bin")
    test = data_model.load_embeddings(out / "reduced_test.bin")
    clusterings = _load_clusterings(out)

    def one(fraction):
        return evaluate.compare(train, test, clusterings, [fraction], cfg["seeds"],
                                methods=tuple(cfg["methods"]), knn_k=cfg["knn_k"],
                                allocation=cfg["allocation"],
                                class_allocation=cfg["class_allocation"])

    rows = [r for chunk in _map_maybe_parallel(one, list(cfg["fractions"])) for r in chunk]
    evaluate.write_comparison_csv(rows, out / "eval_rows.csv")
    evaluate.write_comparison_json(rows, out / "eval_report.json")
    agg = evaluate.aggregate(rows)
    with (out / "eval_long.csv").open("w", encoding="utf-8", newline="\n") as f:
        f.write("method,fraction,metric,mean,stddev\n")
        for (method, fraction), stats in sorted(agg.items()):
            for metric, (mean, std) in sorted(stats.items()):
                f.write(f"{method},{repr(fraction)},{metric},{repr(mean)},{repr(std)}\n")
    state.record("evaluate", digest, outputs)
    for (method, fraction), stats in sorted(agg.items()):
        log.info("%s f=%g: accuracy=%.4f+-%.4f", method, fraction,
                 stats["accuracy"][0], stats["accuracy"][1])
    if args.stdout:
        sys.stdout.write((out / "eval_long.csv").read_text(encoding="utf-8"))


def cmd_pipeline(args) -> None:
    cmd_reduce(args)
    cmd_cluster(args)
    cmd_sample(args)
    cmd_evaluate(args)


def cmd_inspect(args) -> None:
    out = Path(args.out if args.out else load_config(args)["out"])
    state = State(out)
    lines = [f"state: {state.path}"]
    for stage in ("reduce", "cluster", "sample", "evaluate"):
        rec = state.doc["stages"].get(stage)
        if rec is None:
            lines.append(f"  {stage}: not run")
        else:
            lines.append(f"  {stage}: digest={rec['digest'][:12]} outputs={len(rec['outputs'])}")
    sys.stdout.write("\n".join(lines) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coreselect",
                                description="Cluster-aware coreset selection pipeline")
    p.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")
    p.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic mixture dataset")
    g.add_argument("--spec", required=True, help="mixture spec JSON file")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--format", choices=["csv", "binary"], default="binary")
    g.add_argument("--name", default="synthetic")
    g.add_argument("--stdout", action="store_true")
    g.set_defaults(func=cmd_generate)

    def stage(name, help_text, func):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="pipeline config JSON")
        s.add_argument("--out", help="output directory override")
        s.add_argument("--pca-threshold", type=float, dest="pca_threshold")
        s.add_argument("--k-range", dest="k_range", help="e.g. 2,8")
        s.add_argument("--fraction", type=float)
        s.add_argument("--method", choices=["random", "intelligent"])
        s.add_argument("--seed", type=int)
        s.add_argument("--stdout", action="store_true")
        s.set_defaults(func=func)
        return s

    stage("reduce", "split and PCA-reduce the dataset", cmd_reduce)
    stage("cluster", "per-class K-Medoids clustering", cmd_cluster)
    stage("sample", "build RS/IS coreset selections", cmd_sample)
    stage("evaluate", "score coresets with a k-NN classifier", cmd_evaluate)
    stage("pipeline", "run reduce, cluster, sample, evaluate", cmd_pipeline)
    i = stage("inspect", "print the pipeline state summary", cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else (
        logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ConfigError as e:
        log.error("%s", e)
        return 2
    except NumericError as e:
        log.error("%s", e)
        return 4
    except DataError as e:
        log.error("%s", e)
        return 3
    except OSError as e:
        log.error("%s", e)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
