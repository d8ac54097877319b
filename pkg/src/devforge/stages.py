"""Experiment stages. Each reads the previous stage's files and writes its own,
so any stage can be re-run on its own."""

from __future__ import annotations

import json
import logging
import shutil
import warnings
from pathlib import Path

import numpy as np
from sklearn.pipeline import make_pipeline
from sklearn.feature_selection import VarianceThreshold
from sklearn.preprocessing import StandardScaler

from . import corpus as corpus_mod
from .config import PIPELINES, RunConfig
from .corpus import ROLES, RoleLabel
from .errors import DevforgeError, OOVOnly, RankDeficient
from .evaluation import (
    MajorityClassifier,
    SoftmaxRegression,
    TfidfBagOfWords,
    inter_intra_matrix,
    macro_weighted_metrics,
    split,
    write_matrix_csv,
    write_report,
)
from .jsonl import read_jsonl, write_jsonl
from .miner import GitHubClient, mine
from .pipelines import (
    ExpertiseVector,
    Source,
    concat_all,
    embed_apis,
    infer_source_vectors,
    read_vectors,
    reduce_rias,
    save_pca,
    write_vectors,
)
from .pv import load, save, train

logger = logging.getLogger(__name__)

SPLIT_FILE = "split.json"
VECTORS_FILE = "vectors.jsonl"
RIAS_FILE = "rias.jsonl"
PREDICTIONS_FILE = "predictions.jsonl"
REPORT_FILE = "report.json"
SOURCE_OF = {"repos": Source.Repos, "issues": Source.Issues, "apis": Source.APIs}


class StageError(DevforgeError):
    pass


def _model_path(cfg, pipeline):
    return cfg.path("model_dir") / f"{pipeline}.model"


def _read_split(cfg):
    path = cfg.path("model_dir") / SPLIT_FILE
    if not path.exists():
        raise StageError(f"{path} not found; run the train stage first")
    return json.loads(path.read_text())


def _roles(cfg):
    return corpus_mod.read_developers(cfg.path("corpus_dir") / corpus_mod.DEVELOPERS_FILE)


def stage_mine(cfg: RunConfig, fixtures=None, workers=1):
    mining = cfg.raw["mining"]
    if fixtures:
        developers_file = Path(fixtures) / corpus_mod.DEVELOPERS_FILE
        client = GitHubClient.from_fixtures(fixtures)
    else:
        developers_file = cfg.raw["paths"]["developers_file"]
        if not developers_file:
            raise StageError("paths.developers_file is required to mine without --fixtures")
        client = GitHubClient(requests_per_second=mining["requests_per_second"])
    logins = list(corpus_mod.read_developers(developers_file))
    out = cfg.path("mined_dir")
    with client:
        stats = mine(logins, out, client, sources=tuple(mining["sources"]), since=mining["since"],
                     workers=workers, byte_cap=mining["byte_cap"])
    shutil.copyfile(developers_file, out / corpus_mod.DEVELOPERS_FILE)
    extra = ", ".join(f"{k}={v}" for k, v in sorted(stats.items()))
    return f"mine: {len(logins)} developers -> {out}" + (f" ({extra})" if extra else "")


def stage_ingest(cfg: RunConfig):
    mined = cfg.path("mined_dir")
    counts = corpus_mod.ingest(mined, mined / corpus_mod.DEVELOPERS_FILE, cfg.path("corpus_dir"))
    return ("ingest: {developers} developers, {repos} repo docs, {issues} issue docs, "
            "{apis} API multisets ({api_failures} extraction failures)").format(**counts)


def _docs(cfg, pipeline):
    path = cfg.path("corpus_dir") / corpus_mod.DOC_FILES[pipeline]
    return corpus_mod.read_documents(path) if path.exists() else {}


def stage_train(cfg: RunConfig):
    roles = _roles(cfg)
    docs = {p: _docs(cfg, p) for p in PIPELINES}
    labelled = {d: r for d, r in roles.items() if r is not None and any(d in docs[p] for p in PIPELINES)}
    train_ids, val_ids, test_ids = split(labelled, cfg.split_plan)
    model_dir = cfg.path("model_dir")
    model_dir.mkdir(parents=True, exist_ok=True)
    (model_dir / SPLIT_FILE).write_text(
        json.dumps({"train": train_ids, "val": val_ids, "test": test_ids}, indent=1) + "\n")
    parts = []
    for p in PIPELINES:
        train_docs = [docs[p][d] for d in train_ids if d in docs[p]]
        if not train_docs:
            raise StageError(f"no training documents for the {p} pipeline")
        model = train(train_docs, cfg.hyper(p))
        save(model, _model_path(cfg, p))
        parts.append(f"{p} d={model.vector_size} V={len(model.vocab)} N={len(train_docs)}")
    cfg.write_resolved(model_dir)
    return f"train: split {len(train_ids)}/{len(val_ids)}/{len(test_ids)}; " + "; ".join(parts)


def stage_embed(cfg: RunConfig):
    sp = _read_split(cfg)
    held_out = sp["val"] + sp["test"]
    vectors, skipped = [], {}
    for p in ("repos", "issues"):
        model = load(_model_path(cfg, p))
        docs = _docs(cfg, p)
        source = SOURCE_OF[p]
        vectors += [ExpertiseVector(t, source, model.doc_vector(t)) for t in sp["train"] if t in model.tag_index]
        inferred, skip = infer_source_vectors(model, [docs[d] for d in held_out if d in docs], source,
                                              cfg.infer_epochs(p))
        vectors += inferred
        skipped[source.value] = skip
    api_model = load(_model_path(cfg, "apis"))
    counts = corpus_mod.read_api_counts(cfg.path("corpus_dir") / corpus_mod.API_COUNTS_FILE)
    weighted = cfg.raw["api_weighting"] == "weighted"
    skipped["APIs"] = []
    for d in sp["train"] + held_out:
        if d not in counts:
            continue
        try:
            vectors.append(embed_apis(api_model, counts[d], d, weighted=weighted))
        except OOVOnly:
            skipped["APIs"].append(d)
    out = cfg.path("model_dir")
    write_vectors(out / VECTORS_FILE, vectors)
    (out / "skipped.json").write_text(json.dumps(skipped, indent=1, sort_keys=True) + "\n")
    by_source = {s.value: sum(v.source is s for v in vectors) for s in SOURCE_OF.values()}
    n_skipped = sum(len(v) for v in skipped.values())
    return f"embed: {by_source} vectors, {n_skipped} skipped"


def stage_concat(cfg: RunConfig):
    vectors = read_vectors(cfg.path("model_dir") / VECTORS_FILE)
    rias, incomplete = concat_all(vectors)
    write_vectors(cfg.path("model_dir") / RIAS_FILE, rias)
    dim = rias[0].dim if rias else 0
    return f"concat: {len(rias)} RIAs vectors of dim {dim}, {len(incomplete)} developers lack a source"


def stage_pca(cfg: RunConfig):
    sp = _read_split(cfg)
    rias = {v.developer_id: v for v in read_vectors(cfg.path("model_dir") / RIAS_FILE)}
    train_v = [rias[d] for d in sp["train"] if d in rias]
    other_v = [rias[d] for d in sp["val"] + sp["test"] if d in rias]
    if len(train_v) < 2:
        raise StageError("PCA needs at least two training RIAs vectors")
    done = []
    for k in cfg.pca_dims:
        if k > train_v[0].dim:
            logger.warning("skipping PCA k=%d: exceeds dimension %d", k, train_v[0].dim)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficient)
            model, tr, ot = reduce_rias(train_v, other_v, k)
        save_pca(model, cfg.path("model_dir") / f"pca_{k}.model")
        write_vectors(cfg.path("model_dir") / f"rias_pca_{k}.jsonl", tr + ot)
        done.append(k)
    return f"pca: fitted on {len(train_v)} train vectors, k in {done}"


def _feature_sets(cfg):
    """(name, {developer_id: vector}) for every vector file present."""
    model_dir = cfg.path("model_dir")
    sets = []
    vectors = read_vectors(model_dir / VECTORS_FILE)
    for source in (Source.Repos, Source.Issues, Source.APIs):
        sets.append((f"dev2vec:{source.value}", {v.developer_id: v.values for v in vectors if v.source is source}))
    if (model_dir / RIAS_FILE).exists():
        sets.append(("dev2vec:RIAs", {v.developer_id: v.values for v in read_vectors(model_dir / RIAS_FILE)}))
    for k in cfg.pca_dims:
        path = model_dir / f"rias_pca_{k}.jsonl"
        if path.exists():
            sets.append((f"dev2vec:RIAs-PCA{k}", {v.developer_id: v.values for v in read_vectors(path)}))
    return sets


def _classifier(cfg):
    # embedding scales differ by source; standardise on train statistics. PCA
    # components past the train rank carry no train variance and are dropped.
    return make_pipeline(VarianceThreshold(1e-12), StandardScaler(), SoftmaxRegression(**cfg.classifier))


def stage_classify(cfg: RunConfig):
    sp = _read_split(cfg)
    roles = _roles(cfg)
    rows = []

    def emit(name, ids, preds):
        for d, p in zip(ids, preds):
            rows.append({"feature_set": name, "developer_id": d, "true": roles[d].value, "pred": str(p)})

    train_labels = [roles[d] for d in sp["train"]]
    baseline = MajorityClassifier(list(ROLES)).fit([None] * len(train_labels), train_labels)
    emit("Baseline", sp["test"], baseline.predict(sp["test"]))

    repos, issues = _docs(cfg, "repos"), _docs(cfg, "issues")
    bow_docs = {d: (repos[d].tokens if d in repos else ()) + (issues[d].tokens if d in issues else ())
                for d in set(repos) | set(issues)}
    tr = [d for d in sp["train"] if bow_docs.get(d)]
    te = [d for d in sp["test"] if d in bow_docs]
    if tr and te and len({roles[d] for d in tr}) > 1:
        bow = TfidfBagOfWords(cfg.raw["tfidf_top_k"]).fit([bow_docs[d] for d in tr])
        clf = _classifier(cfg).fit(bow.transform([bow_docs[d] for d in tr]), [roles[d] for d in tr])
        emit("SOA:bow", te, clf.predict(bow.transform([bow_docs[d] for d in te])))

    for name, vecs in _feature_sets(cfg):
        tr = [d for d in sp["train"] if d in vecs]
        te = [d for d in sp["test"] if d in vecs]
        if not tr or not te or len({roles[d] for d in tr}) < 2:
            logger.warning("skipping %s: not enough train/test vectors", name)
            continue
        clf = _classifier(cfg).fit(np.array([vecs[d] for d in tr]), [roles[d] for d in tr])
        emit(name, te, clf.predict(np.array([vecs[d] for d in te])))

    write_jsonl(cfg.path("report_dir") / PREDICTIONS_FILE, rows)
    n_sets = len({r["feature_set"] for r in rows})
    return f"classify: {n_sets} feature sets, {len(rows)} test predictions"


def stage_evaluate(cfg: RunConfig):
    path = cfg.path("report_dir") / PREDICTIONS_FILE
    if not path.exists():
        raise StageError(f"{path} not found; run the classify stage first")
    grouped: dict[str, list] = {}
    for row in read_jsonl(path):
        grouped.setdefault(row["feature_set"], []).append(row)
    runs = []
    for name, rows in grouped.items():
        report = macro_weighted_metrics([RoleLabel(r["true"]) for r in rows], [RoleLabel(r["pred"]) for r in rows])
        runs.append(report.to_dict(name))
    write_report(cfg.path("report_dir") / REPORT_FILE, {"runs": runs})
    cfg.write_resolved(cfg.path("report_dir"))
    best = max(runs, key=lambda r: r["macro_weighted"]["f1"]) if runs else None
    tail = f"; best F1 {best['macro_weighted']['f1']}% ({best['name']})" if best else ""
    return f"evaluate: {len(runs)} runs -> {cfg.path('report_dir') / REPORT_FILE}{tail}"


def stage_analyze(cfg: RunConfig):
    roles = _roles(cfg)
    written = []
    for name, vecs in _feature_sets(cfg):
        groups = {}
        for role in ROLES:
            members = [vecs[d] for d in vecs if roles.get(d) is role]
            if members:
                groups[role.value] = np.array(members)
        if not groups:
            continue
        order, M = inter_intra_matrix(groups)
        fname = "inter_intra_" + name.split(":")[-1].replace("-", "_").lower() + ".csv"
        write_matrix_csv(cfg.path("report_dir") / fname, order, M)
        written.append(fname)
    return f"analyze: {len(written)} inter/intra matrices"


STAGES = {
    "ingest": stage_ingest,
    "train": stage_train,
    "embed": stage_embed,
    "concat": stage_concat,
    "pca": stage_pca,
    "classify": stage_classify,
    "evaluate": stage_evaluate,
    "analyze": stage_analyze,
}
PIPELINE_ORDER = ["mine", "ingest", "train", "embed", "concat", "pca", "classify", "evaluate", "analyze"]
