"""Pipeline stages over a work directory, with manifests and a lock file.

Every stage declares the artifacts it reads. A missing one stops the stage
with :class:`MissingArtifact`. Each run writes ``manifests/<stage>.json``
with input hashes, the config and the tool version; a rerun whose inputs,
config and outputs are unchanged does nothing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import pandas as pd

from . import MANIFEST_SCHEMA_VERSION, __version__
from ._util import atomic_write_text, derive_seed, dumps, sha256_file
from .attributes import attribute_schema, compute_attribute_features
from .config import artifact_config, synth_config
from .corpus import (
    parse_snapshot,
    read_labels,
    write_labels,
    write_snapshot,
    derive_labels,
)
from .explain import explain_tabular, explain_text, render_explanation
from .geo import build_neighborhoods, compute_geo_features
from .learn import (
    FAMILIES,
    AblationConfig,
    Dataset,
    ablation_table,
    load_model,
    majority_vote,
    oversample,
    predict_proba,
    roc_auc,
    save_model,
    stratified_split,
    train_classifier,
)
from .learn.ensemble import fit_family, split_ids
from .learn.models import make_hyper
from .mobility import compute_mobility_features
from .synth import generate
from .text import compute_text_features

log = logging.getLogger(__name__)

FEATURE_FILES = {
    "G": "geo_features.csv",
    "U": "mobility_features.csv",
    "A": "attribute_features.csv",
    "L": "bow_features.csv",
}
PROTOCOL = "stratified train/test split; SMOTE applied to the training fold only"


class StageError(Exception):
    exit_code = 1


class MissingArtifact(StageError):
    exit_code = 2

    def __init__(self, artifact: str, stage: str):
        super().__init__(f"missing prerequisite artifact: {artifact} (run the '{stage}' stage first)")
        self.artifact = artifact


class WorkdirLocked(StageError):
    exit_code = 4


# ---------------------------------------------------------------- locking and hashing


class WorkdirLock:
    """Exclusive lock file; a lock left by a dead process is taken over."""

    def __init__(self, workdir: Path):
        self.path = Path(workdir) / ".bizsurv.lock"

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                raise WorkdirLocked(f"work directory is locked by another run ({self.path})") from None
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            return self
        raise WorkdirLocked(f"could not acquire {self.path}")

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip())
        except (OSError, ValueError):
            return True
        if pid == os.getpid():
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def hash_path(path: Path) -> str:
    """sha256 of a file, or of the sorted (name, hash) list of a directory's files."""
    if path.is_file():
        return sha256_file(path)
    h = hashlib.sha256()
    for p in sorted(q for q in path.rglob("*") if q.is_file()):
        h.update(p.relative_to(path).as_posix().encode())
        h.update(sha256_file(p).encode())
    return h.hexdigest()


# ---------------------------------------------------------------- helpers


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    atomic_write_text(path, df.to_csv(lineterminator="\n"))


def _write_jsonl(records, path: Path) -> None:
    atomic_write_text(path, "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records))


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_feature_table(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, index_col="business_id", dtype={"business_id": str})


def _dates(cfg) -> tuple[date, date]:
    return date.fromisoformat(cfg["observation_end"]), date.fromisoformat(cfg["prediction_end"])


def _snapshot_dirs(cfg, wd: Path) -> tuple[Path, Path]:
    obs = Path(cfg["observation_path"]) if cfg["observation_path"] else wd / "snapshots" / "observation"
    pred = Path(cfg["prediction_path"]) if cfg["prediction_path"] else wd / "snapshots" / "prediction"
    return obs, pred


def _labels_series(wd: Path) -> pd.Series:
    labs = read_labels(wd / "labels.jsonl")
    return pd.Series({l.business_id: l.label.y for l in labs}, dtype="int64")


def _tables(wd: Path) -> dict[str, pd.DataFrame]:
    return {f: read_feature_table(wd / name) for f, name in FEATURE_FILES.items()}


def _hyper(cfg) -> dict:
    return {k: make_hyper(k, cfg["models"][k]) for k in cfg["models"]["kinds"]}


def _model_path(wd: Path, family: str, kind: str) -> Path:
    return wd / "models" / f"{family}.{kind}.model.bin"


# ---------------------------------------------------------------- stages


def stage_synth(cfg, wd: Path, seed: int, **_) -> list[Path]:
    r = generate(synth_config(cfg), seed)
    obs_dir, pred_dir = wd / "snapshots" / "observation", wd / "snapshots" / "prediction"
    write_snapshot(r.observation, obs_dir)
    write_snapshot(r.prediction, pred_dir)
    truth = [
        {"business_id": bid, "survival_probability": float(p), "survived": bool(s), "open_at_observation": bool(o)}
        for bid, p, s, o in zip(r.restaurant_ids, r.survival_probability, r.survived, r.open_at_observation)
    ]
    _write_jsonl(truth, wd / "synth_truth.jsonl")
    summary = {
        "config": artifact_config(cfg),
        "seed": seed,
        "oracle_auc": r.oracle_auc(),
        "intercept": r.intercept,
        "restaurants": len(r.restaurant_ids),
        "open_at_observation": int(r.open_at_observation.sum()),
        "survived": int(r.survived.sum()),
    }
    atomic_write_text(wd / "synth_report.json", dumps(summary))
    return [obs_dir, pred_dir, wd / "synth_truth.jsonl", wd / "synth_report.json"]


def stage_ingest(cfg, wd: Path, seed: int, **_) -> list[Path]:
    obs_end, pred_end = _dates(cfg)
    obs_dir, pred_dir = _snapshot_dirs(cfg, wd)
    obs = parse_snapshot(obs_dir, obs_end)
    pred = parse_snapshot(pred_dir, pred_end)
    out_obs, out_pred = wd / "ingest" / "observation", wd / "ingest" / "prediction"
    write_snapshot(obs, out_obs)
    write_snapshot(pred, out_pred)
    report = {"config": artifact_config(cfg)}
    for name, s in (("observation", obs), ("prediction", pred)):
        report[name] = {
            "as_of": s.as_of.isoformat(),
            "businesses": len(s.businesses),
            "restaurants": sum(b.is_restaurant for b in s.businesses),
            "reviews": len(s.reviews),
            "checkins": len(s.checkins),
            "photos": len(s.photos),
            "parse": s.report.to_json(),
        }
    atomic_write_text(wd / "ingest_report.json", dumps(report))
    return [out_obs, out_pred, wd / "ingest_report.json"]


def stage_label(cfg, wd: Path, seed: int, **_) -> list[Path]:
    obs_end, pred_end = _dates(cfg)
    obs = parse_snapshot(wd / "ingest" / "observation", obs_end)
    pred = parse_snapshot(wd / "ingest" / "prediction", pred_end)
    labels, report = derive_labels(obs, pred)
    write_labels(labels, wd / "labels.jsonl")
    atomic_write_text(wd / "label_report.json", dumps({**report.to_json(), "config": artifact_config(cfg)}))
    return [wd / "labels.jsonl", wd / "label_report.json"]


def stage_features(cfg, wd: Path, seed: int, **_) -> list[Path]:
    obs_end, _ = _dates(cfg)
    s = parse_snapshot(wd / "ingest" / "observation", obs_end)
    ids = [l.business_id for l in read_labels(wd / "labels.jsonl")]
    fc = cfg["features"]
    neighborhoods = build_neighborhoods(s, fc["radius_m"], ids)
    geo, geo_report = compute_geo_features(s, ids, fc["radius_m"], neighborhoods)
    max_gap = None if fc["max_gap_days"] is None else timedelta(days=fc["max_gap_days"])
    mob, transitions, mob_report = compute_mobility_features(s, ids, neighborhoods, max_gap, fc["flow_scope"])
    attrs, attr_report = compute_attribute_features(s, ids)
    text = compute_text_features(
        s, ids, fc["vocab_size"], np.random.default_rng(derive_seed(seed, "extreme_reviews")), fc["polarity_map"],
    )
    _write_csv(geo, wd / "geo_features.csv")
    _write_csv(mob, wd / "mobility_features.csv")
    _write_csv(attrs, wd / "attribute_features.csv")
    _write_csv(text.bow, wd / "bow_features.csv")
    atomic_write_text(wd / "attribute_schema.json", dumps(attribute_schema()))
    atomic_write_text(wd / "vocabulary.txt", "".join(t + "\n" for t in text.vocabulary.terms))
    _write_jsonl((t.to_json() for t in transitions), wd / "transitions.jsonl")
    _write_jsonl(text.polarity_records, wd / "review_polarity.jsonl")
    _write_jsonl(text.extreme_records, wd / "extreme_reviews.jsonl")
    _write_jsonl(text.review_bow_records, wd / "review_bow.jsonl")
    report = {
        "config": artifact_config(cfg),
        "geography": geo_report,
        "mobility": mob_report,
        "attributes": attr_report,
        "text": text.report,
    }
    atomic_write_text(wd / "features_report.json", dumps(report))
    return [wd / n for n in (
        "geo_features.csv", "mobility_features.csv", "attribute_features.csv", "bow_features.csv",
        "attribute_schema.json", "vocabulary.txt", "transitions.jsonl", "review_polarity.jsonl",
        "extreme_reviews.jsonl", "review_bow.jsonl", "features_report.json",
    )]


def sentiment_dataset(wd: Path) -> Dataset:
    """One row per selected review (best/worst), labelled by polarity; Neutral dropped."""
    vocab = (wd / "vocabulary.txt").read_text(encoding="utf-8").splitlines()
    records = [r for r in _read_jsonl(wd / "review_bow.jsonl") if r["polarity"] != "Neutral"]
    X = np.zeros((len(records), len(vocab)))
    for i, r in enumerate(records):
        for j, c in r["counts"].items():
            X[i, int(j)] = c
    y = np.array([r["polarity"] == "Positive" for r in records], dtype=np.int64)
    cols = tuple(f"L:bow__{t}" for t in vocab)
    return Dataset(tuple(r["review_id"] for r in records), X, y, cols)


def _split_survival(cfg, wd: Path, seed: int):
    tables = _tables(wd)
    labels = _labels_series(wd)
    ids = sorted(set(labels.index).intersection(*[set(t.index) for t in tables.values()]))
    train_ids, test_ids = split_ids(ids, labels, cfg["split"]["test_fraction"], derive_seed(seed, "split"))
    return tables, labels, train_ids, test_ids


def _ablation_config(cfg, kinds) -> AblationConfig:
    return AblationConfig(
        kinds=tuple(kinds), test_fraction=cfg["split"]["test_fraction"], smote=cfg["smote"]["enabled"],
        smote_k=cfg["smote"]["k"], smote_amount=cfg["smote"]["amount"], hyper=_hyper(cfg),
    )


def stage_train(cfg, wd: Path, seed: int, **_) -> list[Path]:
    kinds = cfg["models"]["kinds"]
    outputs, info = [], {}
    if cfg["task"] == "survival":
        tables, labels, train_ids, test_ids = _split_survival(cfg, wd, seed)
        conf = _ablation_config(cfg, kinds)
        for fam in FAMILIES:
            fit = fit_family(fam, tables, labels, train_ids, test_ids, conf, seed)
            info[fam] = {"smote": _jsonable(fit.smote_info), "models": {}}
            for kind, m in fit.models.items():
                save_model(m, _model_path(wd, fam, kind), __version__)
                outputs.append(_model_path(wd, fam, kind))
                info[fam]["models"][kind] = _jsonable(dict(m.info))
        split = {"task": "survival", "protocol": PROTOCOL, "train": train_ids, "test": test_ids}
    else:
        d = sentiment_dataset(wd)
        train, test = stratified_split(d, cfg["split"]["test_fraction"], derive_seed(seed, "split"))
        X, y, sm = train.X, train.y, {"synthetic": 0}
        if cfg["smote"]["enabled"]:
            rng = np.random.default_rng(derive_seed(seed, "smote", "sentiment"))
            X, y, sm = oversample(train.X, train.y, cfg["smote"]["amount"], cfg["smote"]["k"], rng)
        fit_on = Dataset(tuple(f"row{i}" for i in range(len(y))), X, y, train.columns, "train")
        info["sentiment"] = {"smote": _jsonable(sm), "models": {}}
        for kind in kinds:
            m = train_classifier(kind, fit_on, _hyper(cfg)[kind], derive_seed(seed, "model", "sentiment", kind))
            save_model(m, _model_path(wd, "sentiment", kind), __version__)
            outputs.append(_model_path(wd, "sentiment", kind))
            info["sentiment"]["models"][kind] = _jsonable(dict(m.info))
        split = {"task": "sentiment", "protocol": PROTOCOL, "train": list(train.ids), "test": list(test.ids)}
    split["counts"] = {"train": len(split["train"]), "test": len(split["test"])}
    atomic_write_text(wd / "split.json", dumps(split))
    atomic_write_text(wd / "train_report.json", dumps({"config": artifact_config(cfg), "families": info}))
    return [wd / "split.json", wd / "train_report.json", *outputs]


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _family_test(tables, labels, fam: str, ids: Sequence[str], model) -> tuple[np.ndarray, np.ndarray]:
    t = tables[fam].loc[list(ids)]
    X = t.to_numpy(dtype=float)
    return predict_proba(model, X), labels.loc[list(ids)].to_numpy()


def _test_probabilities(cfg, wd: Path, kinds) -> tuple[dict, dict, np.ndarray]:
    split = json.loads((wd / "split.json").read_text())
    tables, labels = _tables(wd), _labels_series(wd)
    probs, models = {}, {}
    y = labels.loc[split["test"]].to_numpy()
    for fam in FAMILIES:
        probs[fam], models[fam] = {}, {}
        for kind in kinds:
            m = load_model(_model_path(wd, fam, kind))
            models[fam][kind] = m
            probs[fam][kind], _ = _family_test(tables, labels, fam, split["test"], m)
    return probs, models, y


def stage_evaluate(cfg, wd: Path, seed: int, **_) -> list[Path]:
    from .plotting import plot_roc

    kinds = cfg["models"]["kinds"]
    split = json.loads((wd / "split.json").read_text())
    figures = wd / "figures"
    results: dict = {}
    if split["task"] != cfg["task"]:
        raise StageError(f"split.json was produced for the {split['task']} task; rerun 'train'")
    if cfg["task"] == "survival":
        probs, models, y = _test_probabilities(cfg, wd, kinds)
        tables = _tables(wd)
        outputs = []
        for fam in FAMILIES:
            results[fam] = {}
            curves = {}
            for kind in kinds:
                rep = roc_auc(probs[fam][kind], y, {"family": fam, "kind": kind})
                results[fam][kind] = rep.to_json()
                curves[kind] = (rep.roc_points, rep.auc)
            outputs.append(plot_roc(curves, figures / f"roc_{fam}.png", f"Survival ROC, family {fam}"))
        ensemble, curves = {}, {}
        for kind in kinds:
            fam_models = [models[f][kind] for f in FAMILIES]
            inputs = [tables[f].loc[split["test"]].to_numpy(dtype=float) for f in FAMILIES]
            vote = majority_vote(fam_models, inputs)
            rep = roc_auc(vote.mean_proba, y, {"family": "ALL", "kind": kind})
            ensemble[kind] = {**rep.to_json(), "vote_accuracy": float((vote.labels == y).mean())}
            curves[kind] = (rep.roc_points, rep.auc)
        results["ALL"] = ensemble
        outputs.append(plot_roc(curves, figures / "roc_ALL.png", "Survival ROC, majority-vote ensemble"))
    else:
        d = sentiment_dataset(wd)
        pos = {rid: i for i, rid in enumerate(d.ids)}
        test = d.take([pos[r] for r in split["test"]], "test")
        results["sentiment"], curves = {}, {}
        for kind in kinds:
            m = load_model(_model_path(wd, "sentiment", kind))
            rep = roc_auc(predict_proba(m, test), test.y, {"task": "sentiment", "kind": kind})
            results["sentiment"][kind] = rep.to_json()
            curves[kind] = (rep.roc_points, rep.auc)
        outputs = [plot_roc(curves, figures / "roc_sentiment.png", "Sentiment ROC")]
    report = {
        "config": artifact_config(cfg),
        "task": cfg["task"],
        "protocol": PROTOCOL,
        "split": split["counts"],
        "results": results,
    }
    atomic_write_text(wd / "eval_report.json", dumps(report))
    return [wd / "eval_report.json", *outputs]


def stage_ablate(cfg, wd: Path, seed: int, **_) -> list[Path]:
    from .plotting import plot_ablation

    if cfg["task"] != "survival":
        raise StageError("the ablation grid applies to the survival task only")
    kinds = cfg["models"]["ablation_kinds"]
    probs, _, y = _test_probabilities(cfg, wd, kinds)
    table, skipped = ablation_table(probs, y, kinds)
    atomic_write_text(wd / "ablation.csv", table.to_csv(float_format="%.6f", lineterminator="\n"))
    fig = plot_ablation(table, wd / "figures" / "ablation.png")
    return [wd / "ablation.csv", fig]


def _restaurant_text(cfg, wd: Path, business_id: str) -> str:
    obs_end, _ = _dates(cfg)
    s = parse_snapshot(wd / "ingest" / "observation", obs_end)
    revs = sorted(s.reviews_by_business.get(business_id, ()), key=lambda r: r.review_id)
    return "\n".join(r.text for r in revs if r.timestamp < s.end)


def stage_explain(cfg, wd: Path, seed: int, *, business_id: str | None = None, family: str = "A",
                  kind: str = "GBDT", fmt: str = "json", top_k: int | None = None,
                  samples: int | None = None, **_) -> list[Path]:
    from .plotting import plot_explanation

    ec = cfg["explain"]
    split = json.loads((wd / "split.json").read_text())
    if split["task"] != "survival":
        raise StageError("explanations are produced for survival models")
    if business_id is None:
        business_id = sorted(split["test"])[0]
    k = top_k or ec["top_k"]
    m = load_model(_model_path(wd, family, kind))
    table = read_feature_table(wd / FEATURE_FILES[family])
    if business_id not in table.index:
        raise StageError(f"unknown business id {business_id!r} for family {family}")
    eseed = derive_seed(seed, business_id, family, kind)
    if family == "L":
        text = _restaurant_text(cfg, wd, business_id)
        e = explain_text(m, text, k, samples or ec["text_samples"], eseed, review_id=business_id,
                         kernel_width=ec["text_kernel_width"], ridge_alpha=ec["ridge_alpha"])
        pairs = list(e.word_weights)
    else:
        background = table.loc[split["train"]].to_numpy(dtype=float)
        e = explain_tabular(
            m, table.loc[business_id].to_numpy(dtype=float), background, k, samples or ec["samples"], eseed,
            feature_names=list(table.columns), instance_id=business_id, mode=ec["mode"],
            kernel_width=ec["kernel_width"], ridge_alpha=ec["ridge_alpha"],
        )
        pairs = [(x.condition, x.weight) for x in e.entries]
    stem = f"{business_id}.{family}"
    out_dir = wd / "explanations"
    doc = json.loads(render_explanation(e, "json"))
    doc.update({"business_id": business_id, "family": family, "model": kind, "config": artifact_config(cfg)})
    outputs = [out_dir / f"{stem}.explanation.json"]
    atomic_write_text(outputs[0], dumps(doc))
    if fmt == "html":
        outputs.append(out_dir / f"{stem}.explanation.html")
        atomic_write_text(outputs[-1], render_explanation(e, "html"))
    outputs.append(plot_explanation(pairs, out_dir / f"{stem}.explanation.png",
                                    f"{business_id} ({family}, {kind})"))
    return outputs


# ---------------------------------------------------------------- dependency graph


def _inputs(stage: str, cfg, wd: Path, options: Mapping) -> list[tuple[Path, str]]:
    """(artifact, producing stage) pairs a stage needs, in reporting order."""
    feats = [(wd / FEATURE_FILES[f], "features") for f in FAMILIES]
    if stage == "synth":
        return []
    if stage == "ingest":
        obs, pred = _snapshot_dirs(cfg, wd)
        return [(obs, "synth"), (pred, "synth")]
    if stage == "label":
        return [(wd / "ingest" / "observation", "ingest"), (wd / "ingest" / "prediction", "ingest")]
    if stage == "features":
        return [(wd / "ingest" / "observation", "ingest"), (wd / "labels.jsonl", "label")]
    if stage == "train":
        if cfg["task"] == "sentiment":
            return [(wd / "review_bow.jsonl", "features"), (wd / "vocabulary.txt", "features")]
        return feats + [(wd / "labels.jsonl", "label")]
    models = [(_model_path(wd, f, k), "train") for f in FAMILIES for k in cfg["models"]["kinds"]]
    if stage == "evaluate":
        if cfg["task"] == "sentiment":
            return [(wd / "split.json", "train"), (wd / "review_bow.jsonl", "features")] + [
                (_model_path(wd, "sentiment", k), "train") for k in cfg["models"]["kinds"]]
        return feats + [(wd / "labels.jsonl", "label"), (wd / "split.json", "train")] + models
    if stage == "ablate":
        models = [(_model_path(wd, f, k), "train") for f in FAMILIES for k in cfg["models"]["ablation_kinds"]]
        return feats + [(wd / "labels.jsonl", "label"), (wd / "split.json", "train")] + models
    if stage == "explain":
        fam, kind = options.get("family", "A"), options.get("kind", "GBDT")
        out = [(wd / FEATURE_FILES[fam], "features"), (wd / "split.json", "train"), (_model_path(wd, fam, kind), "train")]
        if fam == "L":
            out.append((wd / "ingest" / "observation", "ingest"))
        return out
    raise ValueError(f"unknown stage {stage!r}")


STAGE_FUNCS: dict[str, Callable[..., list[Path]]] = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "label": stage_label,
    "features": stage_features,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "ablate": stage_ablate,
    "explain": stage_explain,
}


@dataclass
class StageResult:
    stage: str
    skipped: bool
    outputs: list[str] = field(default_factory=list)
    manifest: Path | None = None


def _rel(p: Path, wd: Path) -> str:
    try:
        return p.resolve().relative_to(wd.resolve()).as_posix()
    except ValueError:
        return str(p)


def run_stage(stage: str, cfg: Mapping, force: bool = False, **options) -> StageResult:
    """Run one stage under the workdir lock; a no-op when its manifest is current."""
    if stage not in STAGE_FUNCS:
        raise ValueError(f"unknown stage {stage!r}")
    wd = Path(cfg["workdir"])
    wd.mkdir(parents=True, exist_ok=True)
    with WorkdirLock(wd):
        needed = _inputs(stage, cfg, wd, options)
        for path, producer in needed:
            if not path.exists():
                raise MissingArtifact(_rel(path, wd), producer)
        inputs = {_rel(p, wd): hash_path(p) for p, _ in needed}
        name = stage
        if stage == "explain":
            options.setdefault("business_id", None)
            if options["business_id"] is None:
                options["business_id"] = sorted(json.loads((wd / "split.json").read_text())["test"])[0]
            name = f"explain.{options['business_id']}.{options.get('family', 'A')}.{options.get('kind', 'GBDT')}"
        manifest_path = wd / "manifests" / f"{name}.json"
        seed = derive_seed(cfg["seed"], stage)
        opts = {k: v for k, v in sorted(options.items())}
        if not force and manifest_path.exists():
            old = json.loads(manifest_path.read_text())
            current = (
                old.get("inputs") == inputs and old.get("config") == dict(cfg) and old.get("options") == opts
                and old.get("tool_version") == __version__
                and all((wd / rel).exists() and hash_path(wd / rel) == h for rel, h in old.get("outputs", {}).items())
            )
            if current:
                log.info("stage %s is up to date", name)
                return StageResult(stage, True, sorted(old["outputs"]), manifest_path)
        log.info("running stage %s", name)
        outputs = STAGE_FUNCS[stage](cfg, wd, seed, **options)
        manifest = {
            "stage": stage,
            "tool_version": __version__,
            "manifest_schema_version": MANIFEST_SCHEMA_VERSION,
            "seed": seed,
            "master_seed": cfg["seed"],
            "config": dict(cfg),
            "options": opts,
            "inputs": inputs,
            "outputs": {_rel(p, wd): hash_path(p) for p in outputs},
        }
        atomic_write_text(manifest_path, dumps(manifest))
        return StageResult(stage, False, sorted(manifest["outputs"]), manifest_path)


def pipeline_stages(cfg: Mapping) -> list[str]:
    """Stages of a full run; synthesizes a corpus when no snapshot paths are configured."""
    stages = [] if cfg["observation_path"] and cfg["prediction_path"] else ["synth"]
    stages += ["ingest", "label", "features", "train", "evaluate"]
    if cfg["task"] == "survival":
        stages.append("ablate")
    return stages
