"""Config-driven experiment pipeline.

Stages run in order and talk to each other only through files under the
output directory, so any stage can be re-run from persisted artifacts:

    ingest     data/dataset.fsdt, data/categories.txt, data/split.csv
    train      models/<name>.fsem, models/<name>-trace.csv (+ models/backbone.fsem)
    embed      embeddings/<source>.csv for every model and the PCA+t-SNE layout
    cluster    clusters/<source>-kmeans.csv, clusters/<source>-gmm.csv
    evaluate   eval/classification.json, eval/silhouette.json
    report     reports/table1.{csv,md}, reports/table2.{csv,md}
    visualize  plots/<source>-<algorithm>.svg

Every stage appends its wall-clock time and the sha256 of each artifact it
wrote to ``manifest.txt``.
"""

import configparser
import csv
import dataclasses
import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, models, nn
from .data import (
    AugmentParams, LabeledDataset, SplitDataset, expand_dataset, load_dataset, read_container,
    resize, split, write_container,
)
from .errors import FsmError
from .metrics import (
    TABLE1_COLUMNS, ConfusionMatrix, classification_report, confusion_matrix,
    silhouette_score, table1_rows, table2_rows, to_csv, to_markdown,
)
from .synth import AUX_KINDS, TARGET_KINDS, ShapesSpec, generate_synthetic
from .unsupervised import gmm_assign, gmm_fit, kmeans, pca_fit, pca_transform, tsne, write_points_csv
from .viz import write_scatter

STAGES = ("ingest", "train", "embed", "cluster", "evaluate", "report", "visualize")
ALGORITHMS = {"kmeans": "K-Means", "gmm": "GMM"}
PCA_TSNE = "pca+tsne"
_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


class ConfigError(FsmError, ValueError):
    """Invalid or inconsistent experiment configuration."""


class StageError(FsmError, RuntimeError):
    """A pipeline stage failed; carries the stage name and the original cause."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


# configuration -------------------------------------------------------------

SYNTH_KEYS = {"kinds", "per_category", "size", "radius", "thickness", "jitter", "noise"}
RECIPE_TYPES = {f.name: f.type for f in dataclasses.fields(models.ModelRecipe)
                if f.name not in ("kind", "name")}
ALLOWED = {
    "experiment": {"name", "seed", "out"},
    "data": {"source", "grayscale"} | SYNTH_KEYS,
    "preprocess": {"resize", "expand_fraction", "rotation", "shear", "zoom", "fill", "fill_value",
                   "split"},
    "pretrain": SYNTH_KEYS - {"size"} | {"checkpoint", "seed", "epochs", "conv_channels", "hidden",
                                         "batch_size", "lr", "momentum"},
    "clustering": {"k", "algorithms", "kmeans_init", "kmeans_restarts", "gmm_max_iters",
                   "pca_source", "pca_dims", "perplexity", "tsne_iterations"},
}


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _words(text):
    return tuple(t for t in text.replace(",", " ").split())


def _convert(key, text, typ):
    try:
        if typ in ("tuple", tuple):
            return _ints(text)
        if typ in ("int", int):
            return int(text)
        if typ in ("float", float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None
    return text


@dataclass
class ExperimentConfig:
    """Parsed experiment configuration; see ``parse_config`` for the text format."""

    name: str = "experiment"
    seed: int = 0
    out: str = None
    base_dir: str = "."
    data: dict = field(default_factory=dict)
    preprocess: dict = field(default_factory=dict)
    pretrain: dict = None
    models: list = field(default_factory=list)      # ModelRecipe, in config order
    clustering: dict = field(default_factory=dict)
    pinned_seeds: frozenset = frozenset()           # models whose section sets its own seed

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def canonical(self):
        """Deterministic JSON of every setting that influences outputs."""
        body = {
            "name": self.name, "seed": self.seed, "data": self.data,
            "preprocess": self.preprocess, "pretrain": self.pretrain,
            "models": [json.loads(r.to_json()) for r in self.models],
            "clustering": self.clustering,
        }
        return json.dumps(body, sort_keys=True, default=list)

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_seed(self, seed):
        """Copy with the experiment seed replaced; seeds not pinned in the text follow it."""
        seed = int(seed)
        recipes = [r if r.name in self.pinned_seeds else dataclasses.replace(r, seed=seed)
                   for r in self.models]
        pre = self.pretrain
        if pre is not None and not pre["pinned_seed"]:
            pre = {**pre, "seed": seed}
        return dataclasses.replace(self, seed=seed, models=recipes, pretrain=pre)


def parse_config(text, base_dir="."):
    """Parse the INI-style config text.

    Sections: ``[experiment]``, ``[data]``, ``[preprocess]``, optional
    ``[pretrain]``, one ``[model:<name>]`` per model and ``[clustering]``.
    Lists are comma- or space-separated; ``#`` starts a comment.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section.startswith("model:"):
            continue
        if section not in ALLOWED:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - ALLOWED[section]
        if unknown:
            raise ConfigError(f"[{section}] has unknown keys: {', '.join(sorted(unknown))}")

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    cfg = ExperimentConfig(base_dir=str(base_dir))
    cfg.name = exp.get("name", "experiment")
    cfg.seed = _convert("seed", exp.get("seed", "0"), int)
    cfg.out = exp.get("out")
    seed = cfg.seed

    d = cp["data"] if cp.has_section("data") else {}
    source = d.get("source", "synthetic")
    data = {"source": source, "grayscale": d.get("grayscale", "true").lower() in ("1", "true", "yes", "on")}
    if source == "synthetic":
        data["shapes"] = _synth_params(d, ShapesSpec())
    cfg.data = data

    p = cp["preprocess"] if cp.has_section("preprocess") else {}
    zoom = _floats(p.get("zoom", "0.9, 1.1"))
    ratios = _floats(p.get("split", "0.6, 0.2, 0.2"))
    if len(zoom) != 2 or len(ratios) != 3:
        raise ConfigError("zoom takes two numbers and split takes three")
    cfg.preprocess = {
        "resize": _convert("resize", p.get("resize", "0"), int),
        "expand_fraction": _convert("expand_fraction", p.get("expand_fraction", "0"), float),
        "rotation": _convert("rotation", p.get("rotation", "10"), float),
        "shear": _convert("shear", p.get("shear", "0.1"), float),
        "zoom": zoom,
        "fill": p.get("fill", "edge"),
        "fill_value": _convert("fill_value", p.get("fill_value", "0"), float),
        "split": ratios,
    }

    explicit = set()
    if cp.has_section("pretrain"):
        s = cp["pretrain"]
        # rendering defaults follow the target data so the auxiliary task is a similar domain
        target = data.get("shapes", {})
        base = ShapesSpec.auxiliary(**{k: v for k, v in target.items() if k not in ("kinds", "size")})
        pre = {"shapes": _synth_params(s, base, default_kinds=AUX_KINDS),
               "seed": _convert("seed", s.get("seed", str(seed)), int),
               "pinned_seed": "seed" in s,
               "checkpoint": s.get("checkpoint")}
        recipe = {}
        for key in ("conv_channels", "hidden", "batch_size", "lr", "momentum"):
            if key in s:
                recipe[key] = _convert(key, s[key], RECIPE_TYPES[key])
        if "epochs" in s:
            recipe["pretrain_epochs"] = _convert("epochs", s["epochs"], int)
        pre["recipe"] = recipe
        cfg.pretrain = pre

    for section in cp.sections():
        if not section.startswith("model:"):
            continue
        name = section[len("model:"):].strip()
        if not _NAME_RE.match(name):
            raise ConfigError(f"model name {name!r} must match {_NAME_RE.pattern}")
        s = cp[section]
        if "kind" not in s:
            raise ConfigError(f"[{section}] needs a kind")
        kwargs = {"kind": s["kind"], "name": name, "seed": seed}
        for key, value in s.items():
            if key == "kind":
                continue
            if key not in RECIPE_TYPES:
                raise ConfigError(f"[{section}] has unknown key {key}")
            kwargs[key] = _convert(key, value, RECIPE_TYPES[key])
        if "seed" in s:
            explicit.add(name)
        try:
            cfg.models.append(models.ModelRecipe(**kwargs))
        except ValueError as exc:
            raise ConfigError(f"[{section}]: {exc}") from None
    if not cfg.models:
        raise ConfigError("config defines no [model:<name>] sections")
    if PCA_TSNE in {r.name for r in cfg.models}:
        raise ConfigError(f"model name {PCA_TSNE!r} is reserved")
    needs_backbone = [r.name for r in cfg.models if r.kind in ("transfer", "siamese-transfer")]
    if needs_backbone and cfg.pretrain is None:
        raise ConfigError(f"models {needs_backbone} need a [pretrain] section")
    cfg.pinned_seeds = frozenset(explicit)

    c = cp["clustering"] if cp.has_section("clustering") else {}
    algorithms = _words(c.get("algorithms", "kmeans, gmm"))
    bad = set(algorithms) - set(ALGORITHMS)
    if bad or not algorithms:
        raise ConfigError(f"clustering algorithms must be drawn from {sorted(ALGORITHMS)}")
    cfg.clustering = {
        "k": _convert("k", c.get("k", "0"), int),
        "algorithms": algorithms,
        "kmeans_init": c.get("kmeans_init", "random-points"),
        "kmeans_restarts": _convert("kmeans_restarts", c.get("kmeans_restarts", "10"), int),
        "gmm_max_iters": _convert("gmm_max_iters", c.get("gmm_max_iters", "200"), int),
        "pca_source": c.get("pca_source", "pixels"),
        "pca_dims": _convert("pca_dims", c.get("pca_dims", "180"), int),
        "perplexity": _convert("perplexity", c["perplexity"], float) if "perplexity" in c else None,
        "tsne_iterations": _convert("tsne_iterations", c.get("tsne_iterations", "1000"), int),
    }
    src = cfg.clustering["pca_source"]
    if src not in ("pixels", "none") and src not in {r.name for r in cfg.models}:
        raise ConfigError(f"pca_source {src!r} is neither 'pixels', 'none' nor a model name")
    return cfg


def _synth_params(section, base, default_kinds=TARGET_KINDS):
    """Shapes-generator settings from ``section``, falling back to ``base``."""
    params = {
        "kinds": _words(section.get("kinds", ", ".join(default_kinds))),
        "per_category": _convert("per_category", section.get("per_category", str(base.per_category)), int),
        "radius": _convert("radius", section.get("radius", str(base.radius)), float),
        "thickness": _convert("thickness", section.get("thickness", str(base.thickness)), float),
        "jitter": _convert("jitter", section.get("jitter", str(base.jitter)), float),
        "noise": _convert("noise", section.get("noise", str(base.noise)), float),
    }
    if "size" in section:
        params["size"] = _convert("size", section["size"], int)
    try:
        ShapesSpec(**params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return params


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


# manifest ------------------------------------------------------------------

MANIFEST = "manifest.txt"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    version: str = __version__
    stage_seconds: dict = field(default_factory=dict)   # stage -> wall-clock seconds
    artifacts: dict = field(default_factory=dict)       # stage -> {relative path: sha256}

    def dumps(self):
        lines = ["# fsmetric run manifest", "format 1", f"toolkit {self.version}",
                 f"config-sha256 {self.config_hash}", f"seed {self.seed}"]
        for stage in STAGES:
            if stage in self.stage_seconds:
                lines.append(f"stage {stage} {self.stage_seconds[stage]:.3f}")
        for stage in STAGES:
            for rel, digest in sorted(self.artifacts.get(stage, {}).items()):
                lines.append(f"artifact {stage} {digest} {rel}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        fields = {}
        seconds, artifacts = {}, {}
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key == "stage":
                stage, secs = rest.split(" ")
                seconds[stage] = float(secs)
            elif key == "artifact":
                stage, digest, rel = rest.split(" ", 2)
                artifacts.setdefault(stage, {})[rel] = digest
            else:
                fields[key] = rest
        return cls(fields["config-sha256"], int(fields["seed"]), fields.get("toolkit", "?"),
                   seconds, artifacts)

    def verify(self, out_dir):
        """Problems found re-hashing every listed artifact (empty when intact)."""
        problems = []
        for stage, arts in self.artifacts.items():
            for rel, digest in arts.items():
                p = Path(out_dir) / rel
                if not p.is_file():
                    problems.append(f"{rel}: missing")
                elif sha256_file(p) != digest:
                    problems.append(f"{rel}: content hash mismatch")
        return problems


def read_manifest(out_dir):
    return RunManifest.loads((Path(out_dir) / MANIFEST).read_text(encoding="utf-8"))


# pipeline ------------------------------------------------------------------

class Experiment:
    """Binds a config to an output directory and runs stages against it."""

    def __init__(self, config, out_dir=None):
        self.config = config
        out = out_dir or config.out
        if out is None:
            raise ConfigError("no output directory: pass one or set [experiment] out")
        self.out = Path(out) if out_dir else config.resolve(out)

    # -- helpers
    def path(self, *parts):
        return self.out.joinpath(*parts)

    def _need(self, rel, stage):
        p = self.path(rel)
        if not p.is_file():
            raise FileNotFoundError(f"{rel} not found in {self.out}; run the '{stage}' stage first")
        return p

    def _write_text(self, rel, text, written):
        p = self.path(rel)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        written.append(rel)

    def sources(self):
        names = [r.name for r in self.config.models]
        if self.config.clustering["pca_source"] != "none":
            names.append(PCA_TSNE)
        return names

    # -- persisted artifacts
    def load_split(self):
        names = self._need("data/categories.txt", "ingest").read_text(encoding="utf-8").splitlines()
        ds = read_container(self._need("data/dataset.fsdt", "ingest"), names)
        parts = {"train": [], "validation": [], "test": []}
        with open(self._need("data/split.csv", "ingest"), newline="") as f:
            for row in csv.DictReader(f):
                parts[row["part"]].append(int(row["index"]))
        return SplitDataset(ds, *(np.array(parts[k], dtype=np.int64)
                                  for k in ("train", "validation", "test")))

    def load_embedding(self, source):
        rel = f"embeddings/{_fname(source)}.csv"
        with open(self._need(rel, "embed"), newline="") as f:
            rows = list(csv.reader(f))
        body = rows[1:]
        X = np.array([[float(v) for v in r[1:-1]] for r in body], dtype=np.float64)
        y = np.array([int(r[-1]) for r in body], dtype=np.int64)
        return X, y

    def load_assignments(self, source, algorithm):
        rel = f"clusters/{_fname(source)}-{algorithm}.csv"
        with open(self._need(rel, "cluster"), newline="") as f:
            return np.array([int(r["assignment"]) for r in csv.DictReader(f)], dtype=np.int64)

    # -- stages
    def stage_ingest(self):
        cfg, pp = self.config, self.config.preprocess
        if cfg.data["source"] == "synthetic":
            ds = generate_synthetic(ShapesSpec(**cfg.data["shapes"]), seed=cfg.seed)
        else:
            root = cfg.resolve(cfg.data["source"])
            if not root.exists():
                raise FileNotFoundError(f"dataset path {root} does not exist")
            ds = load_dataset(str(root), grayscale=cfg.data["grayscale"])
        if pp["resize"]:
            t = (pp["resize"], pp["resize"])
            ds = LabeledDataset([resize(s, t) for s in ds.samples], ds.category_names)
        shapes = {s.shape for s in ds.samples}
        if len(shapes) != 1:
            raise ValueError(f"images differ in shape {sorted(shapes)}; set [preprocess] resize")
        params = AugmentParams(rotation=pp["rotation"], shear=pp["shear"], zoom=pp["zoom"],
                               seed=cfg.seed, fill=pp["fill"], fill_value=pp["fill_value"])
        ds = expand_dataset(ds, pp["expand_fraction"], params)
        sp = split(ds, pp["split"], seed=cfg.seed)
        written = []
        self.path("data").mkdir(parents=True, exist_ok=True)
        write_container(ds, self.path("data/dataset.fsdt"))
        written.append("data/dataset.fsdt")
        self._write_text("data/categories.txt", "\n".join(ds.category_names) + "\n", written)
        rows = sorted([(int(i), part) for part, idx in
                       (("train", sp.train_idx), ("validation", sp.val_idx), ("test", sp.test_idx))
                       for i in idx])
        self._write_text("data/split.csv", to_csv(("index", "part"), rows), written)
        return written

    def _backbone(self, input_shape, written):
        pre = self.config.pretrain
        cache = self.config.resolve(pre["checkpoint"]) if pre.get("checkpoint") else None
        # the cached file is only reused when it was built from these exact settings
        key = json.dumps({"shapes": pre["shapes"], "seed": pre["seed"], "recipe": pre["recipe"],
                          "input_shape": list(input_shape)}, sort_keys=True, default=list).encode()
        backbone = None
        if cache is not None and cache.is_file():
            cached, sections = nn.load_network(cache)
            if sections.get("PRET") == key:
                backbone = cached
        if backbone is None:
            spec = ShapesSpec(**{**pre["shapes"], "size": input_shape[0]})
            if input_shape[2] != 1:
                raise ValueError("auxiliary shapes are grayscale; the data has "
                                 f"{input_shape[2]} channels")
            aux = generate_synthetic(spec, seed=pre["seed"])
            recipe = models.ModelRecipe("cnn", name="backbone", seed=pre["seed"], **pre["recipe"])
            backbone = models.pretrain_backbone(aux, recipe)
            if cache is not None:
                cache.parent.mkdir(parents=True, exist_ok=True)
                nn.save_network(backbone, cache, {"PRET": key})
        self.path("models").mkdir(parents=True, exist_ok=True)
        nn.save_network(backbone, self.path("models/backbone.fsem"), {"PRET": key})
        written.append("models/backbone.fsem")
        return backbone

    def stage_train(self):
        sp = self.load_split()
        written = []
        backbone = None
        if any(r.kind in ("transfer", "siamese-transfer") for r in self.config.models):
            backbone = self._backbone(sp.parent.samples[0].shape, written)
        self.path("models").mkdir(parents=True, exist_ok=True)
        for recipe in self.config.models:
            uses = recipe.kind in ("transfer", "siamese-transfer")
            model = models.train(sp, recipe, backbone=backbone if uses else None)
            rel = f"models/{recipe.name}.fsem"
            models.save_model(model, self.path(rel))
            written.append(rel)
            rows = [(t["epoch"], repr(t["loss"]),
                     "" if t["val_accuracy"] is None else repr(t["val_accuracy"])) for t in model.trace]
            self._write_text(f"models/{recipe.name}-trace.csv",
                             to_csv(("epoch", "loss", "val_accuracy"), rows), written)
        return written

    def stage_embed(self):
        sp = self.load_split()
        test = sp.test
        written = []
        cache = {}
        for recipe in self.config.models:
            model = models.load_model(self._need(f"models/{recipe.name}.fsem", "train"))
            e, y = models.embed(model, test)
            cache[recipe.name] = e.astype(np.float64)
            written.append(self._write_embedding(recipe.name, e, y))
        cl = self.config.clustering
        if cl["pca_source"] != "none":
            if cl["pca_source"] == "pixels":
                X = test.images().reshape(len(test), -1).astype(np.float64)
            else:
                X = cache[cl["pca_source"]]
            k = min(cl["pca_dims"], X.shape[0] - 1, X.shape[1])
            Z = pca_transform(pca_fit(X, k), X)
            layout = tsne(Z, perplexity=cl["perplexity"], iterations=cl["tsne_iterations"],
                          seed=self.config.seed).embedding
            written.append(self._write_embedding(PCA_TSNE, layout, test.labels))
        return written

    def _write_embedding(self, source, e, y):
        rel = f"embeddings/{_fname(source)}.csv"
        rows = [[i] + [repr(float(v)) for v in row] + [int(lab)]
                for i, (row, lab) in enumerate(zip(e, y))]
        cols = ["index"] + [f"e{j}" for j in range(e.shape[1])] + ["label"]
        self._write_text(rel, to_csv(cols, rows), [])
        return rel

    def _k(self):
        k = self.config.clustering["k"]
        if k:
            return k
        names = self._need("data/categories.txt", "ingest").read_text(encoding="utf-8").splitlines()
        return len(names)

    def stage_cluster(self):
        cl = self.config.clustering
        K = self._k()
        written = []
        self.path("clusters").mkdir(parents=True, exist_ok=True)
        for source in self.sources():
            X, _ = self.load_embedding(source)
            for algo in cl["algorithms"]:
                if algo == "kmeans":
                    assign = kmeans(X, K, init=cl["kmeans_init"], seed=self.config.seed,
                                    restarts=cl["kmeans_restarts"]).assignments
                else:
                    res = gmm_fit(X, K, seed=self.config.seed, max_iters=cl["gmm_max_iters"])
                    assign = gmm_assign(res)
                rel = f"clusters/{_fname(source)}-{algo}.csv"
                write_points_csv(self.path(rel), X, assign)
                written.append(rel)
        return written

    def stage_evaluate(self):
        sp = self.load_split()
        test = sp.test
        C = sp.parent.num_categories
        written = []
        classification = {}
        for recipe in self.config.models:
            model = models.load_model(self._need(f"models/{recipe.name}.fsem", "train"))
            pred = models.evaluate(model, test)
            cm = confusion_matrix(test.labels, pred, C)
            rep = classification_report(cm)
            classification[recipe.name] = {
                "kind": recipe.kind,
                "confusion": cm.counts.tolist(),
                "accuracy": rep.accuracy,
                "precision": rep.precision.tolist(),
                "recall": rep.recall.tolist(),
                "f1": rep.f1.tolist(),
                "undefined": [[m, int(c)] for m, c in rep.undefined],
            }
        silhouettes = {}
        for source in self.sources():
            X, _ = self.load_embedding(source)
            scores = {}
            for algo in self.config.clustering["algorithms"]:
                assign = self.load_assignments(source, algo)
                k = len(np.unique(assign))
                # undefined when the clustering collapsed below 2 clusters
                scores[algo] = silhouette_score(X, assign) if 2 <= k <= len(X) - 1 else None
            silhouettes[source] = scores
        self._write_text("eval/classification.json",
                         json.dumps(classification, indent=1, sort_keys=True) + "\n", written)
        self._write_text("eval/silhouette.json",
                         json.dumps(silhouettes, indent=1, sort_keys=True) + "\n", written)
        return written

    def stage_report(self):
        cls = json.loads(self._need("eval/classification.json", "evaluate").read_text(encoding="utf-8"))
        sil = json.loads(self._need("eval/silhouette.json", "evaluate").read_text(encoding="utf-8"))
        reports = {}
        for recipe in self.config.models:
            if recipe.name not in cls:
                raise KeyError(f"model {recipe.name!r} missing from eval/classification.json")
            reports[recipe.name] = classification_report(
                ConfusionMatrix(np.array(cls[recipe.name]["confusion"], dtype=np.int64)))
        rows1 = table1_rows(reports)
        algos = self.config.clustering["algorithms"]
        scores = {s: {a: sil[s].get(a) for a in algos} for s in self.sources()}
        rows2 = table2_rows(scores, algos)
        cols2 = ("Model",) + tuple(ALGORITHMS[a] for a in algos)
        written = []
        self._write_text("reports/table1.csv", to_csv(TABLE1_COLUMNS, rows1), written)
        self._write_text("reports/table2.csv", to_csv(cols2, rows2), written)
        categories = self._need("data/categories.txt", "ingest").read_text(encoding="utf-8").splitlines()
        undefined = [f"{name}: {metric} of {categories[c]}"
                     for name in reports for metric, c in cls[name]["undefined"]]
        note1 = ("\nPrecision, Recall and F1-score are macro averages over categories, "
                 "evaluated on the test split.\n")
        if undefined:
            note1 += "Undefined per-category ratios counted as 0: " + "; ".join(undefined) + ".\n"
        self._write_text("reports/table1.md", to_markdown(TABLE1_COLUMNS, rows1) + note1, written)
        note2 = ("\nSilhouette score of each test-split embedding under its own cluster "
                 f"assignments (K = {self._k()}); n/a marks a clustering with fewer than 2 clusters.\n")
        self._write_text("reports/table2.md", to_markdown(cols2, rows2) + note2, written)
        return written

    def stage_visualize(self):
        written = []
        self.path("plots").mkdir(parents=True, exist_ok=True)
        for source in self.sources():
            X, _ = self.load_embedding(source)
            if X.shape[1] == 2:
                layout = X
            elif X.shape[1] == 1:
                layout = np.column_stack([X[:, 0], np.zeros(len(X))])
            else:
                layout = pca_transform(pca_fit(X, 2), X)
            for algo in self.config.clustering["algorithms"]:
                assign = self.load_assignments(source, algo)
                rel = f"plots/{_fname(source)}-{algo}.svg"
                write_scatter(self.path(rel), layout, assign,
                              title=f"{source}: {ALGORITHMS[algo]} clusters",
                              label_names={int(a): f"cluster {int(a)}" for a in np.unique(assign)})
                written.append(rel)
        return written

    # -- orchestration
    def run_stage(self, stage):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
        self.out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        try:
            written = getattr(self, f"stage_{stage}")()
        except Exception as exc:
            raise StageError(stage, exc) from exc
        elapsed = time.perf_counter() - t0
        manifest = self._manifest()
        manifest.stage_seconds[stage] = elapsed
        manifest.artifacts[stage] = {rel: sha256_file(self.path(rel)) for rel in written}
        self.path(MANIFEST).write_text(manifest.dumps(), encoding="utf-8")
        return manifest

    def _manifest(self):
        digest = self.config.digest()
        p = self.path(MANIFEST)
        if p.is_file():
            try:
                m = RunManifest.loads(p.read_text(encoding="utf-8"))
                if m.config_hash == digest:
                    return m
            except (KeyError, ValueError):
                pass
        return RunManifest(digest, self.config.seed)

    def run(self, start="ingest"):
        if start not in STAGES:
            raise ValueError(f"unknown stage {start!r}; expected one of {STAGES}")
        manifest = None
        for stage in STAGES[STAGES.index(start):]:
            manifest = self.run_stage(stage)
        return manifest


def _fname(source):
    return source.replace("+", "_")


def run_experiment(config, out_dir=None, start="ingest"):
    """Run the pipeline from ``start`` to the end; returns the RunManifest."""
    return Experiment(config, out_dir).run(start)


def write_synthetic(config, out_dir):
    """Render the configured shapes benchmark as a ``<out>/<category>/`` dataset tree."""
    if config.data["source"] != "synthetic":
        raise ConfigError("[data] source is not 'synthetic'")
    ds = generate_synthetic(ShapesSpec(**config.data["shapes"]), seed=config.seed)
    out = Path(out_dir)
    written = []
    for c, name in enumerate(ds.category_names):
        members = ds.subset(np.flatnonzero(ds.labels == c))
        (out / name).mkdir(parents=True, exist_ok=True)
        p = out / name / f"{name}.fsdt"
        write_container(members, p)
        written.append(p)
    return written
