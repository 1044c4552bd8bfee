"""Model recipes: logistic regression, CNN, transfer, Siamese and Siamese-transfer.

Every recipe is trained with the sequential engine in ``fsmetric.nn``.  The
Siamese kinds train a single embedding network on pairs with the
contrastive loss and classify by nearest category prototype.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .data import sample_pairs
from .errors import DivergenceError, ShapeError

KINDS = ("logistic-regression", "cnn", "transfer", "siamese", "siamese-transfer")
SIAMESE_KINDS = ("siamese", "siamese-transfer")


@dataclass
class ModelRecipe:
    kind: str
    name: str = ""
    conv_channels: tuple = (8, 16, 16, 32, 32)
    hidden: tuple = (64, 64, 32, 32)
    embedding_dim: int = 16
    embedding_hidden: tuple = ()
    epochs: int = 50
    pretrain_epochs: int = 50
    batch_size: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    margin: float = 1.0
    pairs_per_sample: int = 10
    positive_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        self.name = self.name or self.kind
        self.conv_channels = tuple(int(c) for c in self.conv_channels)
        self.hidden = tuple(int(h) for h in self.hidden)
        self.embedding_hidden = tuple(int(h) for h in self.embedding_hidden)
        if len(self.conv_channels) != 5 or len(self.hidden) != 4:
            raise ValueError("the CNN has 5 convolution blocks and 5 linear layers (4 hidden widths)")
        if self.kind in SIAMESE_KINDS and self.embedding_dim < 2:
            raise ValueError("siamese embedding dimension must be at least 2")
        positive = [self.embedding_dim, self.batch_size, self.lr, self.margin,
                    self.pairs_per_sample, *self.conv_channels, *self.hidden,
                    *self.embedding_hidden]
        if min(positive) <= 0 or self.epochs < 0 or self.pretrain_epochs < 0:
            raise ValueError("recipe hyperparameters must be positive")
        if not 0 <= self.momentum < 1 or not 0 < self.positive_ratio < 1:
            raise ValueError("momentum must lie in [0, 1) and positive_ratio in (0, 1)")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


@dataclass
class TrainedModel:
    recipe: ModelRecipe
    network: nn.Network
    num_categories: int
    prototypes: np.ndarray = None
    trace: list = field(default_factory=list)

    @property
    def is_siamese(self):
        return self.recipe.kind in SIAMESE_KINDS


# architectures -------------------------------------------------------------

def conv_stack(input_shape, channels, rng):
    """Five (conv 3x3 same -> relu -> max-pool 2) blocks."""
    h, w, c = input_shape
    if h != w or h < 32:
        raise ShapeError(f"convolutional models need square inputs of at least 32x32, got {input_shape}")
    layers = []
    prev = c
    for ch in channels:
        layers += [nn.Conv2D(prev, ch, 3, padding=1, rng=rng), nn.ReLU(), nn.MaxPool2D(2)]
        prev = ch
    return nn.Network(layers, input_shape)


def _dense_head(in_features, widths, out, rng):
    layers = []
    prev = in_features
    for width in widths:
        layers += [nn.Linear(prev, width, rng=rng), nn.ReLU()]
        prev = width
    layers.append(nn.Linear(prev, out, rng=rng, gain=1.0))
    return layers


def build_logistic_regression(input_shape, num_categories, rng):
    d = int(np.prod(input_shape))
    return nn.Network([nn.Flatten(), nn.Linear(d, num_categories, rng=rng, gain=1.0), nn.Softmax()],
                      input_shape)


def build_cnn(input_shape, num_categories, recipe, rng):
    stack = conv_stack(input_shape, recipe.conv_channels, rng)
    flat = int(np.prod(stack.output_shape))
    head = nn.Network([nn.Flatten()] + _dense_head(flat, recipe.hidden, num_categories, rng)
                      + [nn.Softmax()], stack.output_shape)
    return nn.concat(stack, head)


def _classifier_head(backbone, num_categories, rng):
    flat = int(np.prod(backbone.output_shape))
    return nn.Network([nn.Flatten(), nn.Linear(flat, num_categories, rng=rng, gain=1.0), nn.Softmax()],
                      backbone.output_shape)


def build_siamese(input_shape, recipe, rng, backbone=None, freeze=False):
    if backbone is None:
        stack = conv_stack(input_shape, recipe.conv_channels, rng)
    else:
        if backbone.input_shape != tuple(input_shape):
            raise ShapeError(f"backbone expects {backbone.input_shape}, data has {tuple(input_shape)}")
        stack = backbone.copy()
        stack.frozen = [freeze] * len(stack)
    flat = int(np.prod(stack.output_shape))
    head = nn.Network([nn.Flatten()] + _dense_head(flat, recipe.embedding_hidden,
                                                   recipe.embedding_dim, rng),
                      stack.output_shape)
    return nn.concat(stack, head)


# training ------------------------------------------------------------------

def _rng(recipe, stream):
    return np.random.default_rng([recipe.seed, stream])


def _frozen_prefix(net):
    k = 0
    while k < len(net) and net.frozen[k]:
        k += 1
    return k


def _check_finite(loss, epoch, name):
    if not np.isfinite(loss):
        raise DivergenceError(f"{name}: non-finite loss at epoch {epoch}", epoch=epoch)


def _fit_classifier(net, x, y, x_val, y_val, recipe, stream):
    """Minibatch cross-entropy training; a leading frozen block is evaluated once and cached."""
    start = _frozen_prefix(net)
    end = net.logits_end
    feats = net.predict(x, end=start) if start else x
    feats_val = net.predict(x_val, end=start) if start and len(x_val) else x_val
    opt = nn.SGD(recipe.lr, recipe.momentum)
    rng = _rng(recipe, stream)
    trace = []
    n = len(feats)
    for epoch in range(1, recipe.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, recipe.batch_size):
            idx = order[i:i + recipe.batch_size]
            loss, grad = nn.cross_entropy(net.forward(feats[idx], start, end), y[idx])
            _check_finite(loss, epoch, recipe.name)
            net.backward(grad)
            opt.step(net)
            total += loss * len(idx)
        val_acc = None
        if len(feats_val):
            pred = net.predict(feats_val, start, end).argmax(axis=1)
            val_acc = float((pred == y_val).mean())
        trace.append({"epoch": epoch, "loss": total / n, "val_accuracy": val_acc})
    net.clear_cache()
    return trace


def _arrays(ds):
    return ds.images(), ds.labels


def train_logistic_regression(split, recipe):
    train, val = split.train, split.validation
    x, y = _arrays(train)
    xv, yv = _arrays(val)
    net = build_logistic_regression(x.shape[1:], train.num_categories, _rng(recipe, 0))
    trace = _fit_classifier(net, x, y, xv, yv, recipe, stream=1)
    return TrainedModel(recipe, net, train.num_categories, trace=trace)


def train_cnn(split, recipe):
    train, val = split.train, split.validation
    x, y = _arrays(train)
    xv, yv = _arrays(val)
    net = build_cnn(x.shape[1:], train.num_categories, recipe, _rng(recipe, 0))
    trace = _fit_classifier(net, x, y, xv, yv, recipe, stream=1)
    return TrainedModel(recipe, net, train.num_categories, trace=trace)


def pretrain_backbone(aux, recipe, return_trace=False):
    """Train a CNN on an auxiliary task and keep only its convolutional stack."""
    x, y = _arrays(aux)
    rng = _rng(recipe, 10)
    net = build_cnn(x.shape[1:], aux.num_categories, recipe, rng)
    pre = ModelRecipe(**{**asdict(recipe), "epochs": recipe.pretrain_epochs})
    trace = _fit_classifier(net, x, y, x[:0], y[:0], pre, stream=11)
    n_conv = 3 * len(recipe.conv_channels)
    backbone = nn.Network(net.layers[:n_conv], net.input_shape)
    return (backbone, trace) if return_trace else backbone


def transfer_train(split, backbone, recipe):
    """Freeze ``backbone`` and train an appended linear + softmax head."""
    train, val = split.train, split.validation
    x, y = _arrays(train)
    xv, yv = _arrays(val)
    if backbone.input_shape != tuple(x.shape[1:]):
        raise ShapeError(f"backbone expects {backbone.input_shape}, data has {x.shape[1:]}")
    frozen = backbone.copy()
    frozen.freeze()
    net = nn.concat(frozen, _classifier_head(frozen, train.num_categories, _rng(recipe, 0)))
    trace = _fit_classifier(net, x, y, xv, yv, recipe, stream=1)
    return TrainedModel(recipe, net, train.num_categories, trace=trace)


def compute_prototypes(embeddings, labels, num_categories):
    protos = np.zeros((num_categories, embeddings.shape[1]), dtype=np.float64)
    for c in range(num_categories):
        members = embeddings[labels == c]
        if len(members):
            protos[c] = members.astype(np.float64).mean(axis=0)
    return protos


def nearest_prototype(embeddings, prototypes):
    """Index of the closest prototype (Euclidean); ties go to the lowest index."""
    e = np.asarray(embeddings, dtype=np.float64)
    d2 = ((e[:, None, :] - prototypes[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)


def train_siamese(split, recipe, backbone=None):
    """Contrastive training of one shared embedding network on sampled pairs.

    Both members of every pair go through the same ``Network`` in a single
    stacked forward pass, so gradients from both branches accumulate in one
    parameter set.
    """
    train, val = split.train, split.validation
    x, y = _arrays(train)
    xv, yv = _arrays(val)
    freeze = recipe.kind == "siamese-transfer" and backbone is not None
    net = build_siamese(x.shape[1:], recipe, _rng(recipe, 0), backbone, freeze)
    start = _frozen_prefix(net)
    feats = net.predict(x, end=start) if start else x
    feats_val = net.predict(xv, end=start) if start and len(xv) else xv
    opt = nn.SGD(recipe.lr, recipe.momentum)
    n_pairs = recipe.pairs_per_sample * len(x)
    half = max(1, recipe.batch_size)
    trace = []
    for epoch in range(1, recipe.epochs + 1):
        pairs = sample_pairs(train, n_pairs, recipe.positive_ratio,
                             seed=[recipe.seed, 2, epoch], labels=y)
        total = 0.0
        for i in range(0, n_pairs, half):
            a, b = pairs.a[i:i + half], pairs.b[i:i + half]
            m = len(a)
            out = net.forward(np.concatenate([feats[a], feats[b]]), start)
            loss, g1, g2 = nn.contrastive_loss(out[:m], out[m:], pairs.same[i:i + half], recipe.margin)
            _check_finite(loss, epoch, recipe.name)
            net.backward(np.concatenate([g1, g2]))
            opt.step(net)
            total += loss * m
        val_acc = None
        if len(feats_val):
            protos = compute_prototypes(net.predict(feats, start), y, train.num_categories)
            val_acc = float((nearest_prototype(net.predict(feats_val, start), protos) == yv).mean())
        trace.append({"epoch": epoch, "loss": total / n_pairs, "val_accuracy": val_acc})
    net.clear_cache()
    protos = compute_prototypes(net.predict(x), y, train.num_categories)
    return TrainedModel(recipe, net, train.num_categories, prototypes=protos, trace=trace)


def train(split, recipe, backbone=None):
    """Dispatch on ``recipe.kind``.  Transfer kinds require ``backbone``."""
    if recipe.kind == "logistic-regression":
        return train_logistic_regression(split, recipe)
    if recipe.kind == "cnn":
        return train_cnn(split, recipe)
    if recipe.kind == "transfer":
        if backbone is None:
            raise ValueError("transfer recipe needs a pretrained backbone")
        return transfer_train(split, backbone, recipe)
    if recipe.kind == "siamese-transfer" and backbone is None:
        raise ValueError("siamese-transfer recipe needs a pretrained backbone")
    return train_siamese(split, recipe, backbone)


# inference -----------------------------------------------------------------

def embed(model, ds):
    """(N, D) embeddings and labels; pre-softmax activations for classifier kinds."""
    x, y = _arrays(ds)
    end = None if model.is_siamese else model.network.logits_end
    return model.network.predict(x, end=end), y


def prototype_classify(model, ds):
    if model.prototypes is None:
        raise ValueError(f"model {model.recipe.name!r} has no prototypes")
    e, _ = embed(model, ds)
    return nearest_prototype(e, model.prototypes)


def evaluate(model, ds):
    """Predicted category per sample."""
    if model.is_siamese:
        return prototype_classify(model, ds)
    e, _ = embed(model, ds)
    return e.argmax(axis=1)


# persistence ---------------------------------------------------------------

def save_model(model, path):
    meta = {"recipe": json.loads(model.recipe.to_json()),
            "num_categories": model.num_categories, "trace": model.trace}
    sections = {"RCPE": json.dumps(meta, sort_keys=True).encode()}
    if model.prototypes is not None:
        c, d = model.prototypes.shape
        sections["PROT"] = struct.pack("<II", c, d) + model.prototypes.astype("<f4").tobytes()
    nn.save_network(model.network, path, sections)


def load_model(path):
    net, sections = nn.load_network(path)
    meta = json.loads(sections["RCPE"].decode())
    protos = None
    if "PROT" in sections:
        c, d = struct.unpack_from("<II", sections["PROT"])
        protos = np.frombuffer(sections["PROT"], dtype="<f4", offset=8).reshape(c, d).astype(np.float64)
    return TrainedModel(ModelRecipe(**meta["recipe"]), net, meta["num_categories"],
                        prototypes=protos, trace=meta["trace"])
