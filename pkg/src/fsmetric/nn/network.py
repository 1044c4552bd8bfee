import copy

import numpy as np

from ..errors import ShapeError, StateError
from .layers import Softmax


class Network:
    """Ordered chain of layers with a per-layer frozen mask.

    ``input_shape`` is the per-sample shape, e.g. ``(32, 32, 1)``.  Layer
    compatibility is checked once at construction.
    """

    def __init__(self, layers, input_shape, frozen=None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.frozen = list(frozen) if frozen is not None else [False] * len(self.layers)
        if len(self.frozen) != len(self.layers):
            raise ValueError("frozen mask length must equal the number of layers")
        self.shapes = self._chain_shapes()
        self._span = None
        self._grads_ready = False

    def _chain_shapes(self):
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.output_shape(shapes[-1])))
            except ShapeError as exc:
                prev = f"layer {i - 1} ({self.layers[i - 1]!r})" if i else "network input"
                raise ShapeError(
                    f"layer {i} ({layer!r}) cannot follow {prev} producing {shapes[-1]}: {exc}"
                ) from None
        return shapes

    def __len__(self):
        return len(self.layers)

    def __repr__(self):
        body = ", ".join(
            repr(l) + ("*" if f else "") for l, f in zip(self.layers, self.frozen))
        return f"Network({self.input_shape} -> [{body}])"

    @property
    def output_shape(self):
        return self.shapes[-1]

    @property
    def dtype(self):
        for layer in self.layers:
            for p in layer.params.values():
                return p.dtype
        return np.dtype(np.float32)

    @property
    def logits_end(self):
        """Index one past the last layer that precedes a trailing softmax."""
        if self.layers and isinstance(self.layers[-1], Softmax):
            return len(self.layers) - 1
        return len(self.layers)

    def forward(self, x, start=0, end=None):
        """Run layers ``[start, end)`` on a batch, caching activations for backward."""
        end = len(self.layers) if end is None else end
        expected = self.shapes[start]
        if tuple(x.shape[1:]) != expected:
            where = "network input" if start == 0 else f"input of layer {start}"
            raise ShapeError(f"{where} expects per-sample shape {expected}, got {tuple(x.shape[1:])}")
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers[start:end]:
            x = layer.forward(x)
        self._span = (start, end)
        self._grads_ready = False
        return x

    def predict(self, x, start=0, end=None, batch_size=256):
        """Batched forward without keeping caches around afterwards."""
        outs = [self.forward(x[i:i + batch_size], start, end)
                for i in range(0, len(x), batch_size)]
        self.clear_cache()
        return np.concatenate(outs, axis=0)

    def backward(self, grad, input_grad=False):
        """Backpropagate ``grad`` (d loss / d output of the last forward).

        Trainable layers get their gradient slots filled; frozen layers pass
        gradients through but record zeros.  Propagation below the lowest
        trainable layer is skipped unless ``input_grad`` is set, in which
        case the gradient w.r.t. the forward input is returned.
        """
        if self._span is None:
            raise StateError("backward called without a prior forward")
        start, end = self._span
        if input_grad:
            lowest = start
        else:
            trainable = [i for i in range(start, end) if not self.frozen[i]]
            lowest = trainable[0] if trainable else end
        g = np.asarray(grad, dtype=self.dtype)
        for i in range(end - 1, lowest - 1, -1):
            layer = self.layers[i]
            g = layer.backward(g, need_input_grad=(i > lowest or input_grad))
            if self.frozen[i]:
                layer.zero_grad()
        for i in range(start, lowest):
            self.layers[i].zero_grad()
        for i in list(range(0, start)) + list(range(end, len(self.layers))):
            self.layers[i].zero_grad()
        self._grads_ready = True
        return g if input_grad else None

    def clear_cache(self):
        for layer in self.layers:
            layer._cache = None
        self._span = None

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()
        self._grads_ready = False

    def parameters(self, include_frozen=False):
        """Yield (layer index, name, array) for every parameter tensor."""
        for i, layer in enumerate(self.layers):
            if self.frozen[i] and not include_frozen:
                continue
            for name, p in layer.params.items():
                yield i, name, p

    def num_params(self):
        return sum(p.size for _, _, p in self.parameters(include_frozen=True))

    def freeze(self, indices=None):
        indices = range(len(self.layers)) if indices is None else indices
        for i in indices:
            self.frozen[i] = True

    def copy(self):
        self.clear_cache()
        return copy.deepcopy(self)

    def astype(self, dtype):
        net = self.copy()
        for layer in net.layers:
            for name in layer.params:
                layer.params[name] = layer.params[name].astype(dtype)
            layer.grads = {}
        return net

    def state(self):
        """Flat list of parameter arrays (all layers, frozen included), in layer order."""
        return [p for _, _, p in self.parameters(include_frozen=True)]


def sequential(input_shape, *layers):
    return Network(layers, input_shape)


def concat(first, second):
    """Chain two networks into one; frozen flags carry over."""
    if first.output_shape != second.input_shape:
        raise ShapeError(
            f"cannot chain: first network produces {first.output_shape}, "
            f"second expects {second.input_shape}")
    return Network(first.layers + second.layers, first.input_shape, first.frozen + second.frozen)
