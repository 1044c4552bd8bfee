"""Sequential layer kinds with explicit forward/backward passes.

Image tensors are laid out NHWC (batch, height, width, channels); dense
tensors are (batch, features).  Every layer caches what its backward pass
needs during ``forward``.
"""

import numpy as np

from ..errors import ShapeError, StateError

KINDS = ("convolution", "linear", "relu", "sigmoid", "softmax", "max-pool", "flatten")


class Layer:
    kind = None

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def output_shape(self, input_shape):
        """Per-sample output shape for a per-sample input shape."""
        return tuple(input_shape)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout, need_input_grad=True):
        raise NotImplementedError

    def zero_grad(self):
        self.grads = {name: np.zeros_like(p) for name, p in self.params.items()}

    def config(self):
        """Integer hyperparameters that, with the kind, rebuild the layer."""
        return ()

    def _cached(self):
        if self._cache is None:
            raise StateError(f"{self.kind} layer: backward called without a prior forward")
        return self._cache

    def __repr__(self):
        cfg = ", ".join(str(c) for c in self.config())
        return f"{type(self).__name__}({cfg})"


def _fan_in_uniform(rng, shape, fan_in, gain, dtype):
    bound = np.sqrt(3.0 * gain / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2D(Layer):
    """2-D convolution, weights shaped (kh, kw, in_channels, out_channels)."""

    kind = "convolution"

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, padding=0,
                 rng=None, gain=2.0, dtype=np.float32):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        rng = np.random.default_rng(0) if rng is None else rng
        k = kernel_size
        fan_in = in_channels * k * k
        self.params["W"] = _fan_in_uniform(rng, (k, k, in_channels, out_channels), fan_in, gain, dtype)
        self.params["b"] = np.zeros(out_channels, dtype=dtype)

    def config(self):
        return (self.in_channels, self.out_channels, self.kernel_size, self.stride, self.padding)

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[2] != self.in_channels:
            raise ShapeError(
                f"convolution expects (H, W, {self.in_channels}) input, got {tuple(input_shape)}")
        h, w, _ = input_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"convolution kernel {k} does not fit input {tuple(input_shape)}")
        return (ho, wo, self.out_channels)

    def forward(self, x):
        ho, wo, _ = self.output_shape(x.shape[1:])
        k, s, p = self.kernel_size, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        # im2col with (kh, kw, C) column order, built from contiguous shifted slices
        cols = np.concatenate(
            [xp[:, i:i + s * ho:s, j:j + s * wo:s, :] for i in range(k) for j in range(k)], axis=-1)
        n = x.shape[0]
        cols = cols.reshape(n * ho * wo, -1)
        out = cols @ self.params["W"].reshape(-1, self.out_channels) + self.params["b"]
        self._cache = (xp.shape, cols, (n, ho, wo))
        return out.reshape(n, ho, wo, self.out_channels)

    def backward(self, dout, need_input_grad=True):
        xp_shape, cols, (n, ho, wo) = self._cached()
        k, s, p = self.kernel_size, self.stride, self.padding
        d2 = dout.reshape(-1, self.out_channels)
        self.grads["W"] = (cols.T @ d2).reshape(self.params["W"].shape)
        self.grads["b"] = d2.sum(axis=0)
        if not need_input_grad:
            return None
        c = self.in_channels
        dcols = (d2 @ self.params["W"].reshape(-1, self.out_channels).T).reshape(n, ho, wo, k * k * c)
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                q = (i * k + j) * c
                dxp[:, i:i + s * ho:s, j:j + s * wo:s, :] += dcols[..., q:q + c]
        if p:
            dxp = dxp[:, p:-p, p:-p, :]
        return dxp


class Linear(Layer):
    """Affine map y = x W + b with W shaped (in_features, out_features)."""

    kind = "linear"

    def __init__(self, in_features, out_features, rng=None, gain=2.0, dtype=np.float32):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        rng = np.random.default_rng(0) if rng is None else rng
        self.params["W"] = _fan_in_uniform(rng, (in_features, out_features), in_features, gain, dtype)
        self.params["b"] = np.zeros(out_features, dtype=dtype)

    def config(self):
        return (self.in_features, self.out_features)

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.in_features,):
            raise ShapeError(
                f"linear expects ({self.in_features},) input, got {tuple(input_shape)}")
        return (self.out_features,)

    def forward(self, x):
        self.output_shape(x.shape[1:])
        self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout, need_input_grad=True):
        x = self._cached()
        self.grads["W"] = x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        if not need_input_grad:
            return None
        return dout @ self.params["W"].T


class ReLU(Layer):
    """Rectifier; the subgradient at exactly 0 is taken to be 0."""

    kind = "relu"

    def forward(self, x):
        out = np.maximum(x, 0)
        self._cache = x > 0
        return out

    def backward(self, dout, need_input_grad=True):
        return dout * self._cached()


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x):
        # split by sign to avoid overflow in exp
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._cache = out
        return out

    def backward(self, dout, need_input_grad=True):
        out = self._cached()
        return dout * out * (1 - out)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class Softmax(Layer):
    """Row-wise softmax over the feature axis."""

    kind = "softmax"

    def output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise ShapeError(f"softmax expects flat input, got {tuple(input_shape)}")
        return tuple(input_shape)

    def forward(self, x):
        self.output_shape(x.shape[1:])
        out = softmax(x)
        self._cache = out
        return out

    def backward(self, dout, need_input_grad=True):
        s = self._cached()
        return s * (dout - (dout * s).sum(axis=1, keepdims=True))


class MaxPool2D(Layer):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.

    The gradient of each window goes to its first maximal element (row-major).
    """

    kind = "max-pool"

    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def config(self):
        return (self.size,)

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ShapeError(f"max-pool expects (H, W, C) input, got {tuple(input_shape)}")
        h, w, c = input_shape
        if h < self.size or w < self.size:
            raise ShapeError(f"max-pool window {self.size} larger than input {tuple(input_shape)}")
        return (h // self.size, w // self.size, c)

    def forward(self, x):
        ho, wo, c = self.output_shape(x.shape[1:])
        s = self.size
        views = [x[:, i:ho * s:s, j:wo * s:s, :] for i in range(s) for j in range(s)]
        out = views[0]
        for v in views[1:]:
            out = np.maximum(out, v)
        self._cache = (x.shape, views, out)
        return out

    def backward(self, dout, need_input_grad=True):
        x_shape, views, out = self._cached()
        s = self.size
        dx = np.zeros(x_shape, dtype=dout.dtype)
        ho, wo = out.shape[1:3]
        taken = np.zeros(out.shape, dtype=bool)
        for q, v in enumerate(views):
            i, j = divmod(q, s)
            hit = v == out
            hit &= ~taken
            taken |= hit
            dx[:, i:ho * s:s, j:wo * s:s, :] = dout * hit
        return dx


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout, need_input_grad=True):
        return dout.reshape(self._cached())


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, Linear, ReLU, Sigmoid, Softmax, MaxPool2D, Flatten)}


def build_layer(kind, config, dtype=np.float32):
    """Rebuild an (uninitialised-parameter) layer from its kind and config tuple."""
    cls = LAYER_TYPES[kind]
    if cls is Conv2D:
        cin, cout, k, s, p = config
        return Conv2D(cin, cout, k, s, p, dtype=dtype)
    if cls is Linear:
        return Linear(*config, dtype=dtype)
    if cls is MaxPool2D:
        return MaxPool2D(*config)
    return cls()
