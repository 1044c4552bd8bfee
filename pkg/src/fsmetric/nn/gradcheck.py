"""Finite-difference verification of analytic gradients (float64 only)."""

import numpy as np

from ..errors import DivergenceError
from .layers import MaxPool2D, ReLU
from .losses import cross_entropy

MAX_CHECK_PARAMS = 10_000


def _default_loss(net):
    def loss(out, labels):
        return cross_entropy(out, labels)
    return loss, net.logits_end


def grad_check(net, x, labels=None, eps=1e-5, loss=None, end=None, floor=1e-5):
    """Max relative error between backprop and central-difference gradients.

    The network is copied to float64 first; ``net`` itself is untouched.
    ``loss(output, labels) -> (value, d_output)`` defaults to cross-entropy
    on the pre-softmax output.  Frozen layers are not checked (their
    gradient slots are zero by contract).

    Per entry the error is |a - n| / max(|a|, |n|, floor).  The floor sits
    well above central-difference roundoff (about 1e-10 in float64 for the
    networks here), so gradients that are exactly zero, such as biases that
    cancel between the two members of a pair, are judged on an absolute
    scale rather than as noise divided by noise.
    """
    net64 = net.astype(np.float64)
    if net64.num_params() > MAX_CHECK_PARAMS:
        raise ValueError(f"network has {net64.num_params()} parameters; "
                         f"grad_check is limited to {MAX_CHECK_PARAMS}")
    x = np.asarray(x, dtype=np.float64)
    if loss is None:
        loss, default_end = _default_loss(net64)
        end = default_end if end is None else end

    def evaluate():
        value, d_out = loss(net64.forward(x, end=end), labels)
        if not np.isfinite(value):
            raise DivergenceError("non-finite loss during gradient check")
        return value, d_out

    _, d_out = evaluate()
    net64.backward(d_out)
    analytic = {(i, name): net64.layers[i].grads[name].copy()
                for i, name, _ in net64.parameters()}

    worst = 0.0
    for i, name, p in net64.parameters():
        flat = p.reshape(-1)
        ana = analytic[(i, name)].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            f_plus, _ = evaluate()
            flat[k] = orig - eps
            f_minus, _ = evaluate()
            flat[k] = orig
            num = (f_plus - f_minus) / (2 * eps)
            denom = max(abs(ana[k]), abs(num), floor)
            worst = max(worst, abs(ana[k] - num) / denom)
    return worst


def kink_distance(net, x, end=None):
    """Smallest distance of any ReLU input from 0 or any max-pool runner-up from its max.

    Finite differences straddling such points are meaningless, so callers
    redraw inputs until this is comfortably larger than the step size.
    """
    end = len(net.layers) if end is None else end
    h = np.asarray(x, dtype=np.float64)
    closest = np.inf
    clamped = False  # h holds ReLU outputs, whose exact zeros are locally constant
    for layer in net.layers[:end]:
        if isinstance(layer, ReLU) and h.size:
            closest = min(closest, float(np.abs(h).min()))
        elif isinstance(layer, MaxPool2D):
            n, hh, ww, c = h.shape
            s = layer.size
            ho, wo = hh // s, ww // s
            win = h[:, :ho * s, :wo * s, :].reshape(n, ho, s, wo, s, c)
            win = np.sort(win.transpose(0, 1, 3, 5, 2, 4).reshape(-1, s * s), axis=1)
            if clamped:
                win = win[win[:, -1] > 0]
            if len(win):
                closest = min(closest, float((win[:, -1] - win[:, -2]).min()))
        clamped = isinstance(layer, ReLU) or (clamped and isinstance(layer, MaxPool2D))
        h = layer.forward(h.astype(net.dtype)).astype(np.float64)
    net.clear_cache()
    return closest
