import numpy as np

from ..errors import StateError


class SGD:
    """Plain SGD with optional (heavy-ball) momentum.

    Velocity buffers are keyed by (layer index, parameter name) and mirror
    the parameter shapes.  Frozen layers are never touched.
    """

    def __init__(self, lr=0.01, momentum=0.0):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        self.lr = lr
        self.momentum = momentum
        self.velocity = {}
        self.steps = 0

    def step(self, net):
        if not net._grads_ready:
            raise StateError("optimizer step requested before backward")
        for i, name, p in net.parameters():
            g = net.layers[i].grads[name]
            if self.momentum:
                v = self.velocity.get((i, name))
                if v is None:
                    v = np.zeros_like(p)
                v *= self.momentum
                v -= self.lr * g
                self.velocity[(i, name)] = v
                p += v
            else:
                p -= (self.lr * g).astype(p.dtype, copy=False)
        net.zero_grad()
        self.steps += 1
