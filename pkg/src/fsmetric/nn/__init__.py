"""Minimal sequential neural-network engine with exact gradients."""

from .checkpoint import dumps_network, load_network, loads_network, save_network
from .gradcheck import grad_check, kink_distance
from .layers import Conv2D, Flatten, Layer, Linear, MaxPool2D, ReLU, Sigmoid, Softmax, softmax
from .losses import contrastive_loss, cross_entropy
from .network import Network, concat, sequential
from .optim import SGD

__all__ = [
    "Conv2D", "Flatten", "Layer", "Linear", "MaxPool2D", "ReLU", "Sigmoid", "Softmax",
    "Network", "SGD", "concat", "contrastive_loss", "cross_entropy", "dumps_network",
    "grad_check", "kink_distance", "load_network", "loads_network", "save_network",
    "sequential", "softmax",
]
