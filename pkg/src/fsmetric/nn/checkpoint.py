"""Binary network container.

Layout (all integers little-endian u32 unless noted)::

    b"FSEM" | version | ndim | input dims... | layer count
    per layer: kind code (u8) | frozen (u8) | n config | config...
               | n params | per param: name length (u8) | name
               | ndim | dims... | float32 LE payload
    n sections | per section: 4-byte tag | byte length | payload

Trailing sections let callers attach extra blocks (e.g. prototypes).
"""

import io
import struct

import numpy as np

from ..errors import FormatError
from .layers import KINDS, build_layer
from .network import Network

MAGIC = b"FSEM"
VERSION = 1


def _u32(f, *values):
    f.write(struct.pack(f"<{len(values)}I", *values))


def _read(f, n):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("truncated network container")
    return buf


def _r32(f, count=1):
    vals = struct.unpack(f"<{count}I", _read(f, 4 * count))
    return vals if count > 1 else vals[0]


def dumps_network(net, sections=None):
    f = io.BytesIO()
    f.write(MAGIC)
    _u32(f, VERSION, len(net.input_shape), *net.input_shape, len(net.layers))
    for layer, frozen in zip(net.layers, net.frozen):
        f.write(struct.pack("<BB", KINDS.index(layer.kind), int(frozen)))
        cfg = layer.config()
        _u32(f, len(cfg), *cfg)
        _u32(f, len(layer.params))
        for name, p in layer.params.items():
            raw = name.encode()
            f.write(struct.pack("<B", len(raw)) + raw)
            _u32(f, p.ndim, *p.shape)
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
    sections = sections or {}
    _u32(f, len(sections))
    for tag, payload in sections.items():
        tag = tag.encode() if isinstance(tag, str) else tag
        if len(tag) != 4:
            raise ValueError("section tags are exactly 4 bytes")
        f.write(tag)
        _u32(f, len(payload))
        f.write(payload)
    return f.getvalue()


def loads_network(data):
    f = io.BytesIO(data)
    if _read(f, 4) != MAGIC:
        raise FormatError("not a network container (bad magic)")
    version = _r32(f)
    if version != VERSION:
        raise FormatError(f"unsupported network container version {version}")
    ndim = _r32(f)
    input_shape = tuple(np.atleast_1d(_r32(f, ndim))) if ndim else ()
    n_layers = _r32(f)
    layers, frozen = [], []
    for _ in range(n_layers):
        code, fz = struct.unpack("<BB", _read(f, 2))
        if code >= len(KINDS):
            raise FormatError(f"unknown layer kind code {code}")
        n_cfg = _r32(f)
        cfg = tuple(np.atleast_1d(_r32(f, n_cfg))) if n_cfg else ()
        layer = build_layer(KINDS[code], tuple(int(c) for c in cfg))
        n_params = _r32(f)
        for _ in range(n_params):
            (name_len,) = struct.unpack("<B", _read(f, 1))
            name = _read(f, name_len).decode()
            pdim = _r32(f)
            shape = tuple(int(s) for s in np.atleast_1d(_r32(f, pdim))) if pdim else ()
            count = int(np.prod(shape))
            arr = np.frombuffer(_read(f, 4 * count), dtype="<f4").reshape(shape)
            layer.params[name] = arr.astype(np.float32)
        layers.append(layer)
        frozen.append(bool(fz))
    sections = {}
    for _ in range(_r32(f)):
        tag = _read(f, 4).decode()
        sections[tag] = _read(f, _r32(f))
    net = Network(layers, tuple(int(s) for s in input_shape), frozen)
    return net, sections


def save_network(net, path, sections=None):
    with open(path, "wb") as f:
        f.write(dumps_network(net, sections))


def load_network(path):
    with open(path, "rb") as f:
        return loads_network(f.read())
