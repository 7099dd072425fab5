"""Minimal convolutional network core with exact forward and backward passes.

Tensors are plain numpy arrays (row-major, float32 for training, float64 for
gradient checking). The layer set is fixed: Conv2D (3x3, stride 1, pad 1),
ReLU, MaxPool2x2, GlobalAvgPool and Dense. Every layer exposes
``forward(x) -> (out, cache)`` and ``backward(dout, cache) -> (dx, grads)``
so gradients stay checkable against finite differences; no hidden state is
mutated during inference, which keeps frozen models safe for concurrent
callers.

The default classifier ("MiniConvNet") is four Conv-ReLU-MaxPool stages with
16/32/64/128 channels followed by global average pooling and a dense output
layer sized to the class count.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = b"GTCKPT1\n"


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"{what} contains non-finite values")


def _im2col_3x3(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B, H*W, C*9) patch matrix for 3x3/stride1/pad1."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    # (B, C, H, W, 3, 3) -> (B, H, W, C, 3, 3) -> (B, H*W, C*9)
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        b, h * w, c * 9
    )


class Conv2D:
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved)."""

    def __init__(self, in_channels: int, out_channels: int,
                 weight: np.ndarray | None = None,
                 bias: np.ndarray | None = None):
        self.in_channels = in_channels
        self.out_channels = out_channels
        if weight is None:
            weight = np.zeros((out_channels, in_channels, 3, 3), dtype=np.float32)
        if bias is None:
            bias = np.zeros(out_channels, dtype=weight.dtype)
        if weight.shape != (out_channels, in_channels, 3, 3):
            raise ValueError(
                f"conv weight shape {weight.shape} != "
                f"{(out_channels, in_channels, 3, 3)}"
            )
        self.weight = weight
        self.bias = bias

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"conv expects (B, {self.in_channels}, H, W), got {x.shape}"
            )
        b, _, h, w = x.shape
        cols = _im2col_3x3(x)
        wmat = self.weight.reshape(self.out_channels, -1)
        out = cols @ wmat.T + self.bias
        out = out.transpose(0, 2, 1).reshape(b, self.out_channels, h, w)
        return out, (x.shape, cols)

    def backward(self, dout, cache):
        x_shape, cols = cache
        b, _, h, w = x_shape
        dmat = dout.reshape(b, self.out_channels, h * w).transpose(0, 2, 1)
        db = dmat.sum(axis=(0, 1))
        dw = np.einsum("bpo,bpk->ok", dmat, cols).reshape(self.weight.shape)
        # dx: correlate dout with the 180-degree-rotated kernel, channels
        # swapped -- same machinery as the forward pass.
        wrot = self.weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        cols_d = _im2col_3x3(dout)
        dx = cols_d @ wrot.reshape(self.in_channels, -1).T
        dx = dx.transpose(0, 2, 1).reshape(x_shape)
        return dx, {"weight": dw, "bias": db}


class ReLU:
    def params(self):
        return {}

    def forward(self, x):
        out = np.maximum(x, 0)
        return out, (x > 0)

    def backward(self, dout, cache):
        return dout * cache, {}


class MaxPool2x2:
    """2x2 max pooling, stride 2. Gradient routes to the first maximum in
    row-major window order on ties."""

    def params(self):
        return {}

    def forward(self, x):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool2x2 needs even spatial size, got {h}x{w}")
        windows = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        flat = windows.reshape(b, c, h // 2, w // 2, 4)
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return out, (x.shape, idx)

    def backward(self, dout, cache):
        x_shape, idx = cache
        b, c, h, w = x_shape
        dflat = np.zeros((b, c, h // 2, w // 2, 4), dtype=dout.dtype)
        np.put_along_axis(dflat, idx[..., None], dout[..., None], axis=-1)
        dx = dflat.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return dx.reshape(x_shape), {}


class GlobalAvgPool:
    def params(self):
        return {}

    def forward(self, x):
        b, c, h, w = x.shape
        return x.mean(axis=(2, 3)), (x.shape,)

    def backward(self, dout, cache):
        (x_shape,) = cache
        b, c, h, w = x_shape
        dx = np.broadcast_to(
            dout[:, :, None, None] / (h * w), x_shape
        ).astype(dout.dtype)
        return np.ascontiguousarray(dx), {}


class Dense:
    def __init__(self, in_features: int, out_features: int,
                 weight: np.ndarray | None = None,
                 bias: np.ndarray | None = None):
        self.in_features = in_features
        self.out_features = out_features
        if weight is None:
            weight = np.zeros((in_features, out_features), dtype=np.float32)
        if bias is None:
            bias = np.zeros(out_features, dtype=weight.dtype)
        if weight.shape != (in_features, out_features):
            raise ValueError(
                f"dense weight shape {weight.shape} != "
                f"{(in_features, out_features)}"
            )
        self.weight = weight
        self.bias = bias

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"dense expects (B, {self.in_features}), got {x.shape}"
            )
        return x @ self.weight + self.bias, (x,)

    def backward(self, dout, cache):
        (x,) = cache
        dx = dout @ self.weight.T
        dw = x.T @ dout
        db = dout.sum(axis=0)
        return dx, {"weight": dw, "bias": db}


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true labels."""
    n = probs.shape[0]
    picked = probs[np.arange(n), labels]
    return float(-np.log(np.maximum(picked, np.finfo(probs.dtype).tiny)).mean())


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Fused loss: returns (loss, dlogits, probs); dlogits = (p - onehot)/B."""
    probs = softmax(logits)
    loss = cross_entropy(probs, labels)
    n = probs.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1
    dlogits /= n
    return loss, dlogits.astype(logits.dtype), probs


@dataclass(frozen=True)
class Prediction:
    """Softmax distribution over the class set plus the argmax decision
    (ties resolve to the lowest class index)."""

    probabilities: np.ndarray
    class_index: int
    argmax_class: str


def prediction_from_probs(probs: np.ndarray, classes) -> Prediction:
    idx = int(np.argmax(probs))
    return Prediction(probabilities=probs, class_index=idx,
                      argmax_class=classes[idx])


class Sequential:
    """Ordered, named layers. Each layer has a trainable flag consulted by
    the trainer; frozen layers still participate in forward/backward."""

    def __init__(self, layers: list[tuple[str, object]]):
        names = [n for n, _ in layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        self.layers = list(layers)
        self.trainable = {name: True for name in names}

    @property
    def layer_names(self):
        return [n for n, _ in self.layers]

    def parameters(self, trainable_only: bool = False) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers:
            if trainable_only and not self.trainable[name]:
                continue
            for pname, arr in layer.params().items():
                out[f"{name}.{pname}"] = arr
        return out

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        for name, layer in self.layers:
            for pname, arr in layer.params().items():
                key = f"{name}.{pname}"
                if key in values:
                    np.copyto(arr, values[key].reshape(arr.shape))

    def forward(self, x: np.ndarray) -> np.ndarray:
        for _, layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def forward_with_caches(self, x):
        caches = []
        for _, layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        """Mean cross-entropy over the batch plus gradients for every
        parameter (frozen layers included)."""
        logits, caches = self.forward_with_caches(x)
        loss, dlogits, probs = softmax_cross_entropy(logits, labels)
        grads = {}
        d = dlogits
        for (name, layer), cache in zip(reversed(self.layers), reversed(caches)):
            d, layer_grads = layer.backward(d, cache)
            for pname, g in layer_grads.items():
                grads[f"{name}.{pname}"] = g
        return loss, grads, probs

    def predict_logits(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        outs = [self.forward(x[i:i + batch_size])
                for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)

    def astype(self, dtype) -> "Sequential":
        for _, layer in self.layers:
            for pname, arr in layer.params().items():
                setattr(layer, pname, arr.astype(dtype))
        return self

    def spec(self) -> list[dict]:
        out = []
        for name, layer in self.layers:
            entry = {"name": name, "kind": type(layer).__name__}
            if isinstance(layer, Conv2D):
                entry.update(infeat=layer.in_channels, outfeat=layer.out_channels)
            elif isinstance(layer, Dense):
                entry.update(infeat=layer.in_features, outfeat=layer.out_features)
            out.append(entry)
        return out


_LAYER_KINDS = {
    "ReLU": lambda e: ReLU(),
    "MaxPool2x2": lambda e: MaxPool2x2(),
    "GlobalAvgPool": lambda e: GlobalAvgPool(),
    "Conv2D": lambda e: Conv2D(e["infeat"], e["outfeat"]),
    "Dense": lambda e: Dense(e["infeat"], e["outfeat"]),
}


def model_from_spec(spec: list[dict]) -> Sequential:
    layers = []
    for entry in spec:
        kind = entry["kind"]
        if kind not in _LAYER_KINDS:
            raise ValueError(f"unknown layer kind {kind!r}")
        layers.append((entry["name"], _LAYER_KINDS[kind](entry)))
    return Sequential(layers)


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int, dtype):
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def build_miniconvnet(num_classes: int, in_channels: int = 3,
                      channels: tuple[int, ...] = (16, 32, 64, 128),
                      seed: int = 0, dtype=np.float32) -> Sequential:
    """Compact trainable classifier: len(channels) Conv-ReLU-MaxPool stages,
    global average pooling, and a dense head with num_classes outputs.

    Weights are fan-in-scaled uniform from a seeded generator, biases zero,
    so construction is reproducible.
    """
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    layers: list[tuple[str, object]] = []
    prev = in_channels
    for i, ch in enumerate(channels, start=1):
        fan_in = prev * 9
        w = _fan_in_uniform(rng, (ch, prev, 3, 3), fan_in, dtype)
        layers.append((f"conv{i}", Conv2D(prev, ch, weight=w)))
        layers.append((f"relu{i}", ReLU()))
        layers.append((f"pool{i}", MaxPool2x2()))
        prev = ch
    layers.append(("gap", GlobalAvgPool()))
    w = _fan_in_uniform(rng, (prev, num_classes), prev, dtype)
    layers.append(("head", Dense(prev, num_classes, weight=w)))
    return Sequential(layers)


# ---------------------------------------------------------------------------
# checkpoint container
#
# Byte layout (all integers little-endian):
#   bytes 0..7    magic "GTCKPT1\n"
#   bytes 8..11   uint32 header length L
#   bytes 12..12+L  UTF-8 JSON header
#   then, for each entry of header["params"] in order, the raw float32
#   little-endian values of that parameter (C order).
# The header records the model spec, class names, training resolution, seed
# and the render manifest in effect when the images were produced.

def save_checkpoint(path, model: Sequential, classes, resolution: int,
                    seed: int, render: dict | None = None,
                    extra: dict | None = None) -> None:
    params = model.parameters()
    header = {
        "format": "gesturetrace-checkpoint",
        "version": 1,
        "model": model.spec(),
        "classes": list(classes),
        "resolution": int(resolution),
        "seed": int(seed),
        "render": render,
        "params": [
            {"name": k, "shape": list(v.shape)} for k, v in params.items()
        ],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Load a checkpoint -> (model, header). Follows pointer files (JSON
    with a "points_to" entry, as written for best.ckpt)."""
    from pathlib import Path

    path = Path(path)
    data = path.read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        try:
            pointer = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValueError(f"{path} is not a gesturetrace checkpoint") from None
        target = path.parent / pointer["points_to"]
        return load_checkpoint(target)
    offset = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", data, offset)
    offset += 4
    header = json.loads(data[offset:offset + hlen].decode("utf-8"))
    offset += hlen
    model = model_from_spec(header["model"])
    values = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += count * 4
        values[entry["name"]] = arr.reshape(shape).astype(np.float32)
    model.set_parameters(values)
    return model, header


def write_pointer(path, target_name: str) -> None:
    """best.ckpt is a pointer file naming its target, not a copy."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"format": "gesturetrace-checkpoint-pointer",
                   "points_to": target_name}, fh)
        fh.write("\n")
