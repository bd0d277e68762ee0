"""Query-only classifier oracles.

An oracle is anything that maps an image to a probability vector. Builtin
toy oracles and the loadable linear-softmax model are deterministic and
cheap, which makes them suitable for tests and desk-scale campaigns;
remote oracles (child process / TCP) live in :mod:`pixle.protocol`.

The linear model evaluates its affine map with a fixed, documented
operation order (per class: left-to-right sum of weight*value products,
bias added last; max-stabilized softmax; probabilities rounded to
float32). Any implementation of the same order on IEEE doubles, in any
language, reproduces the vectors bit-exactly.
"""
from __future__ import annotations

import math
import struct
from operator import mul
from pathlib import Path

import numpy as np

from .core import ImageTensor
from .errors import ContractViolationError, DecodeError

PIXLW_MAGIC = b"PIXLW1"


class Oracle:
    """Base class: a queryable classifier with declared shape and classes.

    ``input_shape`` is ``(channels, height, width)`` or None when the
    oracle accepts any shape. ``concurrent_safe`` tells the harness
    whether several attack instances may query it simultaneously.
    """

    num_classes: int
    input_shape: tuple[int, int, int] | None
    concurrent_safe: bool

    def query(self, image: ImageTensor) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "Oracle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def check_shape(self, image: ImageTensor) -> None:
        if self.input_shape is not None and image.shape != self.input_shape:
            raise ContractViolationError(
                f"oracle expects shape {self.input_shape}, image is {image.shape}"
            )


def predicted_class(probs: np.ndarray) -> int:
    """Argmax class; ties break toward the smallest index."""
    return int(np.argmax(probs))


class PixelProbeOracle(Oracle):
    """Two-class toy: prob(class 0) is the channel-0 value at (0, 0)."""

    def __init__(self):
        self.num_classes = 2
        self.input_shape = None
        self.concurrent_safe = True

    def query(self, image: ImageTensor) -> np.ndarray:
        p0 = float(image.data[0, 0, 0])
        return np.array([p0, 1.0 - p0], dtype=np.float32)


class MeanProbeOracle(Oracle):
    """Two-class toy: prob(class 0) is the mean over all stored values."""

    def __init__(self):
        self.num_classes = 2
        self.input_shape = None
        self.concurrent_safe = True

    def query(self, image: ImageTensor) -> np.ndarray:
        p0 = float(image.data.astype(np.float64).mean())
        return np.array([p0, 1.0 - p0], dtype=np.float32)


class ConstantOracle(Oracle):
    """Ignores its input and always answers the same vector."""

    def __init__(self, probs):
        vec = np.asarray(probs, dtype=np.float32)
        if vec.ndim != 1 or vec.size < 2:
            raise ContractViolationError("constant oracle needs >= 2 probabilities")
        if abs(float(vec.sum()) - 1.0) > 1e-5:
            raise ContractViolationError("constant probabilities must sum to 1")
        self._probs = vec
        self.num_classes = int(vec.size)
        self.input_shape = None
        self.concurrent_safe = True

    def query(self, image: ImageTensor) -> np.ndarray:
        return self._probs.copy()


def _affine_softmax(
    rows: list[tuple[float, ...]], bias: list[float], values: list[float]
) -> np.ndarray:
    # Order matters for cross-implementation reproducibility: products are
    # summed left to right starting from 0, then the bias is added.
    logits = [b + sum(map(mul, row, values)) for row, b in zip(rows, bias)]
    m = max(logits)
    exps = [math.exp(x - m) for x in logits]
    total = exps[0]
    for e in exps[1:]:
        total += e
    return np.array([e / total for e in exps], dtype=np.float32)


class LinearSoftmaxOracle(Oracle):
    """softmax(W @ flatten(image) + b) over channel-major flattening."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray, input_shape):
        shape = tuple(int(s) for s in input_shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ContractViolationError("input shape must be (c, h, w), all positive")
        w = np.asarray(weights, dtype=np.float32)
        b = np.asarray(bias, dtype=np.float32)
        n = shape[0] * shape[1] * shape[2]
        if w.ndim != 2 or w.shape[1] != n:
            raise ContractViolationError(
                f"weights must be (classes, {n}), got {w.shape}"
            )
        if w.shape[0] < 2:
            raise ContractViolationError("a linear model needs >= 2 classes")
        if b.shape != (w.shape[0],):
            raise ContractViolationError("bias length must equal the class count")
        self.weights = w
        self.bias = b
        self._rows = [tuple(float(x) for x in row) for row in w]
        self._bias = [float(x) for x in b]
        self.num_classes = int(w.shape[0])
        self.input_shape = shape
        self.concurrent_safe = True

    def query(self, image: ImageTensor) -> np.ndarray:
        self.check_shape(image)
        values = image.data.ravel().tolist()  # channel-major, exact f32->f64
        return _affine_softmax(self._rows, self._bias, values)

    def save(self, path) -> None:
        save_linear_model(path, self.weights, self.bias, self.input_shape)

    @classmethod
    def load(cls, path) -> "LinearSoftmaxOracle":
        return load_linear_model(path)


def linear_softmax_classify(
    weights: np.ndarray, bias: np.ndarray, image: ImageTensor
) -> np.ndarray:
    """One-shot affine+softmax evaluation with the canonical operation order."""
    w = np.asarray(weights, dtype=np.float32)
    b = np.asarray(bias, dtype=np.float32)
    n = image.channels * image.height * image.width
    if w.ndim != 2 or w.shape[1] != n or b.shape != (w.shape[0],):
        raise ContractViolationError("weight/bias dimensions do not match the image")
    rows = [tuple(float(x) for x in row) for row in w]
    return _affine_softmax(rows, [float(x) for x in b], image.data.ravel().tolist())


def save_linear_model(path, weights: np.ndarray, bias: np.ndarray, input_shape) -> None:
    """Write the self-describing binary model file.

    Layout: magic ``PIXLW1``; classes, channels, height, width as u32 LE;
    row-major float32 LE weights; float32 LE biases.
    """
    w = np.ascontiguousarray(np.asarray(weights, dtype="<f4"))
    b = np.ascontiguousarray(np.asarray(bias, dtype="<f4"))
    c, h, wd = (int(s) for s in input_shape)
    k = w.shape[0]
    if k < 2:
        raise ContractViolationError("a linear model needs >= 2 classes")
    if w.shape != (k, c * h * wd) or b.shape != (k,):
        raise ContractViolationError("weight/bias dimensions do not match the shape")
    with open(path, "wb") as fh:
        fh.write(PIXLW_MAGIC)
        fh.write(struct.pack("<4I", k, c, h, wd))
        fh.write(w.tobytes())
        fh.write(b.tobytes())


def load_linear_model(path) -> LinearSoftmaxOracle:
    raw = Path(path).read_bytes()
    if len(raw) < len(PIXLW_MAGIC) + 16 or not raw.startswith(PIXLW_MAGIC):
        raise DecodeError(f"{path}: not a PIXLW1 model file")
    k, c, h, w = struct.unpack_from("<4I", raw, len(PIXLW_MAGIC))
    if k < 2:
        raise DecodeError(f"{path}: invalid model, {k} classes")
    n = c * h * w
    offset = len(PIXLW_MAGIC) + 16
    expected = offset + 4 * (k * n + k)
    if len(raw) != expected:
        raise DecodeError(f"{path}: truncated model file ({len(raw)} != {expected} bytes)")
    weights = np.frombuffer(raw, dtype="<f4", count=k * n, offset=offset).reshape(k, n)
    biases = np.frombuffer(raw, dtype="<f4", count=k, offset=offset + 4 * k * n)
    return LinearSoftmaxOracle(weights, biases, (c, h, w))


def make_builtin(name: str) -> Oracle:
    if name == "pixel-probe":
        return PixelProbeOracle()
    if name == "mean-probe":
        return MeanProbeOracle()
    if name.startswith("constant:"):
        probs = [float(p) for p in name.split(":", 1)[1].split(",")]
        return ConstantOracle(probs)
    raise ContractViolationError(f"unknown builtin oracle {name!r}")


def open_oracle(descriptor: str) -> Oracle:
    """Create an oracle from a descriptor string.

    Forms: ``builtin:NAME``, ``linear:PATH``, ``process:COMMAND`` and
    ``tcp:HOST:PORT``.
    """
    kind, _, spec = descriptor.partition(":")
    if not spec:
        raise ContractViolationError(f"malformed oracle descriptor {descriptor!r}")
    if kind == "builtin":
        return make_builtin(spec)
    if kind == "linear":
        return load_linear_model(spec)
    if kind == "process":
        from .protocol import ProcessOracle

        return ProcessOracle(spec)
    if kind == "tcp":
        from .protocol import TcpOracle

        return TcpOracle(spec)
    raise ContractViolationError(f"unknown oracle kind {kind!r}")
