"""Image tensors, patch geometry, pixel transfer and the L0 metric.

Everything in this module is a pure function on immutable inputs. Images
are stored channel-major as float32 arrays with values in [0, 1]; 32-bit
storage is deliberate so that tensors survive the wire protocol's float32
payload encoding bit-exactly.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ContractViolationError, DecodeError, InvalidPatchError


class PixelCoord(NamedTuple):
    """A (row, col) position inside an image."""

    row: int
    col: int


class TransferMode(Enum):
    """How source pixel values are transferred to their destinations.

    OVERWRITE copies source values onto the destinations and leaves the
    sources untouched; SWAP exchanges the two, preserving the image
    histogram exactly.
    """

    OVERWRITE = "overwrite"
    SWAP = "swap"


@dataclass(frozen=True)
class Patch:
    """A rectangle of source pixels: origin (column, row) plus size."""

    origin_x: int
    origin_y: int
    width: int
    height: int

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """A dense (channels, height, width) float32 image with values in [0, 1].

    The wrapped array is marked read-only on construction; operations
    return new tensors and never mutate their inputs.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if not isinstance(arr, np.ndarray) or arr.ndim != 3:
            raise ContractViolationError("image data must be a (c, h, w) array")
        if arr.dtype != np.float32:
            raise ContractViolationError("image data must be float32")
        if arr.size == 0:
            raise ContractViolationError("image dimensions must be positive")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise ContractViolationError("image values must lie in [0, 1]")
        arr.flags.writeable = False

    @classmethod
    def from_array(cls, values: Sequence | np.ndarray) -> "ImageTensor":
        """Build a tensor from any array-like, casting to float32 and copying."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 2:  # single-channel convenience
            arr = arr[None, :, :]
        return cls(arr.astype(np.float32))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def pixel(self, coord: PixelCoord) -> np.ndarray:
        """Channel vector at a coordinate (read-only view)."""
        return self.data[:, coord.row, coord.col]

    def same_shape(self, other: "ImageTensor") -> bool:
        return self.shape == other.shape

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ImageTensor)
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )


def build_patch_indices(patch: Patch, height: int, width: int) -> list[PixelCoord]:
    """Coordinates covered by a patch, row-major, clamped inside the image.

    A patch whose rectangle would cross the right or bottom border is
    shifted toward (0, 0) by the minimal amount; its area is never
    truncated. Exactly ``patch.width * patch.height`` coordinates are
    returned.
    """
    if patch.width < 1 or patch.height < 1:
        raise InvalidPatchError("patch sides must be positive")
    if patch.width > width or patch.height > height:
        raise InvalidPatchError(
            f"patch {patch.width}x{patch.height} does not fit a {width}x{height} image"
        )
    if patch.origin_x < 0 or patch.origin_y < 0:
        raise ContractViolationError("patch origin must be non-negative")
    ox = min(patch.origin_x, width - patch.width)
    oy = min(patch.origin_y, height - patch.height)
    return [
        PixelCoord(oy + j, ox + i)
        for j in range(patch.height)
        for i in range(patch.width)
    ]


def apply_mapping(
    image: ImageTensor,
    sources: Sequence[PixelCoord],
    destinations: Sequence[PixelCoord],
    mode: TransferMode,
) -> ImageTensor:
    """Transfer the pixels at ``sources`` to ``destinations``.

    OVERWRITE reads every source channel vector from the input image first
    and then writes them in pair order (later pairs win on destination
    collisions). SWAP exchanges source and destination sequentially in
    list order, so overlapping pairs have deterministic semantics. The
    input image is never modified.
    """
    if len(sources) != len(destinations):
        raise ContractViolationError("sources and destinations differ in length")
    h, w = image.height, image.width
    for coord in (*sources, *destinations):
        if not (0 <= coord.row < h and 0 <= coord.col < w):
            raise ContractViolationError(f"coordinate {coord} out of bounds")

    out = image.data.copy()
    if mode is TransferMode.OVERWRITE:
        values = [image.data[:, src.row, src.col].copy() for src in sources]
        for val, dst in zip(values, destinations):
            out[:, dst.row, dst.col] = val
    else:
        for src, dst in zip(sources, destinations):
            tmp = out[:, src.row, src.col].copy()
            out[:, src.row, src.col] = out[:, dst.row, dst.col]
            out[:, dst.row, dst.col] = tmp
    return ImageTensor(out)


def l0_pixel_distance(a: ImageTensor, b: ImageTensor) -> int:
    """Number of pixel positions whose channel vectors differ anywhere.

    Channels are not counted separately and comparison is exact: the
    attack only relocates existing values, so float equality is
    well-defined.
    """
    if a.shape != b.shape:
        raise ContractViolationError("tensors must share all three dimensions")
    return int(np.any(a.data != b.data, axis=0).sum())


def image_from_png(payload: bytes) -> ImageTensor:
    """Decode an 8-bit grayscale or RGB PNG into a tensor (byte b -> b/255)."""
    try:
        img = Image.open(io.BytesIO(payload))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"not a decodable image: {exc}") from exc
    if img.format != "PNG":
        raise DecodeError(f"expected PNG input, got {img.format}")
    if img.mode not in ("L", "RGB"):
        raise DecodeError(f"unsupported PNG mode {img.mode}; need 8-bit L or RGB")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return ImageTensor((arr.astype(np.float64) / 255.0).astype(np.float32))


def image_to_png(image: ImageTensor) -> bytes:
    """Encode a 1- or 3-channel tensor as PNG (value v -> rint(v*255))."""
    if image.channels not in (1, 3):
        raise ContractViolationError(
            f"PNG supports 1 or 3 channels, tensor has {image.channels}"
        )
    quantized = np.rint(image.data.astype(np.float64) * 255.0)
    bytes_arr = np.clip(quantized, 0, 255).astype(np.uint8)
    if image.channels == 1:
        pil = Image.fromarray(bytes_arr[0], mode="L")
    else:
        pil = Image.fromarray(bytes_arr.transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()
