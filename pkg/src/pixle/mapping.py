"""Destination-choosing rules for relocated pixels.

Five interchangeable rules decide where a source pixel travels: a uniform
random draw, the most similar pixel with a different value, the most
different pixel, and two stochastic variants that sample destinations
with probability increasing in similarity or in distance. Pixel
(dis)similarity is the Euclidean norm of the channel-vector difference.

Exclusion rules, per kind: the deterministic SIMILARITY and DISTANCE
rules admit only destinations at distance > 0 (a zero-distance transfer
cannot change the image); RANDOM and both distributional rules exclude
only the source position itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ImageTensor, PixelCoord
from .errors import NoValidDestinationError

__all__ = [
    "MappingKind",
    "MappingSpec",
    "pixel_distances",
    "map_random",
    "map_similarity",
    "map_distance",
    "map_similarity_distribution",
    "map_distance_distribution",
    "destination_distribution",
    "pick_destination",
]


class MappingKind(Enum):
    """Selectable mapping rules; values double as their CLI names."""

    RANDOM = "random"
    SIMILARITY = "similarity"
    DISTANCE = "distance"
    SIMILARITY_DIST = "similarity-dist"
    DISTANCE_DIST = "distance-dist"

    @property
    def stochastic(self) -> bool:
        return self in (
            MappingKind.RANDOM,
            MappingKind.SIMILARITY_DIST,
            MappingKind.DISTANCE_DIST,
        )


@dataclass
class MappingSpec:
    """A mapping rule plus an optional private random stream.

    Deterministic kinds ignore the stream. Attack loops pass their own
    stream explicitly so that all randomness of one attack instance comes
    from a single seeded source.
    """

    kind: MappingKind
    rng_stream: np.random.Generator | None = None

    def pick(
        self,
        source: PixelCoord,
        image: ImageTensor,
        rng: np.random.Generator | None = None,
    ) -> PixelCoord:
        stream = rng if rng is not None else self.rng_stream
        if self.kind.stochastic and stream is None:
            raise ValueError(f"mapping kind {self.kind.value} needs a random stream")
        return pick_destination(self.kind, source, image, stream)


def pixel_distances(image: ImageTensor, source: PixelCoord) -> np.ndarray:
    """Euclidean channel-vector distance from ``source`` to every pixel.

    Returns an (height, width) float64 array; entry at ``source`` is 0.
    """
    data = image.data.astype(np.float64)
    diff = data - data[:, source.row, source.col][:, None, None]
    return np.sqrt((diff * diff).sum(axis=0))


def _coord(linear: int, width: int) -> PixelCoord:
    return PixelCoord(linear // width, linear % width)


def _require_second_pixel(image: ImageTensor) -> None:
    if image.height * image.width < 2:
        raise NoValidDestinationError("image has a single pixel; nowhere to map")


def map_random(
    source: PixelCoord, height: int, width: int, rng: np.random.Generator
) -> PixelCoord:
    """Uniform draw over all positions except the source itself."""
    n = height * width
    if n < 2:
        raise NoValidDestinationError("image has a single pixel; nowhere to map")
    src_linear = source.row * width + source.col
    k = int(rng.integers(0, n - 1))
    if k >= src_linear:
        k += 1
    return _coord(k, width)


def map_similarity(source: PixelCoord, image: ImageTensor) -> PixelCoord:
    """Position of the most similar pixel whose value differs from the
    source's (distance > 0).

    Copying an identical value would be a no-op, so exact duplicates are
    excluded; on quantized images they are common enough to stall the
    search entirely otherwise. Ties break toward the smallest row-major
    index; a constant image has no admissible destination.
    """
    d = pixel_distances(image, source).ravel()
    candidates = d > 0.0
    if not candidates.any():
        raise NoValidDestinationError("all pixels equal the source value")
    return _coord(int(np.argmin(np.where(candidates, d, np.inf))), image.width)


def map_distance(source: PixelCoord, image: ImageTensor) -> PixelCoord:
    """Position of the most different pixel among those at distance > 0.

    Ties break toward the smallest row-major index; a constant image has
    no admissible destination.
    """
    d = pixel_distances(image, source).ravel()
    candidates = d > 0.0
    if not candidates.any():
        raise NoValidDestinationError("all pixels equal the source value")
    return _coord(int(np.argmax(np.where(candidates, d, -np.inf))), image.width)


def destination_distribution(
    kind: MappingKind, source: PixelCoord, image: ImageTensor
) -> tuple[np.ndarray, np.ndarray]:
    """Candidate linear indices and sampling probabilities for the
    distributional mappings.

    Weights are exp(-d/sigma) for SIMILARITY_DIST and exp(+d/sigma) for
    DISTANCE_DIST, with sigma the mean candidate distance (1 if that mean
    is 0); probabilities are the normalized weights. The similarity
    variant weighs every position except the source; the distance variant
    admits only strictly positive distances, mirroring its deterministic
    counterpart.
    """
    d = pixel_distances(image, source).ravel()
    if kind is MappingKind.SIMILARITY_DIST:
        _require_second_pixel(image)
        mask = np.ones(d.shape, dtype=bool)
        mask[source.row * image.width + source.col] = False
        sign = -1.0
    elif kind is MappingKind.DISTANCE_DIST:
        mask = d > 0.0
        if not mask.any():
            raise NoValidDestinationError("all pixels equal the source value")
        sign = 1.0
    else:
        raise ValueError(f"{kind} has no destination distribution")
    indices = np.flatnonzero(mask)
    dist = d[indices]
    sigma = float(dist.mean())
    if sigma == 0.0:
        sigma = 1.0
    scaled = sign * dist / sigma
    weights = np.exp(scaled - scaled.max())  # stabilized; normalization removes the shift
    return indices, weights / weights.sum()


def _sample_distribution(
    kind: MappingKind,
    source: PixelCoord,
    image: ImageTensor,
    rng: np.random.Generator,
) -> PixelCoord:
    indices, probs = destination_distribution(kind, source, image)
    pick = int(rng.choice(indices.size, p=probs))
    return _coord(int(indices[pick]), image.width)


def map_similarity_distribution(
    source: PixelCoord, image: ImageTensor, rng: np.random.Generator
) -> PixelCoord:
    """Sample a destination, more similar pixels being more likely."""
    return _sample_distribution(MappingKind.SIMILARITY_DIST, source, image, rng)


def map_distance_distribution(
    source: PixelCoord, image: ImageTensor, rng: np.random.Generator
) -> PixelCoord:
    """Sample a destination, more distant pixels being more likely."""
    return _sample_distribution(MappingKind.DISTANCE_DIST, source, image, rng)


def pick_destination(
    kind: MappingKind,
    source: PixelCoord,
    image: ImageTensor,
    rng: np.random.Generator | None,
) -> PixelCoord:
    """Dispatch to the requested mapping rule."""
    if kind is MappingKind.RANDOM:
        assert rng is not None
        return map_random(source, image.height, image.width, rng)
    if kind is MappingKind.SIMILARITY:
        return map_similarity(source, image)
    if kind is MappingKind.DISTANCE:
        return map_distance(source, image)
    assert rng is not None
    return _sample_distribution(kind, source, image, rng)
