"""Desk-scale assets: an 8x8 digits split plus a trained linear model.

Builds a PNG+manifest dataset from the classic 8x8 handwritten digits and
fits a multinomial logistic regression on the training half, exported in
the PIXLW1 binary format. Everything is deterministic for a fixed seed.

Run as a module: ``python -m pixle.deskdata --out DIR [--classes N]``.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ImageTensor, image_to_png
from .harness import DatasetItem, LabeledDataset, load_manifest, save_manifest
from .oracle import LinearSoftmaxOracle, predicted_class, save_linear_model

TEST_FRACTION = 0.25


@dataclass
class DeskAssets:
    root: Path
    model_path: Path
    train_manifest: Path
    test_manifest: Path
    class_count: int
    accuracy: float


def _digit_bytes(values16: np.ndarray) -> np.ndarray:
    """Map the digits' 0..16 intensity scale onto full-range bytes."""
    return np.rint(values16.astype(np.float64) / 16.0 * 255.0).astype(np.uint8)


def _write_split(root: Path, name: str, images: np.ndarray, labels: np.ndarray, ids):
    split_dir = root / name
    split_dir.mkdir(parents=True, exist_ok=True)
    items = []
    for img_bytes, label, item_id in zip(images, labels, ids):
        tensor = ImageTensor((img_bytes.astype(np.float64) / 255.0).astype(np.float32))
        path = split_dir / f"{item_id}.png"
        path.write_bytes(image_to_png(tensor))
        items.append(DatasetItem(id=item_id, label=int(label), path=path))
    dataset = LabeledDataset(items=items, class_count=int(labels.max()) + 1)
    manifest = root / f"{name}_manifest.csv"
    save_manifest(dataset, manifest)
    return manifest


def build_desk_assets(
    root, classes: int = 10, seed: int = 0, min_accuracy: float = 0.8
) -> DeskAssets:
    """Write train/test PNG splits and a trained PIXLW1 model under ``root``."""
    try:
        from sklearn.datasets import load_digits
        from sklearn.linear_model import LogisticRegression
    except ImportError as exc:
        raise RuntimeError(
            "building desk assets needs scikit-learn; install the 'desk' extra"
        ) from exc

    if not 2 <= classes <= 10:
        raise ValueError("classes must be between 2 and 10")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    digits = load_digits()
    mask = digits.target < classes
    raw = digits.images[mask]  # (n, 8, 8) floats 0..16
    labels = digits.target[mask]
    byte_images = _digit_bytes(raw)[:, None, :, :]  # (n, 1, 8, 8)

    rng = np.random.default_rng(seed)
    test_idx, train_idx = [], []
    for c in range(classes):
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(members.size)]
        cut = max(1, int(round(members.size * TEST_FRACTION)))
        test_idx.extend(members[:cut])
        train_idx.extend(members[cut:])
    train_idx = np.array(sorted(train_idx))
    test_idx = np.array(sorted(test_idx))

    ids = np.array([f"d{i:04d}" for i in range(labels.size)])
    train_manifest = _write_split(
        root, "train", byte_images[train_idx], labels[train_idx], ids[train_idx]
    )
    test_manifest = _write_split(
        root, "test", byte_images[test_idx], labels[test_idx], ids[test_idx]
    )

    # Train on exactly the values a PNG round trip produces (float32 of b/255).
    features = (
        (byte_images[train_idx].astype(np.float64) / 255.0)
        .astype(np.float32)
        .astype(np.float64)
        .reshape(len(train_idx), -1)
    )
    clf = LogisticRegression(max_iter=2000)
    clf.fit(features, labels[train_idx])

    model_path = root / f"desk_linear_{classes}c.pixlw"
    save_linear_model(model_path, clf.coef_, clf.intercept_, (1, 8, 8))

    oracle = LinearSoftmaxOracle.load(model_path)
    test_set = load_manifest(test_manifest)
    hits = sum(
        predicted_class(oracle.query(item.load())) == item.label
        for item in test_set.items
    )
    accuracy = hits / len(test_set.items)
    if accuracy < min_accuracy:
        raise RuntimeError(f"desk model accuracy {accuracy:.3f} below {min_accuracy}")
    return DeskAssets(
        root=root,
        model_path=model_path,
        train_manifest=train_manifest,
        test_manifest=test_manifest,
        class_count=classes,
        accuracy=accuracy,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--classes", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    assets = build_desk_assets(args.out, classes=args.classes, seed=args.seed)
    print(f"model: {assets.model_path}")
    print(f"train manifest: {assets.train_manifest}")
    print(f"test manifest: {assets.test_manifest}")
    print(f"held-out accuracy: {assets.accuracy:.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
