"""Dataset container, on-disk format, and the synthetic image generator.

On disk a dataset is a directory holding ``meta.json`` (image shape, class
count, split sizes), one raw little-endian float32 tensor file per split
(``<split>.f32``, row-major ``n*h*w*c``), and one labels CSV per split
(``<split>_labels.csv`` with an ``index,label`` header).

The built-in generator emits a deterministic 2-class set: one class is a
soft blob at a jittered position, the other a jittered diagonal grating
texture; a noise parameter controls how separable they are.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)


@dataclass
class DatasetSplit:
    images: np.ndarray  # (n, h, w, c) float64
    labels: np.ndarray  # (n,) int64


@dataclass
class Dataset:
    splits: dict[str, DatasetSplit]
    height: int
    width: int
    channels: int
    num_classes: int
    meta: dict

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @property
    def train(self) -> DatasetSplit:
        return self.splits["train"]

    @property
    def val(self) -> DatasetSplit:
        return self.splits["val"]

    @property
    def test(self) -> DatasetSplit:
        return self.splits["test"]


def _blob(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    cy = h / 2 + rng.uniform(-h / 6, h / 6)
    cx = w / 2 + rng.uniform(-w / 6, w / 6)
    sigma = rng.uniform(0.16, 0.24) * min(h, w)
    yy, xx = np.mgrid[0:h, 0:w]
    return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))


def _grating(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    cycles = rng.uniform(1.5, 2.5)
    phase = rng.uniform(0, 2 * np.pi)
    angle = rng.uniform(np.pi / 6, np.pi / 3)
    yy, xx = np.mgrid[0:h, 0:w]
    t = (np.cos(angle) * xx / w + np.sin(angle) * yy / h) * 2 * np.pi * cycles
    return 0.5 + 0.5 * np.sin(t + phase)


def generate_synthetic(
    height: int = 16,
    width: int = 16,
    channels: int = 1,
    num_classes: int = 2,
    samples: int = 320,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    noise: float = 1.5,
    seed: int = 0,
) -> Dataset:
    """Deterministic 2-class blob-vs-texture images split train/val/test."""
    if num_classes != 2:
        raise ConfigError("synthetic generator supports exactly 2 classes")
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise ConfigError(f"split ratios must be 3 values summing to 1, got {ratios}")
    if samples < len(SPLIT_NAMES) * 2:
        raise ConfigError("need at least 2 samples per split")
    rng = np.random.default_rng(seed)
    counts = [int(round(samples * r)) for r in ratios[:2]]
    counts.append(samples - sum(counts))

    splits = {}
    for name, n in zip(SPLIT_NAMES, counts):
        images = np.empty((n, height, width, channels))
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            cls = i % 2
            base = _blob(height, width, rng) if cls == 0 else _grating(height, width, rng)
            for ch in range(channels):
                images[i, :, :, ch] = base + noise * rng.standard_normal((height, width))
            labels[i] = cls
        # emulate float32 storage so in-memory and reloaded datasets agree
        splits[name] = DatasetSplit(images.astype(np.float32).astype(np.float64), labels)

    meta = {
        "height": height,
        "width": width,
        "channels": channels,
        "num_classes": num_classes,
        "splits": dict(zip(SPLIT_NAMES, counts)),
        "ratios": list(ratios),
        "noise": noise,
        "seed": seed,
        "generator": "blob-vs-grating",
        "version": 1,
    }
    return Dataset(splits, height, width, channels, num_classes, meta)


def save_dataset(ds: Dataset, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "meta.json").write_text(json.dumps(ds.meta, indent=2, sort_keys=True) + "\n")
    for name, split in ds.splits.items():
        (out / f"{name}.f32").write_bytes(
            np.ascontiguousarray(split.images, dtype="<f4").tobytes()
        )
        lines = ["index,label"] + [f"{i},{int(l)}" for i, l in enumerate(split.labels)]
        (out / f"{name}_labels.csv").write_text("\n".join(lines) + "\n")
    return out


def load_dataset(path: str | Path) -> Dataset:
    root = Path(path)
    meta_file = root / "meta.json"
    if not meta_file.exists():
        raise ConfigError(f"not a dataset directory (missing meta.json): {root}")
    meta = json.loads(meta_file.read_text())
    h, w, c = meta["height"], meta["width"], meta["channels"]
    splits = {}
    for name, n in meta["splits"].items():
        raw = np.frombuffer((root / f"{name}.f32").read_bytes(), dtype="<f4")
        if raw.size != n * h * w * c:
            raise ConfigError(
                f"split {name!r}: expected {n * h * w * c} values, found {raw.size}"
            )
        images = raw.astype(np.float64).reshape(n, h, w, c)
        rows = (root / f"{name}_labels.csv").read_text().strip().split("\n")[1:]
        labels = np.array([int(r.split(",")[1]) for r in rows], dtype=np.int64)
        if len(labels) != n:
            raise ConfigError(f"split {name!r}: label count {len(labels)} != {n}")
        splits[name] = DatasetSplit(images, labels)
    return Dataset(splits, h, w, c, meta["num_classes"], meta)
