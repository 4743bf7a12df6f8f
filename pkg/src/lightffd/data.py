"""Dataset discovery, stratified splitting, image decoding and mini-batching.

A dataset is a directory with exactly two class folders::

    <root>/<class-name>/<image files>

Class indices follow the sorted folder names, so ``{fake, real}`` maps to
``fake=0, real=1``. Supported files are JPEG, PNG and ``.raw`` fixtures
(headerless 8-bit interleaved RGB of a square image; the side is inferred
from the byte count).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DatasetLayoutError, DecodeError, SplitInfeasibleError

SPLITS = ("train", "val", "test")
UNASSIGNED = "unassigned"
IMAGE_EXTENSIONS = {".jpg", ".jpeg", ".png", ".raw"}
DEFAULT_SIZE = 224


@dataclass(frozen=True)
class Record:
    path: str  # relative to the dataset root, POSIX separators
    label: int
    split: str = UNASSIGNED


@dataclass
class DatasetManifest:
    records: List[Record]
    class_names: List[str]
    root: Optional[Path] = None

    def split(self, name: str) -> List[Record]:
        return [r for r in self.records if r.split == name]

    def counts(self) -> Dict[Tuple[str, str], int]:
        out: Dict[Tuple[str, str], int] = {}
        for r in self.records:
            key = (self.class_names[r.label], r.split)
            out[key] = out.get(key, 0) + 1
        return out


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.10
    test: float = 0.20
    seed: int = 0

    def __post_init__(self):
        ratios = (self.train, self.val, self.test)
        if min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must be positive and sum to 1, got {ratios}")


@dataclass
class Batch:
    images: np.ndarray  # N x 3 x S x S, values in [0, 1]
    labels: List[int]
    paths: List[str] = field(default_factory=list)


def scan_dataset(root, per_class_limit: Optional[int] = None) -> DatasetManifest:
    """List every supported image under ``root`` in lexicographic order.

    ``per_class_limit`` keeps only the first n files (lexicographically) of
    each class, which is how a subset of a large corpus is taken.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"dataset root {root} does not exist or is not a directory")
    classes = sorted(p.name for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if len(classes) != 2:
        raise DatasetLayoutError(f"expected exactly 2 class folders under {root}, found {classes}")
    records = []
    for label, name in enumerate(classes):
        files = sorted(
            p for p in (root / name).rglob("*")
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if per_class_limit is not None:
            files = files[:per_class_limit]
        if not files:
            raise DatasetLayoutError(f"class folder {root / name} contains no supported images")
        records += [Record(p.relative_to(root).as_posix(), label) for p in files]
    records.sort(key=lambda r: r.path)
    return DatasetManifest(records=records, class_names=classes, root=root)


def _round_half_up(x: float) -> int:
    # round() in Python is banker's rounding; 0.7 * 15 is also 10.499999...
    return int(math.floor(round(x, 9) + 0.5))


def split_sizes(n: int, spec: SplitSpec = SplitSpec()) -> Tuple[int, int, int]:
    """(train, val, test) counts for a class of ``n`` images."""
    if n < 3:
        raise SplitInfeasibleError(f"a class needs at least 3 images to split, got {n}")
    n_train = _round_half_up(spec.train * n)
    n_val = _round_half_up(spec.val * n)
    return n_train, n_val, n - n_train - n_val


def stratified_split(manifest: DatasetManifest, spec: SplitSpec = SplitSpec()) -> DatasetManifest:
    """Assign every record to train/val/test, class by class."""
    if any(r.split != UNASSIGNED for r in manifest.records):
        raise ValueError("manifest already has split assignments")
    rng = np.random.default_rng(spec.seed)
    assignment: Dict[str, str] = {}
    for label in range(len(manifest.class_names)):
        members = [r.path for r in manifest.records if r.label == label]
        n_train, n_val, _ = split_sizes(len(members), spec)
        order = rng.permutation(len(members))
        for rank, i in enumerate(order):
            if rank < n_train:
                assignment[members[i]] = "train"
            elif rank < n_train + n_val:
                assignment[members[i]] = "val"
            else:
                assignment[members[i]] = "test"
    records = [replace(r, split=assignment[r.path]) for r in manifest.records]
    return DatasetManifest(records=records, class_names=list(manifest.class_names), root=manifest.root)


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [f"{r.path}\t{r.label}\t{r.split}\n" for r in manifest.records]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_manifest(path, root=None) -> DatasetManifest:
    """Parse a manifest file; class names are the distinct top-level folders."""
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetLayoutError(f"{path}:{lineno}: expected 3 tab-separated fields")
            rel, label, split = parts
            if split not in SPLITS + (UNASSIGNED,):
                raise DatasetLayoutError(f"{path}:{lineno}: unknown split {split!r}")
            if rel in seen:
                raise DatasetLayoutError(f"{path}:{lineno}: duplicate path {rel!r}")
            seen.add(rel)
            records.append(Record(rel, int(label), split))
    by_label: Dict[int, str] = {}
    for r in records:
        folder = r.path.split("/", 1)[0]
        if by_label.setdefault(r.label, folder) != folder:
            raise DatasetLayoutError(f"{path}: label {r.label} spans several folders")
    class_names = [by_label[i] for i in sorted(by_label)]
    if len(class_names) != 2 or sorted(by_label) != [0, 1] or class_names != sorted(class_names):
        raise DatasetLayoutError(f"{path}: expected two classes labelled 0/1 in folder order")
    return DatasetManifest(records=records, class_names=class_names,
                           root=Path(root) if root is not None else None)


def _decode_raw(path: Path) -> np.ndarray:
    data = np.fromfile(path, dtype=np.uint8)
    side = math.isqrt(data.size // 3)
    if data.size == 0 or side * side * 3 != data.size:
        raise DecodeError(path, f"{data.size} bytes is not a square RGB image")
    return data.reshape(side, side, 3)


def decode_image(path) -> np.ndarray:
    """Decode to an H x W x 3 uint8 RGB array (grayscale is replicated)."""
    path = Path(path)
    if path.suffix.lower() == ".raw":
        try:
            return _decode_raw(path)
        except OSError as exc:
            raise DecodeError(path, str(exc)) from exc
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DecodeError(path, str(exc)) from exc


def resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    if img.shape[0] == size and img.shape[1] == size:
        return img
    out = Image.fromarray(img).resize((size, size), Image.BILINEAR)
    return np.asarray(out)


def decode_and_resize(path, size: int = DEFAULT_SIZE) -> np.ndarray:
    """3 x size x size float32 array of raw 0-255 values in R, G, B order."""
    img = resize_bilinear(decode_image(path), size)
    return np.ascontiguousarray(img.transpose(2, 0, 1), dtype=np.float32)


def normalize_pixels(raw: np.ndarray, zero_center: bool = False) -> np.ndarray:
    """Scale 0-255 values into [0, 1]; optionally subtract each channel's mean."""
    out = np.asarray(raw, dtype=np.float32) / np.float32(255.0)
    if zero_center:
        out = out - out.mean(axis=(-2, -1), keepdims=True, dtype=np.float64).astype(np.float32)
    return out


class ImageLoader:
    """Decodes and caches resized images as uint8, keyed by relative path."""

    def __init__(self, root, size: int = DEFAULT_SIZE, workers: int = 1, zero_center: bool = False):
        self.root = Path(root)
        self.size = size
        self.workers = max(1, workers)
        self.zero_center = zero_center
        self._cache: Dict[str, np.ndarray] = {}

    def _load_one(self, rel: str) -> np.ndarray:
        arr = self._cache.get(rel)
        if arr is None:
            arr = self._cache[rel] = self._decode_uncached(rel)
        return arr

    def preload(self, paths: Sequence[str]) -> None:
        todo = [p for p in paths if p not in self._cache]
        if self.workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                # map() gathers in submission order
                for rel, arr in zip(todo, pool.map(self._decode_uncached, todo)):
                    self._cache[rel] = arr
        else:
            for rel in todo:
                self._load_one(rel)

    def _decode_uncached(self, rel: str) -> np.ndarray:
        img = resize_bilinear(decode_image(self.root / rel), self.size)
        return np.ascontiguousarray(img.transpose(2, 0, 1))

    def batch(self, records: Sequence[Record]) -> Batch:
        raw = np.stack([self._load_one(r.path) for r in records]).astype(np.float32)
        return Batch(
            images=normalize_pixels(raw, self.zero_center),
            labels=[r.label for r in records],
            paths=[r.path for r in records],
        )


def plan_batches(manifest: DatasetManifest, split: str, batch_size: int,
                 shuffle_seed: int = 0, epoch: int = 0) -> List[List[Record]]:
    """Record groups for one pass over ``split``.

    Only the train split is shuffled, with a permutation determined by
    ``(shuffle_seed, epoch)``; val/test keep manifest (lexicographic) order.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    recs = manifest.split(split)
    if split == "train" and recs:
        order = np.random.default_rng([shuffle_seed, epoch]).permutation(len(recs))
        recs = [recs[i] for i in order]
    return [recs[i:i + batch_size] for i in range(0, len(recs), batch_size)]


def iter_batches(manifest: DatasetManifest, split: str, batch_size: int, loader: ImageLoader,
                 shuffle_seed: int = 0, epoch: int = 0) -> Iterator[Batch]:
    for group in plan_batches(manifest, split, batch_size, shuffle_seed, epoch):
        yield loader.batch(group)


def make_batches(manifest: DatasetManifest, split: str, batch_size: int,
                 shuffle_seed: int = 0, epoch: int = 0,
                 loader: Optional[ImageLoader] = None, size: int = DEFAULT_SIZE) -> List[Batch]:
    if loader is None:
        if manifest.root is None:
            raise ValueError("manifest has no dataset root; pass a loader")
        loader = ImageLoader(manifest.root, size=size)
    return list(iter_batches(manifest, split, batch_size, loader, shuffle_seed, epoch))


def write_synthetic_dataset(root, per_class: int = 8, size: int = 32, seed: int = 0,
                            class_names: Sequence[str] = ("fake", "real")) -> Path:
    """Write a two-class set of well separated solid-colour PNG images.

    The first class gets bright colours (channel values 170-230), the second
    dark ones (25-85).
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    ranges = [(170, 231), (25, 86)]
    for name, (lo, hi) in zip(class_names, ranges):
        folder = root / name
        folder.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            colour = rng.integers(lo, hi, size=3).astype(np.uint8)
            img = np.broadcast_to(colour, (size, size, 3))
            Image.fromarray(np.ascontiguousarray(img)).save(folder / f"{name}_{i:04d}.png")
    return root
