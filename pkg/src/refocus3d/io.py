"""File formats: .xyz clouds, dataset directories, binary cloud cache, flag tables.

Formats are deliberately plain so external tools can read them:

* ``.xyz``     ASCII, one ``x y z`` float triple per line, LF endings, no header.
* ``.rfpc``    binary cache: magic ``RFPC``, version byte 1, little-endian
               uint32 N, then 3N little-endian float32.
* dataset dir  ``manifest.csv`` (header ``file,label``), cloud files alongside,
               optional ``classes.txt`` with one class name per line.
* ``flags.csv``  header ``file,point_index``; one row per inserted-outlier point.
"""

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .geometry import Dataset, LabeledCloud, PointCloud

_CACHE_MAGIC = b"RFPC"
_CACHE_VERSION = 1


def save_xyz(path, cloud: PointCloud):
    # %.9g round-trips float32 exactly
    lines = [" ".join(format(float(v), ".9g") for v in row) for row in cloud.points]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def load_xyz(path) -> PointCloud:
    rows = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 coordinates, got {len(parts)}")
            try:
                xyz = [float(p) for p in parts]
            except ValueError:
                raise ParseError(path, lineno, f"non-numeric coordinate in {line!r}") from None
            if not all(np.isfinite(xyz)):
                raise ParseError(path, lineno, "non-finite coordinate")
            rows.append(xyz)
    if not rows:
        raise ParseError(path, 1, "empty cloud file")
    return PointCloud(np.array(rows, dtype=np.float32))


def save_cache(path, cloud: PointCloud):
    pts = cloud.points.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(bytes([_CACHE_VERSION]))
        fh.write(struct.pack("<I", len(cloud)))
        fh.write(pts.tobytes(order="C"))


def load_cache(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if raw[:4] != _CACHE_MAGIC:
        raise ParseError(path, 1, "bad magic; not an RFPC cache file")
    if raw[4] != _CACHE_VERSION:
        raise ParseError(path, 1, f"unsupported cache version {raw[4]}")
    (n,) = struct.unpack_from("<I", raw, 5)
    expected = 9 + 12 * n
    if len(raw) != expected:
        raise ParseError(path, 1, f"truncated cache: {len(raw)} bytes, expected {expected}")
    pts = np.frombuffer(raw, dtype="<f4", count=3 * n, offset=9).reshape(n, 3)
    return PointCloud(pts)


def load_cloud(path) -> PointCloud:
    """Dispatch on extension: .rfpc binary cache, anything else .xyz text."""
    if str(path).endswith(".rfpc"):
        return load_cache(path)
    return load_xyz(path)


def save_dataset(directory, dataset: Dataset, binary: bool = False):
    """Write a dataset directory: clouds + manifest.csv + classes.txt."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ext = "rfpc" if binary else "xyz"
    per_class_counter = {}
    rows = []
    for sample in dataset.samples:
        idx = per_class_counter.get(sample.label, 0)
        per_class_counter[sample.label] = idx + 1
        name = f"{dataset.class_names[sample.label]}_{idx:04d}.{ext}"
        if binary:
            save_cache(directory / name, sample.cloud)
        else:
            save_xyz(directory / name, sample.cloud)
        rows.append((name, sample.label))
    with open(directory / "manifest.csv", "w", newline="\n") as fh:
        fh.write("file,label\n")
        for name, label in rows:
            fh.write(f"{name},{label}\n")
    (directory / "classes.txt").write_text(
        "\n".join(dataset.class_names) + "\n", newline="\n"
    )


def load_dataset(directory, split: str = None) -> Dataset:
    directory = Path(directory)
    manifest = directory / "manifest.csv"
    if not manifest.is_file():
        raise FileNotFoundError(f"no manifest.csv in {directory}")
    class_file = directory / "classes.txt"
    class_names = None
    if class_file.is_file():
        class_names = tuple(
            line.strip() for line in class_file.read_text().splitlines() if line.strip()
        )
    entries = []
    with open(manifest, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["file", "label"]:
            raise ParseError(manifest, 1, f"expected header 'file,label', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(manifest, lineno, f"expected 'file,label', got {row}")
            name, label_text = row
            try:
                label = int(label_text)
            except ValueError:
                raise ParseError(manifest, lineno, f"label {label_text!r} is not an integer") from None
            if label < 0 or (class_names is not None and label >= len(class_names)):
                raise ParseError(manifest, lineno, f"label {label} out of range")
            entries.append((name, label))
    if class_names is None:
        n_classes = max(label for _, label in entries) + 1 if entries else 0
        class_names = tuple(f"class_{i}" for i in range(n_classes))
    samples = tuple(
        LabeledCloud(load_cloud(directory / name), label) for name, label in entries
    )
    return Dataset(samples, class_names, split or directory.name)


def manifest_files(directory):
    """Cloud file names in manifest order (aligned with load_dataset samples)."""
    names = []
    with open(Path(directory) / "manifest.csv", "r", newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if row:
                names.append(row[0])
    return names


def dataset_file_names(dataset: Dataset, ext: str = "xyz"):
    """The file names save_dataset would assign, in sample order."""
    per_class_counter = {}
    names = []
    for sample in dataset.samples:
        idx = per_class_counter.get(sample.label, 0)
        per_class_counter[sample.label] = idx + 1
        names.append(f"{dataset.class_names[sample.label]}_{idx:04d}.{ext}")
    return names


def save_flags(path, flags_by_file: dict):
    """Write outlier ground truth: one (file, point_index) row per flagged point."""
    with open(path, "w", newline="\n") as fh:
        fh.write("file,point_index\n")
        for name in flags_by_file:
            for idx in np.flatnonzero(flags_by_file[name]):
                fh.write(f"{name},{idx}\n")


def load_flags(path, sizes_by_file: dict) -> dict:
    """Read flags.csv back into boolean masks; ``sizes_by_file`` gives cloud sizes."""
    flags = {name: np.zeros(n, dtype=bool) for name, n in sizes_by_file.items()}
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["file", "point_index"]:
            raise ParseError(path, 1, f"expected header 'file,point_index', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            name, idx_text = row
            if name not in flags:
                raise ParseError(path, lineno, f"unknown file {name!r}")
            idx = int(idx_text)
            if not 0 <= idx < flags[name].size:
                raise ParseError(path, lineno, f"point index {idx} out of range")
            flags[name][idx] = True
    return flags
