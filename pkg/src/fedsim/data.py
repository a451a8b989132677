"""Dataset ingestion and federated partitioning.

IDX binary loading, synthetic Gaussian-blob generation, data-size
distributions (uniform / skewed / power law), per-learner class assignment,
and stratified local train/validation splits. All operations are pure
functions of their inputs and an explicit seed.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SIZE_KINDS = ("uniform", "skewed", "powerlaw")


class IdxFormatError(ValueError):
    """An IDX file is malformed; the message names the offending field."""


class CapacityError(ValueError):
    """A class assignment demands more samples than the source holds."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n x d), integer labels and the global class count."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if y.ndim != 1 or y.shape[0] != f.shape[0]:
            raise ValueError("labels must be one per feature row")
        if f.shape[0] < 1:
            raise ValueError("dataset must hold at least one sample")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _read_idx_header(data: bytes, path: str, field: str, magic: int, ndims: int) -> tuple[int, ...]:
    header_len = 4 * (1 + ndims)
    if len(data) < header_len:
        raise IdxFormatError(f"{field} header: file {path!r} truncated before header end")
    got_magic = struct.unpack(">I", data[:4])[0]
    if got_magic != magic:
        raise IdxFormatError(
            f"{field} magic: expected 0x{magic:08x}, got 0x{got_magic:08x} in {path!r}"
        )
    return struct.unpack(">" + "I" * ndims, data[4:header_len])


def load_idx(images_path: str, labels_path: str, num_classes: int | None = None) -> Dataset:
    """Load an IDX image/label file pair; pixel bytes are scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        img_data = f.read()
    n_img, rows, cols = _read_idx_header(img_data, images_path, "images", IDX_IMAGES_MAGIC, 3)
    expected = 16 + n_img * rows * cols
    if len(img_data) != expected:
        raise IdxFormatError(
            f"images payload: expected {expected} bytes, file {images_path!r} has {len(img_data)}"
        )
    with open(labels_path, "rb") as f:
        lbl_data = f.read()
    (n_lbl,) = _read_idx_header(lbl_data, labels_path, "labels", IDX_LABELS_MAGIC, 1)
    if len(lbl_data) != 8 + n_lbl:
        raise IdxFormatError(
            f"labels payload: expected {8 + n_lbl} bytes, file {labels_path!r} has {len(lbl_data)}"
        )
    if n_img != n_lbl:
        raise IdxFormatError(f"item count: {n_img} images but {n_lbl} labels")
    pixels = np.frombuffer(img_data, dtype=np.uint8, offset=16)
    features = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_data, dtype=np.uint8, offset=8).astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(features, labels, num_classes)


_CENTER_STREAM_TAG = 314159265


def _class_centers(input_dim: int, num_classes: int) -> np.ndarray:
    """Deterministic unit-norm class centers with enforced pairwise separation.

    Rejection-samples random directions against a minimum distance that
    relaxes geometrically when the sphere gets crowded, so the construction
    terminates for any feasible (dim, classes) and stays deterministic.
    """
    if input_dim == 1 and num_classes > 2:
        raise ValueError("1-D features admit at most two distinct unit-norm class centers")
    seq = np.random.SeedSequence([_CENTER_STREAM_TAG, input_dim, num_classes])
    rng = np.random.Generator(np.random.Philox(seq))
    centers: list[np.ndarray] = []
    min_dist = 1.0 if input_dim > 1 else 0.5
    for _ in range(num_classes):
        failures = 0
        while True:
            v = rng.standard_normal(input_dim)
            norm = np.linalg.norm(v)
            if norm < 1e-12:
                continue
            v = v / norm
            if all(np.linalg.norm(v - u) >= min_dist for u in centers):
                break
            failures += 1
            if failures % 200 == 0:
                min_dist *= 0.7
        centers.append(v)
    return np.array(centers)


def generate_blobs(
    input_dim: int,
    num_classes: int,
    n_per_class: int,
    spread: float,
    seed,
) -> Dataset:
    """Balanced Gaussian blobs around deterministic unit-norm class centers."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    centers = _class_centers(input_dim, num_classes)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    noise = rng.standard_normal((num_classes * n_per_class, input_dim)) * spread
    features = np.repeat(centers, n_per_class, axis=0) + noise
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), n_per_class)
    return Dataset(features, labels, num_classes)


@dataclass(frozen=True)
class SizeDistribution:
    """How many training samples each learner receives."""

    kind: str
    num_learners: int
    decay: float = 0.8
    exponent: float = 1.5

    def __post_init__(self) -> None:
        if self.kind not in SIZE_KINDS:
            raise ValueError(f"unknown size distribution kind: {self.kind!r}")
        if self.num_learners < 1:
            raise ValueError("num_learners must be >= 1")
        if not (0.0 < self.decay <= 1.0):
            raise ValueError("skew decay must lie in (0, 1]")
        if self.exponent <= 0.0:
            raise ValueError("power-law exponent must be positive")


def compute_sizes(dist: SizeDistribution, total: int) -> list[int]:
    """Split ``total`` into per-learner counts, largest first.

    Uniform gives floor(total/N) each with the remainder going to the
    lowest-index learners. Skewed and power-law sizes are proportional to
    decay^k and (k+1)^-exponent and rounded with a largest-remainder
    correction so they sum exactly to ``total``.
    """
    n = dist.num_learners
    if total < n:
        raise ValueError(f"cannot spread {total} samples across {n} learners")
    if dist.kind == "uniform":
        base = total // n
        rem = total - base * n
        return [base + (1 if k < rem else 0) for k in range(n)]
    if dist.kind == "powerlaw":
        weights = np.array([(k + 1.0) ** -dist.exponent for k in range(n)])
    else:
        weights = np.array([dist.decay**k for k in range(n)])
    shares = total * weights / weights.sum()
    sizes = np.floor(shares).astype(int)
    frac_order = sorted(range(n), key=lambda k: (-(shares[k] - sizes[k]), k))
    for k in frac_order[: total - int(sizes.sum())]:
        sizes[k] += 1
    result = sorted((int(s) for s in sizes), reverse=True)
    if result[-1] < 1:
        raise ValueError(
            f"{dist.kind} distribution over {n} learners leaves a learner empty at total={total}"
        )
    return result


@dataclass(frozen=True)
class ClassAssignment:
    """Per-learner class lists, indexed by descending-size rank."""

    per_learner_classes: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        normalized = []
        for i, classes in enumerate(self.per_learner_classes):
            cs = tuple(sorted(set(int(c) for c in classes)))
            if not cs:
                raise ValueError(f"learner {i} has an empty class list")
            if cs[0] < 0:
                raise ValueError(f"learner {i} has a negative class index")
            normalized.append(cs)
        object.__setattr__(self, "per_learner_classes", tuple(normalized))

    def __len__(self) -> int:
        return len(self.per_learner_classes)


def iid_assignment(num_learners: int, num_classes: int) -> ClassAssignment:
    every = tuple(range(num_classes))
    return ClassAssignment(tuple(every for _ in range(num_learners)))


def rotation_assignment(num_learners: int, classes_per_learner: int, num_classes: int) -> ClassAssignment:
    """Learner k holds classes {(k*x + j) mod C}; full coverage, deterministic."""
    x = classes_per_learner
    if not (1 <= x <= num_classes):
        raise ValueError("classes_per_learner must lie in [1, num_classes]")
    lists = tuple(
        tuple((k * x + j) % num_classes for j in range(x)) for k in range(num_learners)
    )
    return ClassAssignment(lists)


def assignment_from_class_counts(counts: Sequence[int], num_classes: int) -> ClassAssignment:
    """Expand a per-rank class-count list by taking classes round-robin."""
    lists = []
    ptr = 0
    for count in counts:
        if not (1 <= count <= num_classes):
            raise ValueError(f"class count {count} outside [1, {num_classes}]")
        lists.append(tuple((ptr + j) % num_classes for j in range(count)))
        ptr = (ptr + count) % num_classes
    return ClassAssignment(tuple(lists))


def alternating_order(groups: Sequence[str]) -> list[int]:
    """Learner ids ordered fast, slow, fast, ... for descending-size ranks."""
    fast = [i for i, g in enumerate(groups) if g == "fast"]
    slow = [i for i, g in enumerate(groups) if g != "fast"]
    order: list[int] = []
    for f, s in zip(fast, slow):
        order.extend((f, s))
    longer = fast if len(fast) > len(slow) else slow
    order.extend(longer[min(len(fast), len(slow)):])
    return order


def assign_classes(
    sizes: Sequence[int],
    assignment: ClassAssignment,
    dataset: Dataset,
    seed,
    learner_order: Sequence[int] | None = None,
) -> list[Dataset]:
    """Draw each learner's local training pool from the source dataset.

    ``sizes`` and ``assignment`` are indexed by descending-size rank;
    ``learner_order[rank]`` maps ranks to learner ids (identity when absent).
    Samples are drawn per class without replacement, evenly across a
    learner's classes with the remainder going to its lowest class indices.
    """
    n = len(sizes)
    if len(assignment) != n:
        raise ValueError("sizes and class assignment must cover the same learners")
    order = list(learner_order) if learner_order is not None else list(range(n))
    if sorted(order) != list(range(n)):
        raise ValueError("learner_order must be a permutation of learner ids")

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    pools: dict[int, np.ndarray] = {}
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        pools[c] = idx[rng.permutation(idx.size)]

    takes_per_rank: list[dict[int, int]] = []
    demand: Counter = Counter()
    for rank in range(n):
        classes = assignment.per_learner_classes[rank]
        if any(c >= dataset.num_classes for c in classes):
            raise ValueError(f"rank {rank} references a class outside [0, {dataset.num_classes})")
        size = int(sizes[rank])
        if size < len(classes):
            raise ValueError(
                f"rank {rank}: size {size} cannot cover {len(classes)} assigned classes"
            )
        base, rem = divmod(size, len(classes))
        takes = {c: base + (1 if i < rem else 0) for i, c in enumerate(classes)}
        takes_per_rank.append(takes)
        demand.update(takes)
    for c in sorted(demand):
        need, have = demand[c], pools[c].size
        if need > have:
            raise CapacityError(
                f"class {c}: assignments need {need} samples but only {have} exist (short {need - have})"
            )

    cursors: Counter = Counter()
    out: list[Dataset | None] = [None] * n
    for rank in range(n):
        picked = []
        for c, take in takes_per_rank[rank].items():
            start = cursors[c]
            picked.append(pools[c][start : start + take])
            cursors[c] = start + take
        indices = np.sort(np.concatenate(picked))
        out[order[rank]] = dataset.subset(indices)
    return out  # type: ignore[return-value]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(local: Dataset, fraction: float, seed) -> tuple[Dataset, Dataset]:
    """Reserve a class-stratified validation slice of a local dataset.

    Per class with n_c samples the validation side takes round(fraction*n_c)
    clamped to [1, n_c - 1]; singleton classes contribute nothing.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie strictly between 0 and 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    val_mask = np.zeros(local.n, dtype=bool)
    for c in np.unique(local.labels):
        idx = np.flatnonzero(local.labels == c)
        n_c = idx.size
        if n_c == 1:
            continue
        v = min(max(_round_half_up(fraction * n_c), 1), n_c - 1)
        chosen = idx[rng.permutation(n_c)[:v]]
        val_mask[chosen] = True
    if not val_mask.any():
        raise ValueError("validation split is empty: every class holds a single sample")
    train = local.subset(np.flatnonzero(~val_mask))
    validation = local.subset(np.flatnonzero(val_mask))
    return train, validation


@dataclass(frozen=True)
class LearnerSplit:
    train: Dataset
    validation: Dataset


@dataclass(frozen=True)
class FederatedSplit:
    per_learner: tuple[LearnerSplit, ...]
    test: Dataset


def build_federated_split(
    source: Dataset,
    sizes: Sequence[int],
    assignment: ClassAssignment,
    validation_fraction: float,
    seed: int,
    test: Dataset,
    learner_order: Sequence[int] | None = None,
) -> FederatedSplit:
    """Assign local pools and carve out each learner's validation slice."""
    trains = assign_classes(sizes, assignment, source, [seed, 1], learner_order)
    splits = []
    for lid, local in enumerate(trains):
        train, validation = stratified_split(local, validation_fraction, [seed, 2, lid])
        splits.append(LearnerSplit(train, validation))
    return FederatedSplit(tuple(splits), test)
