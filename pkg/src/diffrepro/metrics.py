"""Similarity backends and reproducibility scores.

All scores are probabilities over pairs of samples matched by shared noise
id: the reproducibility (RP) score is the fraction of matched pairs whose
descriptor cosine exceeds the backend threshold, the MAE score the fraction
whose 8-bit pixel-space mean absolute error stays below a threshold (default
15.0), and the generalization (GL) score is one minus the fraction of
samples whose best match against a training set exceeds the threshold (high
means the samples are novel, low means they replicate training data).
Conditional variants match on noise id and class, or take the best class
match for one noise id.

Similarity backends map an image to a descriptor vector and compare by
cosine; ``sim(x, x) = 1`` for every backend. ``PixelCosine`` (mean-centered
pixels, threshold 0.99) is exact enough for replication-level comparisons;
``PatchDescriptor`` summarizes low-level structure; ``ExternalEmbedding``
looks up precomputed descriptor tables (threshold 0.6, the copy-detection
convention those embeddings are calibrated for). Thresholds are backend
conventions, not equivalences.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, Image, to_uint8
from .tensorio import read_tensor


class MetricError(ValueError):
    """Raised for empty pairings, missing labels, or bad descriptors."""


# ---------------------------------------------------------------------------
# Backends


@dataclass(frozen=True)
class PixelCosine:
    """Cosine of mean-centered flat pixel vectors."""

    threshold: float = 0.99

    def descriptor(self, image: Image) -> np.ndarray:
        flat = image.data
        return flat - flat.mean()


@dataclass(frozen=True)
class PatchDescriptor:
    """Cosine of concatenated per-patch (mean, variance, gradient-energy) features.

    Patches are square windows over (H, W) pooled across channels; gradient
    energy is split into horizontal and vertical parts.
    """

    patch: int = 8
    stride: int = 4
    threshold: float = 0.99

    def descriptor(self, image: Image) -> np.ndarray:
        h, w, _ = image.shape
        if self.patch > h or self.patch > w:
            raise MetricError(f"patch {self.patch} larger than image plane ({h}x{w})")
        grid = image.grid()
        feats = []
        for i in range(0, h - self.patch + 1, self.stride):
            for j in range(0, w - self.patch + 1, self.stride):
                win = grid[i:i + self.patch, j:j + self.patch, :]
                dh = np.diff(win, axis=1)
                dv = np.diff(win, axis=0)
                feats.extend((win.mean(), win.var(), (dh * dh).mean(), (dv * dv).mean()))
        return np.array(feats)


@dataclass(frozen=True)
class ExternalEmbedding:
    """Descriptor lookup from a precomputed embedding table.

    The table maps image keys to rows of an (N, D) tensor file; the aligned
    id file holds one key per line. Images must carry a ``key`` present in
    the table.
    """

    table: dict = field(repr=False)
    threshold: float = 0.6

    @classmethod
    def load(cls, embeddings_path: str | Path, ids_path: str | Path, threshold: float = 0.6) -> "ExternalEmbedding":
        mat = np.asarray(read_tensor(embeddings_path), dtype=np.float64)
        if mat.ndim != 2:
            raise MetricError(f"{embeddings_path}: embedding table must be 2-D, got shape {mat.shape}")
        ids = Path(ids_path).read_text().splitlines()
        ids = [line.strip() for line in ids if line.strip()]
        if len(ids) != mat.shape[0]:
            raise MetricError(f"{ids_path}: {len(ids)} ids for {mat.shape[0]} embedding rows")
        return cls(table={k: mat[i] for i, k in enumerate(ids)}, threshold=threshold)

    def descriptor(self, image: Image) -> np.ndarray:
        if image.key is None:
            raise MetricError("image has no key; external embeddings are looked up by key")
        try:
            return self.table[image.key]
        except KeyError:
            raise MetricError(f"no embedding for image key {image.key!r}") from None


def similarity(backend, x1: Image, x2: Image) -> float:
    """Cosine similarity of the backend descriptors, in [-1, 1]."""
    d1 = np.asarray(backend.descriptor(x1), dtype=np.float64)
    d2 = np.asarray(backend.descriptor(x2), dtype=np.float64)
    n1 = np.linalg.norm(d1)
    n2 = np.linalg.norm(d2)
    if n1 == 0.0 or n2 == 0.0:
        raise MetricError("zero-norm descriptor; similarity undefined")
    return float(np.clip(d1 @ d2 / (n1 * n2), -1.0, 1.0))


# ---------------------------------------------------------------------------
# Sample sets and pairing


@dataclass
class SampleSet:
    """Generated images from one model/sampler, tagged by shared noise ids.

    ``noise_ids[i]`` identifies the initial noise that produced
    ``images[i]``; sets generated from the same seeded noises align by id,
    which is what makes cross-model pairing meaningful.
    """

    images: list[Image]
    model_id: str
    noise_ids: list[int]
    labels: list[int] | None = None

    def __post_init__(self):
        if len(self.noise_ids) != len(self.images):
            raise MetricError(f"{len(self.noise_ids)} noise ids for {len(self.images)} images")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise MetricError(f"{len(self.labels)} labels for {len(self.images)} images")
        if self.labels is None and len(set(self.noise_ids)) != len(self.noise_ids):
            raise MetricError(f"duplicate noise ids in set {self.model_id!r}")

    def __len__(self) -> int:
        return len(self.images)


def _matched_pairs(a: SampleSet, b: SampleSet) -> list[tuple[Image, Image]]:
    index_b = {nid: img for nid, img in zip(b.noise_ids, b.images)}
    pairs = [(img, index_b[nid]) for nid, img in zip(a.noise_ids, a.images) if nid in index_b]
    if not pairs:
        raise MetricError(f"sets {a.model_id!r} and {b.model_id!r} share no noise ids")
    return pairs


def rp_score(a: SampleSet, b: SampleSet, backend) -> float:
    """Fraction of noise-matched pairs with similarity above the threshold."""
    pairs = _matched_pairs(a, b)
    hits = sum(1 for x1, x2 in pairs if similarity(backend, x1, x2) > backend.threshold)
    return hits / len(pairs)


def pixel_mae(x1: Image, x2: Image) -> float:
    """Mean absolute error in 8-bit pixel space after canonical conversion."""
    p1 = to_uint8(x1.data).astype(np.float64)
    p2 = to_uint8(x2.data).astype(np.float64)
    return float(np.abs(p1 - p2).mean())


def mae_score(a: SampleSet, b: SampleSet, threshold: float = 15.0) -> float:
    """Fraction of noise-matched pairs with pixel-space MAE below ``threshold``."""
    pairs = _matched_pairs(a, b)
    hits = sum(1 for x1, x2 in pairs if pixel_mae(x1, x2) < threshold)
    return hits / len(pairs)


def _max_train_similarity(backend, samples: list[Image], train: Dataset) -> np.ndarray:
    train_desc = np.stack([backend.descriptor(img) for img in train.images])
    train_norm = np.linalg.norm(train_desc, axis=1)
    if (train_norm == 0.0).any():
        raise MetricError("zero-norm descriptor in training set")
    best = np.empty(len(samples))
    for i, img in enumerate(samples):
        d = np.asarray(backend.descriptor(img), dtype=np.float64)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise MetricError("zero-norm descriptor in sample set")
        best[i] = np.max(train_desc @ d / (train_norm * n))
    return np.clip(best, -1.0, 1.0)


def gl_score(samples: SampleSet, train: Dataset, backend) -> float:
    """One minus the fraction of samples replicating some training image."""
    if len(samples) == 0 or len(train) == 0:
        raise MetricError("gl_score needs a nonempty sample set and training set")
    best = _max_train_similarity(backend, samples.images, train)
    return 1.0 - float(np.mean(best > backend.threshold))


def nearest_train_mae(samples: list[Image], train: Dataset) -> np.ndarray:
    """Per-sample pixel-space MAE to the nearest training image."""
    train_pix = to_uint8(train.matrix).astype(np.float64)
    out = np.empty(len(samples))
    for i, img in enumerate(samples):
        p = to_uint8(img.data).astype(np.float64)
        out[i] = np.abs(train_pix - p[None, :]).mean(axis=1).min()
    return out


def rp_cond(a: SampleSet, b: SampleSet, backend) -> float:
    """RP over pairs matched on both noise id and class label."""
    if a.labels is None or b.labels is None:
        raise MetricError("rp_cond needs class labels on both sets")
    index_b = {(nid, lab): img for nid, lab, img in zip(b.noise_ids, b.labels, b.images)}
    pairs = [
        (img, index_b[(nid, lab)])
        for nid, lab, img in zip(a.noise_ids, a.labels, a.images)
        if (nid, lab) in index_b
    ]
    if not pairs:
        raise MetricError(f"sets {a.model_id!r} and {b.model_id!r} share no (noise id, class) pairs")
    hits = sum(1 for x1, x2 in pairs if similarity(backend, x1, x2) > backend.threshold)
    return hits / len(pairs)


def rp_between(uncond: SampleSet, cond: SampleSet, backend) -> float:
    """Fraction of shared noise ids whose best class-conditional match
    exceeds the threshold."""
    if cond.labels is None:
        raise MetricError("rp_between needs class labels on the conditional set")
    by_noise: dict[int, list[Image]] = {}
    for nid, img in zip(cond.noise_ids, cond.images):
        by_noise.setdefault(nid, []).append(img)
    matched = [(img, by_noise[nid]) for nid, img in zip(uncond.noise_ids, uncond.images) if nid in by_noise]
    if not matched:
        raise MetricError(f"sets {uncond.model_id!r} and {cond.model_id!r} share no noise ids")
    hits = 0
    for x_u, candidates in matched:
        best = max(similarity(backend, x_u, x_c) for x_c in candidates)
        if best > backend.threshold:
            hits += 1
    return hits / len(matched)


# ---------------------------------------------------------------------------
# Score matrices


@dataclass
class ScoreMatrix:
    """Pairwise score matrix over sample sets, CSV-serializable."""

    model_ids: list[str]
    entries: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("," + ",".join(self.model_ids) + "\n")
        for i, mid in enumerate(self.model_ids):
            row = ",".join(f"{v:.6f}" for v in self.entries[i])
            buf.write(f"{mid},{row}\n")
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def score_matrix(sets: list[SampleSet], backend, metric: str = "rp", mae_threshold: float = 15.0) -> ScoreMatrix:
    """Full pairwise RP or MAE score matrix; symmetric entries computed once."""
    if metric not in ("rp", "mae"):
        raise MetricError(f"unknown metric {metric!r}, expected 'rp' or 'mae'")
    n = len(sets)
    if n == 0:
        raise MetricError("score_matrix needs at least one sample set")
    entries = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            if metric == "rp":
                val = rp_score(sets[i], sets[j], backend)
            else:
                val = mae_score(sets[i], sets[j], threshold=mae_threshold)
            entries[i, j] = val
            entries[j, i] = val
    return ScoreMatrix(model_ids=[s.model_id for s in sets], entries=entries)
