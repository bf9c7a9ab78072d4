"""Figure-level protocols: noise-hyperplane maps, local-Lipschitz probes,
and memorization sweeps.

The hyperplane map probes the structure of the noise-to-image mapping f on
the 2-D affine plane spanned by three anchor noises,

    eps(alpha, beta) = alpha (eps2 - eps1) + beta (eps3 - eps1) + eps1,

generating an image per grid point and classifying it by its most similar
anchor generation. The Lipschitz probe estimates a worst-case local ratio
||f(a) - f(b)|| / ||a - b|| over random pairs near one noise. The
memorization sweep runs several sampler configurations over shared noises on
nested dataset subsets and scores cross-sampler reproducibility plus
replication of the training data.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, Image
from .denoiser import OptimalDenoiser
from .metrics import SampleSet, gl_score, nearest_train_mae, rp_score, similarity
from .parallel import parallel_map
from .rng import SeededRng
from .sampler import SamplerConfig, generate
from .schedule import Schedule


class ExperimentError(ValueError):
    """Raised for invalid experiment configuration."""


@dataclass(frozen=True)
class GridConfig:
    """Uniform (alpha, beta) grid; defaults cover [-0.1, 1.1]^2 at 100 points per axis."""

    g: int = 100
    alpha_lo: float = -0.1
    alpha_hi: float = 1.1
    beta_lo: float = -0.1
    beta_hi: float = 1.1

    def __post_init__(self):
        if self.g < 2:
            raise ExperimentError("grid needs at least 2 points per axis")
        if not (self.alpha_lo < self.alpha_hi and self.beta_lo < self.beta_hi):
            raise ExperimentError("grid bounds must be increasing")


@dataclass
class HyperplaneMap:
    """Classified generations over the anchor-spanned noise plane.

    Cell (i, j) corresponds to (alphas[i], betas[j]); classes are in
    {1, 2, 3} (argmax anchor similarity, ties to the lowest index) and sims
    holds the similarity to the chosen anchor's generation. Row-major
    traversal (alpha outer, beta inner) is the canonical output order.
    """

    alphas: np.ndarray
    betas: np.ndarray
    classes: np.ndarray
    sims: np.ndarray
    anchor_noises: tuple[Image, Image, Image]
    anchor_images: tuple[Image, Image, Image]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("alpha,beta,class,similarity\n")
        for i, a in enumerate(self.alphas):
            for j, b in enumerate(self.betas):
                buf.write(f"{a:.6f},{b:.6f},{self.classes[i, j]},{self.sims[i, j]:.6f}\n")
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    def write_pgm(self, path: str | Path) -> None:
        """Indexed rendering: pixel = 85*(class-1) + 84*similarity (clipped)."""
        g = self.classes.shape[0]
        sims = np.clip(self.sims, 0.0, 1.0)
        pixels = ((self.classes - 1) * 85 + np.rint(sims * 84.0)).astype(np.uint8)
        header = f"P5\n{self.classes.shape[1]} {g}\n255\n".encode()
        Path(path).write_bytes(header + pixels.tobytes())


def hyperplane_map(
    den: OptimalDenoiser,
    sampler_cfg: SamplerConfig,
    eps1: Image,
    eps2: Image,
    eps3: Image,
    grid_cfg: GridConfig,
    backend,
    threads: int = 1,
) -> HyperplaneMap:
    """Generate and classify the (alpha, beta) grid against the three anchors.

    Anchor noises are unit-normal draws; scaling into the schedule's noise
    space happens here. The corners (0,0), (1,0), (0,1) reproduce the anchor
    noises exactly, so their cells classify to anchors 1, 2, 3 by solver
    determinism.
    """
    anchors = (eps1, eps2, eps3)
    for a in range(3):
        for b in range(a + 1, 3):
            if np.array_equal(anchors[a].data, anchors[b].data):
                raise ExperimentError(f"anchor noises {a + 1} and {b + 1} are identical")
    sched = den.schedule

    def run(eps_flat: np.ndarray) -> Image:
        eps = Image(eps_flat, eps1.shape)
        return generate(den, sched.scale_initial_noise(eps), sampler_cfg)

    anchor_images = tuple(run(e.data) for e in anchors)

    alphas = np.linspace(grid_cfg.alpha_lo, grid_cfg.alpha_hi, grid_cfg.g)
    betas = np.linspace(grid_cfg.beta_lo, grid_cfg.beta_hi, grid_cfg.g)
    d21 = eps2.data - eps1.data
    d31 = eps3.data - eps1.data
    cells = [
        eps1.data + a * d21 + b * d31
        for a in alphas
        for b in betas
    ]
    images = parallel_map(run, cells, threads=threads)

    g = grid_cfg.g
    classes = np.zeros((g, g), dtype=np.int64)
    sims = np.zeros((g, g))
    for idx, img in enumerate(images):
        i, j = divmod(idx, g)
        scores = [similarity(backend, anchor_images[k], img) for k in range(3)]
        k = int(np.argmax(scores))
        classes[i, j] = k + 1
        sims[i, j] = scores[k]
    return HyperplaneMap(
        alphas=alphas,
        betas=betas,
        classes=classes,
        sims=sims,
        anchor_noises=anchors,
        anchor_images=anchor_images,
    )


def adjacent_coherence(hmap: HyperplaneMap, sim_gap: float = 0.5) -> float:
    """Fraction of adjacent cell pairs that share a class or differ in anchor
    similarity by less than ``sim_gap``.

    On memorization-regime instances the noise-to-image map is locally flat
    away from basin boundaries, so this fraction sits near 1.
    """
    classes, sims = hmap.classes, hmap.sims
    ok = 0
    total = 0
    for axis in (0, 1):
        c1 = classes if axis == 0 else classes.T
        s1 = sims if axis == 0 else sims.T
        same = c1[:-1, :] == c1[1:, :]
        close = np.abs(s1[:-1, :] - s1[1:, :]) < sim_gap
        ok += int(np.sum(same | close))
        total += same.size
    return ok / total


def lipschitz_probe(
    den: OptimalDenoiser,
    sampler_cfg: SamplerConfig,
    eps: Image,
    delta: float,
    n: int,
    rng: SeededRng,
) -> float:
    """Worst-case ratio ||f(a) - f(b)|| / ||a - b|| over n pairs in B(eps, delta).

    Points are uniform in the ball around the unit-normal anchor; distances
    are taken in the schedule's noise space (after initial-noise scaling) and
    in image space after generation. The estimate is a max, so it is
    monotone non-decreasing in n for a fixed rng stream.
    """
    if delta <= 0.0:
        raise ExperimentError("delta must be positive")
    if n < 1:
        raise ExperimentError("need at least one pair")
    sched = den.schedule
    d = eps.size

    def ball_point() -> np.ndarray:
        direction = rng.normal(d)
        direction /= np.linalg.norm(direction)
        radius = delta * rng.uniform01(1)[0] ** (1.0 / d)
        return eps.data + radius * direction

    worst = 0.0
    for _ in range(n):
        a = sched.scale_initial_noise(Image(ball_point(), eps.shape))
        b = sched.scale_initial_noise(Image(ball_point(), eps.shape))
        dist = float(np.linalg.norm(a.data - b.data))
        if dist == 0.0:
            continue
        fa = generate(den, a, sampler_cfg)
        fb = generate(den, b, sampler_cfg)
        worst = max(worst, float(np.linalg.norm(fa.data - fb.data)) / dist)
    return worst


@dataclass(frozen=True)
class SweepRow:
    dataset_size: int
    rp_score: float
    gl_score: float
    nearest_mae_mean: float
    nearest_mae_max: float


@dataclass
class SweepResult:
    """Per-size reproducibility and replication scores."""

    rows: list[SweepRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("dataset_size,rp_score,gl_score,nearest_mae_mean,nearest_mae_max\n")
        for r in self.rows:
            buf.write(
                f"{r.dataset_size},{r.rp_score:.6f},{r.gl_score:.6f},"
                f"{r.nearest_mae_mean:.6f},{r.nearest_mae_max:.6f}\n"
            )
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def memorization_sweep(
    base: Dataset,
    schedule: Schedule,
    sizes: list[int],
    sampler_cfgs: list[SamplerConfig],
    n_samples: int,
    backend,
    rng: SeededRng,
    threads: int = 1,
) -> SweepResult:
    """Score sampler-diversity reproducibility over nested dataset subsets.

    For each size a subset denoiser is built and every sampler configuration
    generates from the same ``n_samples`` noises (streams 0..n-1 of the rng
    seed, which are also the noise ids). Each row reports the minimum
    pairwise RP score across configurations, the maximum GL score of any
    configuration against the subset, and nearest-training-image MAE
    statistics pooled over all configurations.
    """
    if list(sizes) != sorted(set(int(v) for v in sizes)):
        raise ExperimentError("sizes must be strictly increasing")
    if sizes[-1] > len(base):
        raise ExperimentError(f"largest size {sizes[-1]} exceeds base dataset ({len(base)})")
    if len(sampler_cfgs) < 2:
        raise ExperimentError("need at least two sampler configurations for RP")
    subset_seed = int(rng.raw64(1)[0])
    noises = [
        Image(SeededRng(rng.seed, stream=i).normal(base.images[0].size), base.shape)
        for i in range(n_samples)
    ]
    noise_ids = list(range(n_samples))

    rows = []
    for size in sizes:
        sub = base.subset(size, subset_seed)
        den = OptimalDenoiser(sub, schedule)
        sets = []
        for cfg in sampler_cfgs:
            images = parallel_map(
                lambda eps, c=cfg: generate(den, schedule.scale_initial_noise(eps), c),
                noises,
                threads=threads,
            )
            sets.append(SampleSet(images=images, model_id=f"{cfg.method}-{cfg.steps}", noise_ids=noise_ids))
        rp = min(
            rp_score(sets[i], sets[j], backend)
            for i in range(len(sets))
            for j in range(i + 1, len(sets))
        )
        gl = max(gl_score(s, sub, backend) for s in sets)
        pooled = [img for s in sets for img in s.images]
        maes = nearest_train_mae(pooled, sub)
        rows.append(
            SweepRow(
                dataset_size=size,
                rp_score=rp,
                gl_score=gl,
                nearest_mae_mean=float(maes.mean()),
                nearest_mae_max=float(maes.max()),
            )
        )
    return SweepResult(rows=rows)
