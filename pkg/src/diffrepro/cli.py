"""Command-line surface for reproducible experiment runs.

Every command is a pure function of its config file and input files: reruns
produce byte-identical outputs, at any ``--threads`` value. Configs are flat
``key = value`` text ('#' starts a comment line); unknown keys are rejected
and the effective config (defaults resolved) is echoed into the output
directory as ``resolved.cfg``.

Exit codes: 0 success, 1 configuration/input error, 2 numerical/runtime
error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .data import (
    DataError,
    Dataset,
    Image,
    load_dataset,
    load_image,
    sample_standard_normal,
    save_image,
)
from .denoiser import OptimalDenoiser
from .experiments import (
    ExperimentError,
    GridConfig,
    hyperplane_map,
    memorization_sweep,
)
from .inverse import DpsConfig, InpaintMask, InverseError, apply_mask, dps_inpaint
from .metrics import (
    ExternalEmbedding,
    MetricError,
    PatchDescriptor,
    PixelCosine,
    SampleSet,
    score_matrix,
    gl_score,
)
from .parallel import parallel_map
from .rng import SeededRng
from .sampler import NonFiniteStateError, SamplerConfig, SamplerError, encode, generate
from .schedule import Schedule, ScheduleError
from .tensorio import TensorFormatError, read_tensor, write_tensor


class ConfigError(ValueError):
    """Raised for malformed config files or invalid key values."""


_CONFIG_ERRORS = (
    ConfigError,
    DataError,
    ScheduleError,
    SamplerError,
    MetricError,
    ExperimentError,
    InverseError,
    TensorFormatError,
    FileNotFoundError,
)

# key -> default value as text; None means optional with no default.
KNOWN_KEYS: dict[str, str | None] = {
    "seed": "0",
    "dataset.path": None,
    "dataset.limit": None,
    "dataset.shuffle_seed": None,
    "schedule.kind": "vp",
    "schedule.beta_min": "0.1",
    "schedule.beta_max": "20.0",
    "schedule.sigma_min": "0.01",
    "schedule.sigma_max": "50.0",
    "schedule.t_min": "0.001",
    "schedule.t_max": "1.0",
    "sampler.method": "heun2",
    "sampler.steps": "64",
    "sampler.grid": "uniform",
    "sample.count": "10000",
    "sample.noises": None,
    "sample.png_grid": "false",
    "metrics.backend": "pixel",
    "metrics.threshold": None,
    "metrics.metric": "rp",
    "metrics.mae_threshold": "15.0",
    "metrics.embeddings": None,
    "metrics.ids": None,
    "metrics.patch": "8",
    "metrics.stride": "4",
    "experiment.grid_size": "100",
    "experiment.alpha_lo": "-0.1",
    "experiment.alpha_hi": "1.1",
    "experiment.beta_lo": "-0.1",
    "experiment.beta_hi": "1.1",
    "experiment.anchors": None,
    "experiment.anchor_streams": None,
    "experiment.sizes": None,
    "experiment.samples": "100",
    "experiment.methods": "heun2-64,euler-512",
    "inverse.mask": "easy",
    "inverse.n_dps": "34",
    "inverse.xi": "1.0",
    "inverse.method": "expint3",
    "inverse.grid": "uniform",
    "inverse.image": None,
    "inverse.image_index": "0",
    "inverse.noise_level": "0.0",
    "inverse.noise_stream": "0",
}


class RunConfig:
    """Parsed config with typed access and default resolution."""

    def __init__(self, values: dict[str, str]):
        for key in values:
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
        self.values = dict(values)

    @classmethod
    def parse(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        values: dict[str, str] = {}
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            value = value.strip()
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
        return cls(values)

    def get(self, key: str) -> str | None:
        if key in self.values:
            return self.values[key]
        return KNOWN_KEYS[key]

    def require(self, key: str) -> str:
        value = self.get(key)
        if value is None:
            raise ConfigError(f"missing required config key {key!r}")
        return value

    def get_int(self, key: str) -> int | None:
        value = self.get(key)
        if value is None:
            return None
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}") from None

    def get_float(self, key: str) -> float | None:
        value = self.get(key)
        if value is None:
            return None
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"config key {key!r} must be a number, got {value!r}") from None

    def get_bool(self, key: str) -> bool:
        value = self.get(key)
        if value is None or value.lower() in ("false", "0", "no"):
            return False
        if value.lower() in ("true", "1", "yes"):
            return True
        raise ConfigError(f"config key {key!r} must be a boolean, got {value!r}")

    def override(self, key: str, value: str) -> None:
        self.values[key] = value

    def resolved(self) -> str:
        lines = []
        for key in sorted(KNOWN_KEYS):
            value = self.get(key)
            if value is not None:
                lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Shared builders


def _build_schedule(cfg: RunConfig) -> Schedule:
    return Schedule(
        kind=cfg.require("schedule.kind"),
        beta_min=cfg.get_float("schedule.beta_min"),
        beta_max=cfg.get_float("schedule.beta_max"),
        sigma_min=cfg.get_float("schedule.sigma_min"),
        sigma_max=cfg.get_float("schedule.sigma_max"),
        t_min=cfg.get_float("schedule.t_min"),
        t_max=cfg.get_float("schedule.t_max"),
    )


def _build_dataset(cfg: RunConfig) -> Dataset:
    path = cfg.get("dataset.path")
    if path is None:
        raise ConfigError("missing required config key 'dataset.path'")
    return load_dataset(path, limit=cfg.get_int("dataset.limit"), shuffle_seed=cfg.get_int("dataset.shuffle_seed"))


def _build_sampler_cfg(cfg: RunConfig, schedule: Schedule, direction: str) -> SamplerConfig:
    steps = cfg.get_int("sampler.steps")
    if direction == "generate":
        t_start, t_end = schedule.t_max, schedule.t_min
    else:
        t_start, t_end = schedule.t_min, schedule.t_max
    return SamplerConfig(
        method=cfg.require("sampler.method"),
        steps=steps,
        t_start=t_start,
        t_end=t_end,
        grid=cfg.require("sampler.grid"),
    )


def _build_backend(cfg: RunConfig):
    kind = cfg.require("metrics.backend")
    threshold = cfg.get_float("metrics.threshold")
    if kind == "pixel":
        return PixelCosine(threshold=0.99 if threshold is None else threshold)
    if kind == "patch":
        return PatchDescriptor(
            patch=cfg.get_int("metrics.patch"),
            stride=cfg.get_int("metrics.stride"),
            threshold=0.99 if threshold is None else threshold,
        )
    if kind == "external":
        emb = cfg.get("metrics.embeddings")
        ids = cfg.get("metrics.ids")
        if emb is None or ids is None:
            raise ConfigError("external backend needs 'metrics.embeddings' and 'metrics.ids'")
        return ExternalEmbedding.load(emb, ids, threshold=0.6 if threshold is None else threshold)
    raise ConfigError(f"unknown metrics.backend {kind!r}, expected pixel, patch, or external")


def _parse_method_list(text: str, schedule: Schedule, grid: str) -> list[SamplerConfig]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        method, _, steps = item.partition("-")
        if not steps:
            raise ConfigError(f"sampler spec {item!r} must look like 'heun2-64'")
        try:
            n = int(steps)
        except ValueError:
            raise ConfigError(f"sampler spec {item!r} has a non-integer step count") from None
        out.append(SamplerConfig(method=method, steps=n, t_start=schedule.t_max, t_end=schedule.t_min, grid=grid))
    if not out:
        raise ConfigError("empty sampler method list")
    return out


def _echo_config(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved.cfg").write_text(cfg.resolved())


def _write_batch(path: Path, images: list[Image]) -> None:
    h, w, c = images[0].shape
    stack = np.stack([img.data for img in images]).reshape(len(images), h, w, c)
    write_tensor(path, stack)


def _png_grid(path: Path, images: list[Image]) -> None:
    from PIL import Image as PILImage

    from .data import to_uint8

    h, w, c = images[0].shape
    cols = min(8, len(images))
    rows = (min(len(images), 64) + cols - 1) // cols
    canvas = np.zeros((rows * h, cols * w, c), dtype=np.uint8)
    for idx, img in enumerate(images[: rows * cols]):
        r, col = divmod(idx, cols)
        canvas[r * h:(r + 1) * h, col * w:(col + 1) * w, :] = to_uint8(img.grid())
    if c == 1:
        PILImage.fromarray(canvas[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(canvas, mode="RGB").save(path)


def _load_sample_set(path: Path) -> SampleSet:
    samples_file = path / "samples.dtf"
    ids_file = path / "noise_ids.txt"
    if not samples_file.is_file() or not ids_file.is_file():
        raise ConfigError(f"{path}: not a sample-set directory (needs samples.dtf and noise_ids.txt)")
    stack = np.asarray(read_tensor(samples_file), dtype=np.float64)
    if stack.ndim != 4:
        raise ConfigError(f"{samples_file}: expected an (N, H, W, C) batch, got shape {stack.shape}")
    noise_ids = [int(line) for line in ids_file.read_text().split()]
    images = [Image(stack[i].reshape(-1), stack[i].shape) for i in range(stack.shape[0])]
    return SampleSet(images=images, model_id=path.name, noise_ids=noise_ids)


# ---------------------------------------------------------------------------
# Commands


def cmd_sample(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    schedule = _build_schedule(cfg)
    dataset = _build_dataset(cfg)
    den = OptimalDenoiser(dataset, schedule)
    sampler_cfg = _build_sampler_cfg(cfg, schedule, "generate")
    seed = cfg.get_int("seed")

    noises_path = cfg.get("sample.noises")
    if noises_path is not None:
        stack = np.asarray(read_tensor(noises_path), dtype=np.float64)
        if stack.ndim == 3:
            stack = stack[None]
        if stack.ndim != 4:
            raise ConfigError(f"{noises_path}: expected an (N, H, W, C) noise batch, got shape {stack.shape}")
        starts = [Image(stack[i].reshape(-1), stack[i].shape) for i in range(stack.shape[0])]
        noise_ids = list(range(len(starts)))
    else:
        count = cfg.get_int("sample.count")
        noise_ids = list(range(count))
        starts = [
            schedule.scale_initial_noise(sample_standard_normal(SeededRng(seed, stream=i), dataset.shape))
            for i in noise_ids
        ]

    images = parallel_map(lambda x: generate(den, x, sampler_cfg), starts, threads=threads)
    _echo_config(cfg, out_dir)
    _write_batch(out_dir / "samples.dtf", images)
    (out_dir / "noise_ids.txt").write_text("".join(f"{i}\n" for i in noise_ids))
    if cfg.get_bool("sample.png_grid"):
        _png_grid(out_dir / "grid.png", images)
    return 0


def cmd_encode(cfg: RunConfig, image_paths: list[str], out_dir: Path, threads: int) -> int:
    if not image_paths:
        raise ConfigError("encode needs at least one input image")
    schedule = _build_schedule(cfg)
    dataset = _build_dataset(cfg)
    den = OptimalDenoiser(dataset, schedule)
    sampler_cfg = _build_sampler_cfg(cfg, schedule, "encode")

    inputs: list[Image] = []
    for p in image_paths:
        path = Path(p)
        if path.suffix == ".dtf":
            stack = np.asarray(read_tensor(path), dtype=np.float64)
            if stack.ndim == 3:
                stack = stack[None]
            for i in range(stack.shape[0]):
                inputs.append(Image(stack[i].reshape(-1), stack[i].shape))
        else:
            inputs.append(load_image(path))

    codes = parallel_map(lambda x: encode(den, x, sampler_cfg), inputs, threads=threads)
    _echo_config(cfg, out_dir)
    _write_batch(out_dir / "codes.dtf", codes)
    return 0


def cmd_scores(cfg: RunConfig, set_paths: list[str], out_csv: Path, threads: int) -> int:
    if len(set_paths) < 1:
        raise ConfigError("scores needs at least one sample-set directory")
    sets = [_load_sample_set(Path(p)) for p in set_paths]
    backend = _build_backend(cfg)
    metric = cfg.require("metrics.metric")
    matrix = score_matrix(sets, backend, metric=metric, mae_threshold=cfg.get_float("metrics.mae_threshold"))
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    matrix.write_csv(out_csv)
    if cfg.get("dataset.path") is not None:
        dataset = _build_dataset(cfg)
        gl_lines = ["model_id,gl_score"]
        for s in sets:
            gl_lines.append(f"{s.model_id},{gl_score(s, dataset, backend):.6f}")
        gl_path = out_csv.parent / (out_csv.stem + "_gl.csv")
        gl_path.write_text("\n".join(gl_lines) + "\n")
    return 0


def cmd_hyperplane(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    schedule = _build_schedule(cfg)
    dataset = _build_dataset(cfg)
    den = OptimalDenoiser(dataset, schedule)
    sampler_cfg = _build_sampler_cfg(cfg, schedule, "generate")
    backend = _build_backend(cfg)
    seed = cfg.get_int("seed")

    anchors_path = cfg.get("experiment.anchors")
    streams_text = cfg.get("experiment.anchor_streams")
    if anchors_path is not None:
        stack = np.asarray(read_tensor(anchors_path), dtype=np.float64)
        if stack.ndim != 4 or stack.shape[0] != 3:
            raise ConfigError(f"{anchors_path}: expected a (3, H, W, C) anchor tensor, got shape {stack.shape}")
        anchors = [Image(stack[i].reshape(-1), stack[i].shape) for i in range(3)]
    elif streams_text is not None:
        try:
            streams = [int(v) for v in streams_text.split(",")]
        except ValueError:
            raise ConfigError("experiment.anchor_streams must be three comma-separated integers") from None
        if len(streams) != 3:
            raise ConfigError("experiment.anchor_streams must list exactly three stream ids")
        anchors = [sample_standard_normal(SeededRng(seed, stream=s), dataset.shape) for s in streams]
    else:
        raise ConfigError("hyperplane needs 'experiment.anchors' or 'experiment.anchor_streams'")

    grid_cfg = GridConfig(
        g=cfg.get_int("experiment.grid_size"),
        alpha_lo=cfg.get_float("experiment.alpha_lo"),
        alpha_hi=cfg.get_float("experiment.alpha_hi"),
        beta_lo=cfg.get_float("experiment.beta_lo"),
        beta_hi=cfg.get_float("experiment.beta_hi"),
    )
    hmap = hyperplane_map(den, sampler_cfg, anchors[0], anchors[1], anchors[2], grid_cfg, backend, threads=threads)
    _echo_config(cfg, out_dir)
    hmap.write_csv(out_dir / "hyperplane.csv")
    hmap.write_pgm(out_dir / "hyperplane.pgm")
    return 0


def cmd_sweep(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    schedule = _build_schedule(cfg)
    dataset = _build_dataset(cfg)
    backend = _build_backend(cfg)
    sizes_text = cfg.get("experiment.sizes")
    if sizes_text is None:
        raise ConfigError("sweep needs 'experiment.sizes'")
    try:
        sizes = [int(v) for v in sizes_text.split(",")]
    except ValueError:
        raise ConfigError("experiment.sizes must be comma-separated integers") from None
    cfgs = _parse_method_list(cfg.require("experiment.methods"), schedule, cfg.require("sampler.grid"))
    result = memorization_sweep(
        dataset,
        schedule,
        sizes,
        cfgs,
        n_samples=cfg.get_int("experiment.samples"),
        backend=backend,
        rng=SeededRng(cfg.get_int("seed")),
        threads=threads,
    )
    _echo_config(cfg, out_dir)
    result.write_csv(out_dir / "sweep.csv")
    return 0


def cmd_inpaint(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    schedule = _build_schedule(cfg)
    dataset = _build_dataset(cfg)
    den = OptimalDenoiser(dataset, schedule)
    seed = cfg.get_int("seed")

    image_path = cfg.get("inverse.image")
    if image_path is not None:
        u = load_image(image_path)
    else:
        index = cfg.get_int("inverse.image_index")
        if not 0 <= index < len(dataset):
            raise ConfigError(f"inverse.image_index {index} out of range 0..{len(dataset) - 1}")
        u = dataset.images[index]

    mask_spec = cfg.require("inverse.mask")
    h, w, _ = dataset.shape
    if mask_spec in ("easy", "hard"):
        mask = InpaintMask.preset(mask_spec, (h, w))
    else:
        mask = InpaintMask.from_pgm(mask_spec)

    noise_level = cfg.get_float("inverse.noise_level")
    obs_rng = SeededRng(seed, stream=(1 << 32)) if noise_level > 0 else None
    obs = apply_mask(u, mask, noise_level=noise_level, rng=obs_rng)

    eps = schedule.scale_initial_noise(
        sample_standard_normal(SeededRng(seed, stream=cfg.get_int("inverse.noise_stream")), dataset.shape)
    )
    dps_cfg = DpsConfig(
        n_dps=cfg.get_int("inverse.n_dps"),
        xi=cfg.get_float("inverse.xi"),
        method=cfg.require("inverse.method"),
        grid=cfg.require("inverse.grid"),
    )
    recon = dps_inpaint(den, obs, eps, dps_cfg)

    _echo_config(cfg, out_dir)
    (out_dir / "mask.pgm").write_bytes(mask.to_pgm_bytes())
    write_tensor(out_dir / "observation.dtf", obs.z.grid())
    write_tensor(out_dir / "reconstruction.dtf", recon.grid())
    ext = ".pgm" if dataset.shape[2] == 1 else ".ppm"
    save_image(out_dir / f"observation{ext}", obs.z)
    save_image(out_dir / f"reconstruction{ext}", recon)
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffrepro", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to a key=value config file")
        p.add_argument("--threads", type=int, default=1, help="worker count (outputs identical for any value)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("sample", help="generate a seeded batch of images")
    common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("encode", help="map images to their noise-space codes")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--images", nargs="*", default=[], help="image files or .dtf batches")

    p = sub.add_parser("scores", help="pairwise score matrix over sample-set directories")
    common(p)
    p.add_argument("--sets", nargs="*", default=[], help="sample-set directories from 'sample'")
    p.add_argument("--out-csv", required=True)

    p = sub.add_parser("hyperplane", help="classify generations over an anchor noise plane")
    common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="reproducibility / replication sweep over dataset sizes")
    common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("inpaint", help="deterministic posterior-sampling inpainting")
    common(p)
    p.add_argument("--out", required=True)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.parse(args.config)
        if args.seed is not None:
            cfg.override("seed", str(args.seed))
        threads = max(1, args.threads)
        if args.command == "sample":
            return cmd_sample(cfg, Path(args.out), threads)
        if args.command == "encode":
            return cmd_encode(cfg, args.images, Path(args.out), threads)
        if args.command == "scores":
            return cmd_scores(cfg, args.sets, Path(args.out_csv), threads)
        if args.command == "hyperplane":
            return cmd_hyperplane(cfg, Path(args.out), threads)
        if args.command == "sweep":
            return cmd_sweep(cfg, Path(args.out), threads)
        if args.command == "inpaint":
            return cmd_inpaint(cfg, Path(args.out), threads)
        raise ConfigError(f"unknown command {args.command!r}")
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NonFiniteStateError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
