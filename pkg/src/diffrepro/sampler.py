"""Deterministic probability-flow ODE integration.

The sampling ODE paired with the optimal noise predictor is

    dx/dt = f(t) x + ( g(t)^2 / (2 s_t sigma_t) ) eps*(x, t),

whose trajectories transport the schedule's noise space at t = t_max to the
data side at t = t_min. Generation integrates backward in t and finishes
with one exact denoising step, replacing the terminal state by its posterior
mean x0(x, t_end) -- the sigma -> 0 limit of the flow, and the usual
"denoise to zero" final step of deterministic samplers. Encoding integrates
the same ODE forward in t from a clean image and returns the terminal state,
the image's noise-space code.

Three fixed-step methods are provided:

* ``euler``     explicit Euler on the ODE in t (first order),
* ``heun2``     Heun predictor/corrector (second order),
* ``expint1/2/3`` exponential multistep integrators in the half-log-SNR
  variable lambda = -ln sigma_t. Writing z = x / s_t the ODE becomes
  dz/dlambda = -e^(-lambda) eps*(x, t); each step integrates the exponential
  factor exactly against a Newton extrapolation of eps* through the last
  1..3 evaluation nodes (warmup steps run at orders 1 and 2). Order 1 is the
  classic single-evaluation denoising-implicit update.

Every operation here is bit-deterministic: same inputs, same bytes out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Image
from .denoiser import OptimalDenoiser
from .schedule import Schedule

METHODS = ("euler", "heun2", "expint1", "expint2", "expint3")
GRIDS = ("uniform", "logsnr")

EpsFn = Callable[[np.ndarray, float], np.ndarray]


class SamplerError(ValueError):
    """Raised for invalid sampler configuration."""


class NonFiniteStateError(RuntimeError):
    """Raised when integration produces NaN or Inf; reports step and time."""

    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state at step {step}, t={t:.6g}")
        self.step = step
        self.t = t


@dataclass(frozen=True)
class SamplerConfig:
    """Integration setup: method, step count, time span, and grid spacing.

    Generation runs t_start > t_end (noise to data); encoding reverses them.
    ``grid`` places the interior nodes uniformly in t or uniformly in
    lambda = -ln sigma_t.
    """

    method: str
    steps: int
    t_start: float
    t_end: float
    grid: str = "uniform"
    record_trajectory: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise SamplerError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if self.steps < 1:
            raise SamplerError(f"steps must be >= 1, got {self.steps}")
        if self.grid not in GRIDS:
            raise SamplerError(f"unknown grid {self.grid!r}, expected one of {GRIDS}")
        if self.t_start == self.t_end:
            raise SamplerError("t_start and t_end must differ")
        if self.expint_order and self.expint_order > self.steps:
            raise SamplerError(
                f"expint order {self.expint_order} needs at least that many steps, got {self.steps}"
            )

    @property
    def expint_order(self) -> int | None:
        if self.method.startswith("expint"):
            return int(self.method[-1])
        return None


@dataclass(frozen=True)
class Trajectory:
    """Raw ODE states at the retained grid nodes (diagnostics only).

    For generation the last entry is the state at t_end before the final
    denoising step; the generated image is returned separately.
    """

    times: list[float]
    states: list[Image]


def time_grid(schedule: Schedule, cfg: SamplerConfig) -> np.ndarray:
    """Grid of steps+1 node times from t_start to t_end."""
    lo, hi = min(cfg.t_start, cfg.t_end), max(cfg.t_start, cfg.t_end)
    slack = 1e-12
    if lo < schedule.t_min - slack or hi > schedule.t_max + slack:
        raise SamplerError(
            f"span [{cfg.t_start}, {cfg.t_end}] outside schedule clip bounds "
            f"[{schedule.t_min}, {schedule.t_max}]"
        )
    if cfg.grid == "uniform":
        nodes = np.linspace(cfg.t_start, cfg.t_end, cfg.steps + 1)
    else:
        lam0 = -math.log(schedule.eval(cfg.t_start).sigma)
        lam1 = -math.log(schedule.eval(cfg.t_end).sigma)
        lams = np.linspace(lam0, lam1, cfg.steps + 1)
        nodes = np.array([schedule.t_of_sigma(math.exp(-lam)) for lam in lams])
        nodes = np.clip(nodes, schedule.t_min, schedule.t_max)
        nodes[0], nodes[-1] = cfg.t_start, cfg.t_end
    return nodes


def _rhs_flat(den: OptimalDenoiser, x: np.ndarray, t: float, eps_fn: EpsFn | None = None) -> np.ndarray:
    sample = den.schedule.eval(t)
    eps = eps_fn(x, t) if eps_fn is not None else den.eps_flat(x, t)
    return sample.f * x + (sample.g**2 / (2.0 * sample.s * sample.sigma)) * eps


def pf_ode_rhs(den: OptimalDenoiser, x: Image, t: float, eps_fn: EpsFn | None = None) -> Image:
    """Probability-flow ODE right-hand side at (x, t).

    ``eps_fn`` substitutes the noise predictor (test hook); the default is
    the denoiser's eps*.
    """
    return Image(_rhs_flat(den, x.data, t, eps_fn), x.shape)


class Integration:
    """Step-by-step integrator state over a fixed node grid.

    Used directly by posterior-sampling loops that interleave extra updates
    between solver steps; ``x`` may be modified between calls to
    :meth:`step`. For the exponential multistep methods the stored predictor
    history then refers to the perturbed trajectory, which is the standard
    interleaving and stays fully deterministic.
    """

    def __init__(
        self,
        den: OptimalDenoiser,
        cfg: SamplerConfig,
        x0: np.ndarray,
        eps_fn: EpsFn | None = None,
    ):
        self.den = den
        self.cfg = cfg
        self.eps_fn = eps_fn
        self.nodes = time_grid(den.schedule, cfg)
        self.x = np.array(x0, dtype=np.float64)
        self.k = 0
        self._history: list[tuple[float, np.ndarray]] = []  # (lambda, eps) per node

    @property
    def t(self) -> float:
        return float(self.nodes[self.k])

    def done(self) -> bool:
        return self.k >= self.cfg.steps

    def _eps(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.eps_fn(x, t) if self.eps_fn is not None else self.den.eps_flat(x, t)

    def step(self) -> np.ndarray:
        """Advance one grid interval; returns (a reference to) the new state."""
        if self.done():
            raise SamplerError("integration already finished")
        t_cur = float(self.nodes[self.k])
        t_next = float(self.nodes[self.k + 1])
        if self.cfg.method == "euler":
            d = _rhs_flat(self.den, self.x, t_cur, self.eps_fn)
            x_next = self.x + (t_next - t_cur) * d
        elif self.cfg.method == "heun2":
            h = t_next - t_cur
            d1 = _rhs_flat(self.den, self.x, t_cur, self.eps_fn)
            pred = self.x + h * d1
            d2 = _rhs_flat(self.den, pred, t_next, self.eps_fn)
            x_next = self.x + 0.5 * h * (d1 + d2)
        else:
            x_next = self._expint_step(t_cur, t_next)
        if not np.isfinite(x_next).all():
            raise NonFiniteStateError(self.k + 1, t_next)
        self.x = x_next
        self.k += 1
        return self.x

    def _expint_step(self, t_cur: float, t_next: float) -> np.ndarray:
        sched = self.den.schedule
        cur = sched.eval(t_cur)
        nxt = sched.eval(t_next)
        lam_cur = -math.log(cur.sigma)
        lam_next = -math.log(nxt.sigma)
        eps_cur = self._eps(self.x, t_cur)
        self._history.append((lam_cur, eps_cur))
        if len(self._history) > 3:
            del self._history[0]
        order = min(self.cfg.expint_order, len(self._history))

        h = lam_next - lam_cur
        i0 = cur.sigma - nxt.sigma
        incr = i0 * eps_cur
        if order >= 2:
            lam_p, eps_p = self._history[-2]
            d1 = (eps_cur - eps_p) / (lam_cur - lam_p)
            i1 = cur.sigma - (1.0 + h) * nxt.sigma
            if order == 2:
                incr = incr + i1 * d1
            else:
                lam_pp, eps_pp = self._history[-3]
                d2 = (eps_p - eps_pp) / (lam_p - lam_pp)
                dd = (d1 - d2) / (lam_cur - lam_pp)
                c1 = d1 + (lam_cur - lam_p) * dd
                i2 = 2.0 * cur.sigma - (h * h + 2.0 * h + 2.0) * nxt.sigma
                incr = incr + i1 * c1 + i2 * dd
        return nxt.s * (self.x / cur.s - incr)

    def run(self, record: bool = False) -> tuple[np.ndarray, Trajectory | None]:
        shape = self.den.dataset.shape
        times: list[float] = [self.t] if record else []
        states: list[Image] = [Image(self.x, shape)] if record else []
        while not self.done():
            self.step()
            if record:
                times.append(self.t)
                states.append(Image(self.x, shape))
        traj = Trajectory(times, states) if record else None
        return self.x, traj


def _final_denoise(den: OptimalDenoiser, x: np.ndarray, t: float, eps_fn: EpsFn | None) -> np.ndarray:
    if eps_fn is None:
        return den.x0_flat(x, t)
    sample = den.schedule.eval(t)
    return (x - sample.s * sample.sigma * eps_fn(x, t)) / sample.s


def generate(
    den: OptimalDenoiser,
    x_T: Image,
    cfg: SamplerConfig,
    eps_fn: EpsFn | None = None,
):
    """Map a noise-space state at t_start to a generated image.

    Integrates the probability-flow ODE down to t_end and applies the exact
    final denoising step. ``x_T`` must already live in the schedule's noise
    space (see ``Schedule.scale_initial_noise``). Returns the image, or an
    (image, trajectory) pair when the config records the trajectory.
    """
    if cfg.t_start <= cfg.t_end:
        raise SamplerError("generation needs t_start > t_end")
    if x_T.shape != den.dataset.shape:
        raise SamplerError(f"input shape {x_T.shape} does not match dataset shape {den.dataset.shape}")
    integ = Integration(den, cfg, x_T.data, eps_fn)
    x_end, traj = integ.run(record=cfg.record_trajectory)
    out = Image(_final_denoise(den, x_end, cfg.t_end, eps_fn), x_T.shape)
    if cfg.record_trajectory:
        return out, traj
    return out


def encode(
    den: OptimalDenoiser,
    x_0: Image,
    cfg: SamplerConfig,
    eps_fn: EpsFn | None = None,
):
    """Map a clean image (treated as the state at t_start) to its noise code."""
    if cfg.t_start >= cfg.t_end:
        raise SamplerError("encoding needs t_start < t_end")
    if x_0.shape != den.dataset.shape:
        raise SamplerError(f"input shape {x_0.shape} does not match dataset shape {den.dataset.shape}")
    integ = Integration(den, cfg, x_0.data, eps_fn)
    x_end, traj = integ.run(record=cfg.record_trajectory)
    out = Image(x_end, x_0.shape)
    if cfg.record_trajectory:
        return out, traj
    return out


def integrate_raw(den: OptimalDenoiser, x_start: Image, cfg: SamplerConfig) -> Image:
    """Terminal ODE state without the final denoising step (diagnostics)."""
    integ = Integration(den, cfg, x_start.data)
    x_end, _ = integ.run()
    return Image(x_end, x_start.shape)


def convergence_probe(
    den: OptimalDenoiser,
    x_T: Image,
    method: str,
    steps_list: list[int],
    grid: str = "uniform",
) -> list[tuple[int, float]]:
    """Self-convergence errors of raw terminal states against the finest run.

    ``steps_list`` must be ascending; the last entry serves as reference, so
    its own error is exactly 0. The log-log slope of the remaining points
    recovers the method order (see :func:`convergence_order`).
    """
    if list(steps_list) != sorted(set(int(n) for n in steps_list)):
        raise SamplerError("steps_list must be strictly ascending")
    sched = den.schedule

    def terminal(steps: int) -> np.ndarray:
        cfg = SamplerConfig(method=method, steps=steps, t_start=sched.t_max, t_end=sched.t_min, grid=grid)
        return integrate_raw(den, x_T, cfg).data

    ref = terminal(steps_list[-1])
    out = []
    for steps in steps_list:
        err = float(np.linalg.norm(terminal(steps) - ref))
        out.append((int(steps), err))
    return out


def convergence_order(probe: list[tuple[int, float]]) -> float:
    """Least-squares order estimate from (steps, error) pairs; zero errors skipped."""
    pts = [(n, e) for n, e in probe if e > 0.0]
    if len(pts) < 2:
        raise SamplerError("need at least two nonzero errors to fit an order")
    logn = np.log([n for n, _ in pts])
    loge = np.log([e for _, e in pts])
    slope = np.polyfit(logn, loge, 1)[0]
    return float(-slope)
