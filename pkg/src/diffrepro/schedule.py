"""Perturbation-kernel schedules: VP, VE, and sub-VP.

A schedule fixes the conditional Gaussian N(s_t * x0, (s_t * sigma_t)^2 * I)
that noises clean data, together with the drift f(t) and diffusion g(t) of
the equivalent forward SDE dx = f(t) x dt + g(t) dW. The defining relations

    s_t     = exp( integral_0^t f(u) du )
    sigma_t = sqrt( integral_0^t g(u)^2 / s(u)^2 du )

are realized in closed form for each kind (VE carries sigma_min as the value
of sigma at t=0, its floor for the integral):

    VP      (linear beta(t) = beta_min + t (beta_max - beta_min)):
            s_t = exp(-B(t)/2),  sigma_t = sqrt(exp(B(t)) - 1),
            f = -beta(t)/2,      g = sqrt(beta(t)),
            with B(t) = integral_0^t beta.
    VE      s_t = 1,  sigma_t = sigma_min (sigma_max/sigma_min)^t,
            f = 0,    g = sigma_t sqrt(2 ln(sigma_max/sigma_min)).
    sub-VP  s_t as VP,  s_t sigma_t = 1 - exp(-B(t)),
            f = -beta(t)/2,  g = sqrt(beta(t) (1 - exp(-2 B(t)))).

All evaluation is clipped to [t_min, t_max]; t_min > 0 keeps 1/(s_t sigma_t)
finite for VP/sub-VP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

from .data import Image

KINDS = ("vp", "ve", "subvp")


class ScheduleError(ValueError):
    """Raised for invalid schedule parameters or out-of-range times."""


@dataclass(frozen=True)
class ScheduleSample:
    """Schedule coefficients at one time t."""

    t: float
    s: float
    sigma: float
    f: float
    g: float


@dataclass(frozen=True)
class Schedule:
    """Immutable perturbation-kernel parametrization.

    beta_min/beta_max apply to VP and sub-VP, sigma_min/sigma_max to VE; the
    defaults are the values standard for these kernel families on unit-scale
    image data. All operations are pure functions of (schedule, t).
    """

    kind: str
    beta_min: float = 0.1
    beta_max: float = 20.0
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    t_min: float = 1e-3
    t_max: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}, expected one of {KINDS}")
        if self.kind in ("vp", "subvp"):
            if not (self.beta_max >= self.beta_min >= 0.0) or self.beta_max <= 0.0:
                raise ScheduleError(
                    f"need beta_max >= beta_min >= 0 and beta_max > 0, got "
                    f"beta_min={self.beta_min}, beta_max={self.beta_max}"
                )
        if self.kind == "ve" and not (self.sigma_max > self.sigma_min > 0.0):
            raise ScheduleError(
                f"need sigma_max > sigma_min > 0, got "
                f"sigma_min={self.sigma_min}, sigma_max={self.sigma_max}"
            )
        if not (0.0 < self.t_min < self.t_max <= 1.0):
            raise ScheduleError(
                f"need 0 < t_min < t_max <= 1, got t_min={self.t_min}, t_max={self.t_max}"
            )

    # -- closed forms -------------------------------------------------------

    def beta(self, t: float) -> float:
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def beta_integral(self, t: float) -> float:
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t

    def _check_t(self, t: float) -> float:
        t = float(t)
        slack = 1e-12
        if not (self.t_min - slack <= t <= self.t_max + slack):
            raise ScheduleError(f"t={t} outside clip bounds [{self.t_min}, {self.t_max}]")
        return min(max(t, self.t_min), self.t_max)

    def eval(self, t: float) -> ScheduleSample:
        """Closed-form (s, sigma, f, g) at time t in [t_min, t_max]."""
        t = self._check_t(t)
        if self.kind == "vp":
            b = self.beta_integral(t)
            s = math.exp(-0.5 * b)
            sigma = math.sqrt(math.expm1(b))
            f = -0.5 * self.beta(t)
            g = math.sqrt(self.beta(t))
        elif self.kind == "ve":
            log_ratio = math.log(self.sigma_max / self.sigma_min)
            s = 1.0
            sigma = self.sigma_min * math.exp(t * log_ratio)
            f = 0.0
            g = sigma * math.sqrt(2.0 * log_ratio)
        else:  # subvp
            b = self.beta_integral(t)
            s = math.exp(-0.5 * b)
            sigma = 2.0 * math.sinh(0.5 * b)
            f = -0.5 * self.beta(t)
            g = math.sqrt(self.beta(t) * -math.expm1(-2.0 * b))
        return ScheduleSample(t=t, s=s, sigma=sigma, f=f, g=g)

    def sigma_at_zero(self) -> float:
        """Limit of sigma_t at t -> 0 (VE floors at sigma_min, others at 0)."""
        return self.sigma_min if self.kind == "ve" else 0.0

    def t_of_sigma(self, sigma: float) -> float:
        """Inverse of t -> sigma_t, used by log-SNR step grids."""
        if sigma <= self.sigma_at_zero():
            raise ScheduleError(f"sigma={sigma} at or below the schedule floor")
        if self.kind == "ve":
            return math.log(sigma / self.sigma_min) / math.log(self.sigma_max / self.sigma_min)
        if self.kind == "vp":
            b = math.log1p(sigma * sigma)
        else:  # subvp: sigma = 2 sinh(B/2)
            b = 2.0 * math.asinh(0.5 * sigma)
        dbeta = self.beta_max - self.beta_min
        if dbeta == 0.0:
            return b / self.beta_min
        return (-self.beta_min + math.sqrt(self.beta_min**2 + 2.0 * dbeta * b)) / dbeta

    def scale_initial_noise(self, eps: Image) -> Image:
        """Scale a unit-normal noise draw into this schedule's noise space.

        VP and sub-VP sample from N(0, I) directly; VE scales by sigma_max.
        """
        if self.kind == "ve":
            return Image(eps.data * self.sigma_max, eps.shape, key=eps.key)
        return eps


def check_consistency(schedule: Schedule, n_points: int) -> float:
    """Max deviation of the closed-form s_t, sigma_t from their defining integrals.

    Integrates f and g^2/s^2 with adaptive quadrature on an n_points grid over
    [t_min, t_max] and compares against the closed forms. A correct schedule
    stays below 1e-8.
    """
    if n_points < 2:
        raise ScheduleError("n_points must be at least 2")
    sigma0_sq = schedule.sigma_at_zero() ** 2

    # f and g^2/s^2 extend continuously to [0, t_min); evaluate the closed
    # forms directly so quadrature can integrate from 0.
    def f_of(u: float) -> float:
        if schedule.kind == "ve":
            return 0.0
        return -0.5 * schedule.beta(u)

    def g2_over_s2(u: float) -> float:
        if schedule.kind == "ve":
            log_ratio = math.log(schedule.sigma_max / schedule.sigma_min)
            sig = schedule.sigma_min * math.exp(u * log_ratio)
            return 2.0 * log_ratio * sig * sig
        b = schedule.beta_integral(u)
        if schedule.kind == "vp":
            return schedule.beta(u) * math.exp(b)
        return schedule.beta(u) * -math.expm1(-2.0 * b) * math.exp(b)

    worst = 0.0
    for t in np.linspace(schedule.t_min, schedule.t_max, n_points):
        sample = schedule.eval(float(t))
        int_f, _ = quad(f_of, 0.0, float(t), epsabs=1e-13, epsrel=1e-13, limit=200)
        int_g, _ = quad(g2_over_s2, 0.0, float(t), epsabs=1e-13, epsrel=1e-13, limit=200)
        s_quad = math.exp(int_f)
        sigma_quad = math.sqrt(max(sigma0_sq + int_g, 0.0))
        worst = max(worst, abs(sample.s - s_quad), abs(sample.sigma - sigma_quad))
    return worst


def with_clip(schedule: Schedule, t_min: float | None = None, t_max: float | None = None) -> Schedule:
    """Copy of ``schedule`` with adjusted clip bounds."""
    kwargs = {}
    if t_min is not None:
        kwargs["t_min"] = t_min
    if t_max is not None:
        kwargs["t_max"] = t_max
    return replace(schedule, **kwargs)
