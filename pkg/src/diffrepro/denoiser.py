"""Closed-form optimal noise predictor over a finite dataset.

When the data distribution is the uniform delta mixture over dataset images
{y_i}, the mean-squared-error-optimal noise predictor at noise level
(s_t, sigma_t) has an exact expression: the posterior over mixture
components given x is a softmax of

    a_i = -||x - s_t y_i||^2 / (2 s_t^2 sigma_t^2),

the posterior-mean clean image is x0 = sum_i w_i y_i, and the optimal
prediction is

    eps*(x, t) = (x - s_t x0) / (s_t sigma_t).

All mixture arithmetic runs in log space with max subtraction: the direct
density ratio underflows catastrophically for small sigma_t, which is exactly
the regime deterministic sampling ends in. The posterior Jacobian is also
closed-form, d x0 / dx = Cov_w(y) / (s_t sigma_t^2), giving an exact O(N d)
vector product used by the inverse-problem gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Image
from .schedule import Schedule


class DenoiserError(ValueError):
    """Raised for shape mismatches or non-finite inputs."""


@dataclass(frozen=True)
class PosteriorStats:
    """Posterior over dataset images at one (x, t) probe.

    weights sums to 1; x0_mean = weights @ images lies in the componentwise
    convex hull of the dataset; log_norm is logsumexp of the unnormalized
    log weights a_i (the Gaussian normalizer and the 1/N mixture prior are
    omitted, they cancel in every ratio this package takes).
    """

    weights: np.ndarray
    x0_mean: Image
    log_norm: float


class OptimalDenoiser:
    """Binds a dataset and a schedule; stateless and safe to share.

    Public methods take and return :class:`Image`. The ``*_flat`` variants
    operate on bare flat float64 vectors and skip per-call validation; the
    sampling loops use them.
    """

    def __init__(self, dataset: Dataset, schedule: Schedule):
        self.dataset = dataset
        self.schedule = schedule
        self._y = dataset.matrix  # (N, d), read-only

    # -- flat fast paths ----------------------------------------------------

    def stats_flat(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        """(weights, x0_mean, log_norm) for a flat state vector."""
        sample = self.schedule.eval(t)
        s, sigma = sample.s, sample.sigma
        diff = x[None, :] - s * self._y
        a = (diff * diff).sum(axis=1) / (-2.0 * (s * sigma) ** 2)
        m = a.max()
        e = np.exp(a - m)
        z = e.sum()
        w = e / z
        return w, w @ self._y, float(m + np.log(z))

    def x0_flat(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.stats_flat(x, t)[1]

    def eps_flat(self, x: np.ndarray, t: float) -> np.ndarray:
        sample = self.schedule.eval(t)
        x0 = self.x0_flat(x, t)
        return (x - sample.s * x0) / (sample.s * sample.sigma)

    def cov_vjp_flat(self, x: np.ndarray, t: float, v: np.ndarray) -> np.ndarray:
        sample = self.schedule.eval(t)
        w, x0, _ = self.stats_flat(x, t)
        centered = self._y - x0[None, :]
        proj = centered @ v
        return (w * proj) @ centered / (sample.s * sample.sigma**2)

    # -- public Image-level API ----------------------------------------------

    def _validate(self, x: Image) -> np.ndarray:
        if x.shape != self.dataset.shape:
            raise DenoiserError(f"probe shape {x.shape} does not match dataset shape {self.dataset.shape}")
        return x.data

    def posterior_weights(self, x: Image, t: float) -> PosteriorStats:
        """Mixture responsibilities of every dataset image for the probe x."""
        w, x0, log_norm = self.stats_flat(self._validate(x), t)
        return PosteriorStats(weights=w, x0_mean=Image(x0, x.shape), log_norm=log_norm)

    def x0_prediction(self, x: Image, t: float) -> Image:
        """Posterior-mean clean image sum_i w_i y_i."""
        return Image(self.x0_flat(self._validate(x), t), x.shape)

    def epsilon_star(self, x: Image, t: float) -> Image:
        """Optimal noise prediction (x - s_t x0) / (s_t sigma_t)."""
        return Image(self.eps_flat(self._validate(x), t), x.shape)

    def posterior_cov_vjp(self, x: Image, t: float, v: Image) -> Image:
        """Action of the symmetric Jacobian d x0 / dx on v.

        Equals (1 / (s_t sigma_t^2)) sum_i w_i (y_i - x0) <y_i - x0, v>,
        positive semidefinite and linear in v.
        """
        xv = self._validate(x)
        vv = self._validate(v)
        return Image(self.cov_vjp_flat(xv, t, vv), x.shape)
