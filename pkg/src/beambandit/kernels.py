"""Similarity kernels over bandit contexts and their Gram machinery.

Five per-feature components, each mapping a feature pair into [0, 1]:

* bearing: truncated cosine of the wrapped angle difference (blockage
  correlation decays with bearing offset and vanishes past pi/2),
* distance: Gaussian,
* Doppler: exponential (Laplacian), less sensitive to spread variations,
* load: triangular hinge,
* beam bias: Gaussian on the wrapped steering-angle offset.

The association kernel is the product of the first four; the beam-tracking
kernel additionally multiplies the beam-bias component.  Contexts attached
to different base stations always have similarity zero, as their reward
distributions are treated as independent.
"""
from __future__ import annotations

import math

import numpy as np

from .config import KernelConfig
from .phy import wrap_angle
from .scenario import Context


def bearing_similarity(a1: float, a2: float) -> float:
    """cos(d) for wrapped distance d < pi/2, else 0."""
    d = abs(wrap_angle(a1 - a2))
    return math.cos(d) if d < math.pi / 2 else 0.0


def distance_similarity(l1: float, l2: float, sigma: float) -> float:
    return math.exp(-((l1 - l2) ** 2) / (2.0 * sigma ** 2))


def doppler_similarity(f1: float, f2: float, sigma: float) -> float:
    return math.exp(-abs(f1 - f2) / sigma)


def load_similarity(n1: float, n2: float, sigma: float) -> float:
    return max(0.0, 1.0 - abs(n1 - n2) / sigma)


def beam_similarity(p1: float, p2: float, sigma: float) -> float:
    d = wrap_angle(p1 - p2)
    return math.exp(-(d ** 2) / (2.0 * sigma ** 2))


class ProductKernel:
    """Product kernel over contexts, with or without the beam-bias factor.

    Evaluates scalars via __call__ and vectorized Gram/cross matrices over
    (n, 6) context arrays with columns [bs_id, angle, distance, doppler,
    load, beam_bias].
    """

    def __init__(self, params: KernelConfig, sigma_psi: float, with_beam: bool):
        self.params = params
        self.sigma_psi = sigma_psi
        self.with_beam = with_beam

    def __call__(self, c1: Context, c2: Context) -> float:
        if c1.bs_id != c2.bs_id:
            return 0.0
        value = (bearing_similarity(c1.angle, c2.angle)
                 * distance_similarity(c1.distance, c2.distance, self.params.sigma_l)
                 * doppler_similarity(c1.doppler, c2.doppler, self.params.sigma_f)
                 * load_similarity(c1.load, c2.load, self.params.sigma_n))
        if self.with_beam:
            value *= beam_similarity(c1.beam_bias, c2.beam_bias, self.sigma_psi)
        return value

    # -- vectorized paths ---------------------------------------------------

    def _pairwise(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        d_ang = np.abs(_wrap(left[:, 1, None] - right[None, :, 1]))
        k = np.where(d_ang < math.pi / 2, np.cos(d_ang), 0.0)
        d_l = left[:, 2, None] - right[None, :, 2]
        k = k * np.exp(-(d_l ** 2) / (2.0 * self.params.sigma_l ** 2))
        d_f = np.abs(left[:, 3, None] - right[None, :, 3])
        k = k * np.exp(-d_f / self.params.sigma_f)
        d_n = np.abs(left[:, 4, None] - right[None, :, 4])
        k = k * np.maximum(0.0, 1.0 - d_n / self.params.sigma_n)
        if self.with_beam:
            d_p = _wrap(left[:, 5, None] - right[None, :, 5])
            k = k * np.exp(-(d_p ** 2) / (2.0 * self.sigma_psi ** 2))
        same_bs = left[:, 0, None] == right[None, :, 0]
        return np.where(same_bs, k, 0.0)

    def gram(self, contexts: np.ndarray) -> np.ndarray:
        """Symmetric Gram matrix over an (n, 6) context array."""
        if contexts.ndim != 2 or contexts.shape[0] == 0:
            raise ValueError("gram needs a non-empty (n, 6) context array")
        g = self._pairwise(contexts, contexts)
        return 0.5 * (g + g.T)

    def cross(self, query: np.ndarray, contexts: np.ndarray) -> np.ndarray:
        """Kernel vector between one query context and each stored context."""
        if contexts.shape[0] == 0:
            return np.zeros(0)
        return self._pairwise(query.reshape(1, -1), contexts)[0]


def _wrap(a: np.ndarray) -> np.ndarray:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def make_kernels(params: KernelConfig, num_tx_antennas: int
                 ) -> tuple[ProductKernel, ProductKernel]:
    """(association kernel, beam-tracking kernel) with the resolved bias bandwidth."""
    sigma_psi = params.resolved_sigma_psi(num_tx_antennas)
    return (ProductKernel(params, sigma_psi, with_beam=False),
            ProductKernel(params, sigma_psi, with_beam=True))
