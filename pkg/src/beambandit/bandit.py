"""Kernel-ridge reward estimation, UCB scoring, sample storage, sync trigger.

The posterior over a query context x against stored contexts S with rewards R:

    mean = k_x^T (K + lambda I)^{-1} R
    dev  = lambda^{-1/2} sqrt(k(x,x) - k_x^T (K + lambda I)^{-1} k_x)

with K the Gram matrix over S and k_x the cross-kernel vector, solved through
a Cholesky factorization of the ridged Gram.  The event-based sync trigger
fires when elapsed time times the log-det information gain of the samples
collected since the last sync exceeds a threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kernels import ProductKernel
from .scenario import Context


class EstimatorError(RuntimeError):
    """Factorization failure (non-finite kernel values or indefinite system)."""


@dataclass(frozen=True)
class Sample:
    sample_id: int
    vehicle_id: int
    bs_id: int
    period: int
    context: Context
    reward: float       # normalized to [0, 1]


@dataclass
class Posterior:
    mean: float
    deviation: float


class SampleStore:
    """Bounded per-(vehicle, BS) collection of context-reward samples.

    Samples carry a synced flag; the sync watermark is the synced count.
    Eviction beyond capacity removes the oldest sample by (period, id).
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._samples: list[Sample] = []
        self._synced: list[bool] = []
        self._dirty = True
        self._ctx_cache: np.ndarray | None = None
        self._reward_cache: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def watermark(self) -> int:
        return sum(self._synced)

    def samples(self) -> list[Sample]:
        return list(self._samples)

    def new_samples(self) -> list[Sample]:
        return [s for s, f in zip(self._samples, self._synced) if not f]

    def has_sample(self, sample_id: int) -> bool:
        return any(s.sample_id == sample_id for s in self._samples)

    def append(self, sample: Sample, synced: bool = False) -> None:
        self._samples.append(sample)
        self._synced.append(synced)
        self._evict()
        self._dirty = True

    def merge(self, foreign: list[Sample]) -> None:
        """Union by sample id; merged samples count as synced."""
        have = {s.sample_id for s in self._samples}
        incoming = sorted((s for s in foreign if s.sample_id not in have),
                          key=lambda s: (s.period, s.sample_id))
        for s in incoming:
            self._samples.append(s)
            self._synced.append(True)
            have.add(s.sample_id)
        self._evict()
        self._dirty = True

    def mark_all_synced(self) -> None:
        self._synced = [True] * len(self._samples)

    def _evict(self) -> None:
        while len(self._samples) > self.capacity:
            idx = min(range(len(self._samples)),
                      key=lambda i: (self._samples[i].period, self._samples[i].sample_id))
            del self._samples[idx]
            del self._synced[idx]

    def _refresh(self) -> None:
        if not self._dirty:
            return
        if self._samples:
            self._ctx_cache = np.stack([s.context.as_array() for s in self._samples])
            self._reward_cache = np.array([s.reward for s in self._samples])
        else:
            self._ctx_cache = np.zeros((0, 6))
            self._reward_cache = np.zeros(0)
        self._dirty = False

    def context_array(self) -> np.ndarray:
        self._refresh()
        return self._ctx_cache

    def reward_array(self) -> np.ndarray:
        self._refresh()
        return self._reward_cache

    def synced_context_array(self) -> np.ndarray:
        self._refresh()
        mask = np.array(self._synced, dtype=bool)
        return self._ctx_cache[mask] if len(self._samples) else np.zeros((0, 6))

    def unsynced_context_array(self) -> np.ndarray:
        self._refresh()
        mask = ~np.array(self._synced, dtype=bool)
        return self._ctx_cache[mask] if len(self._samples) else np.zeros((0, 6))


class PosteriorSolver:
    """One ridged-Gram factorization reused across queries on a fixed store."""

    def __init__(self, kernel: ProductKernel, contexts: np.ndarray,
                 rewards: np.ndarray, lambda_k: float):
        self.kernel = kernel
        self.lambda_k = lambda_k
        self.contexts = contexts
        self.n = contexts.shape[0]
        if self.n:
            gram = kernel.gram(contexts)
            if not np.all(np.isfinite(gram)):
                raise EstimatorError("non-finite kernel values in Gram matrix")
            try:
                self._factor = cho_factor(gram + lambda_k * np.eye(self.n), lower=True)
            except np.linalg.LinAlgError as exc:
                raise EstimatorError(f"ridged Gram factorization failed: {exc}") from exc
            self._weights = cho_solve(self._factor, rewards)

    def query(self, context: Context) -> Posterior:
        self_sim = self.kernel(context, context)
        if self.n == 0:
            return Posterior(mean=0.0,
                             deviation=math.sqrt(max(self_sim, 0.0) / self.lambda_k))
        k_x = self.kernel.cross(context.as_array(), self.contexts)
        mean = float(k_x @ self._weights)
        quad = float(k_x @ cho_solve(self._factor, k_x))
        var = max(self_sim - quad, 0.0) / self.lambda_k
        return Posterior(mean=mean, deviation=math.sqrt(var))


def posterior(query: Context, contexts: np.ndarray, rewards: np.ndarray,
              kernel: ProductKernel, lambda_k: float) -> Posterior:
    """Single-query convenience wrapper around PosteriorSolver."""
    return PosteriorSolver(kernel, contexts, rewards, lambda_k).query(query)


def ucb_score(query: Context, store: SampleStore, kernel: ProductKernel,
              lambda_k: float, alpha: float) -> float:
    post = posterior(query, store.context_array(), store.reward_array(),
                     kernel, lambda_k)
    return post.mean + alpha * post.deviation


def ucb_select(scores: dict[int, float]) -> int:
    """Arm with the highest score; ties resolve to the lowest arm id."""
    if not scores:
        raise ValueError("no arms to select from")
    best_id = None
    best = -math.inf
    for arm in sorted(scores):
        if scores[arm] > best:
            best = scores[arm]
            best_id = arm
    return best_id


def ridged_logdet(kernel: ProductKernel, contexts: np.ndarray,
                  lambda_k: float) -> float:
    """log det(I + lambda^{-1} K) over a context array; 0 for the empty set."""
    n = contexts.shape[0]
    if n == 0:
        return 0.0
    mat = np.eye(n) + kernel.gram(contexts) / lambda_k
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise EstimatorError(f"log-det factorization failed: {exc}") from exc
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def sync_gain(store: SampleStore, kernel: ProductKernel, lambda_k: float,
              literal_new_only: bool = False) -> float:
    """Log-det information-gain term of the sync trigger for one store.

    Default: gain of all samples over the snapshot present at the last sync.
    The literal variant puts the new samples alone in the denominator.
    """
    all_ld = ridged_logdet(kernel, store.context_array(), lambda_k)
    base = store.unsynced_context_array() if literal_new_only \
        else store.synced_context_array()
    return all_ld - ridged_logdet(kernel, base, lambda_k)


def sync_trigger(store: SampleStore, t: int, t_syn: int, kernel: ProductKernel,
                 lambda_k: float, threshold: float,
                 literal_new_only: bool = False) -> bool:
    """True iff (t - t_syn) * log-det gain exceeds the threshold."""
    if t <= t_syn or len(store) == 0:
        return False
    return (t - t_syn) * sync_gain(store, kernel, lambda_k, literal_new_only) > threshold


def logdet_alpha(t: int, store: SampleStore, kernel: ProductKernel,
                 lambda_k: float, norm_bound: float, delta: float) -> float:
    """Optional exploration schedule tied to the accumulated information."""
    ld = ridged_logdet(kernel, store.context_array(), lambda_k)
    return (math.sqrt(lambda_k) * norm_bound
            + math.sqrt(max(4.0 * math.log(max(t, 1) / delta), 0.0) + 2.0 * ld))
