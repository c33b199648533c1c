"""Per-vehicle learning agent: UCB association, kernel-guided beam reset,
hierarchical beam descent, and event-triggered sample sharing.

One agent owns one vehicle's sample stores and beam state.  Each period it
either re-associates (every association_interval periods since arrival) and
resets its beam from the kernel estimates, or carries the previous beam node
forward; it then refines the node by probing (two children below the leaf
layer, the two adjacent leaves at it).  At the last period of each interval
it evaluates the sync trigger and, when it fires, exchanges samples through
the shared pool.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .bandit import (PosteriorSolver, Sample, SampleStore, logdet_alpha,
                     sync_trigger, ucb_select)
from .config import PolicyConfig, UcbConfig
from .kernels import ProductKernel
from .phy import Codebook, CodebookNode, wrap_angle
from .scenario import Context


@dataclass
class VehicleView:
    """Read-only per-period window a vehicle's agent gets on the world."""
    t: int
    vehicle_id: int
    candidate_ids: list[int]
    geometry: Callable[[int], tuple[float, float, float]]   # bs -> (angle, dist, doppler)
    los_angle: Callable[[int], float]                       # bs -> folded LOS steering angle
    probe_rate: Callable[[int, CodebookNode], float]        # measured candidate-beam rate
    best_csi_node: Callable[[int], CodebookNode] | None = None


@dataclass
class Decision:
    bs_id: int
    node: CodebookNode
    probes: list[CodebookNode] = field(default_factory=list)
    association_period: bool = False


def reset_layer(deviation: float, lambda_k: float, max_layer: int) -> int:
    """Beam-reset layer from the posterior deviation, clamped to [1, L_m].

    High uncertainty (deviation^2 -> 1/lambda) selects the widest layer;
    zero uncertainty selects L_m - 1, one split above the leaves.
    """
    raw = math.ceil(max_layer * (1.0 - lambda_k * deviation * deviation)) - 1
    return min(max(raw, 1), max_layer)


class KernelUcbBeamAgent:
    """The learning policy, with variants sharing the association machinery.

    reset_mode: "kernel" uses the bias-grid posterior; "layer1" restarts at
    the widest layer pointing at the BS.  beam_mode: "hierarchical" probes
    and descends; "exhaustive_csi" takes the true-CSI best leaf (no probes).
    """

    def __init__(self, vehicle_id: int, arrival_period: int, codebook: Codebook,
                 assoc_kernel: ProductKernel, bt_kernel: ProductKernel,
                 ucb: UcbConfig, policy: PolicyConfig, lambda_k: float,
                 association_interval: int, norm_rate: float = 1.0,
                 reset_mode: str = "kernel", beam_mode: str = "hierarchical"):
        self.vehicle_id = vehicle_id
        self.arrival_period = arrival_period
        self.codebook = codebook
        self.assoc_kernel = assoc_kernel
        self.bt_kernel = bt_kernel
        self.ucb = ucb
        self.policy = policy
        self.lambda_k = lambda_k
        self.association_interval = association_interval
        self.norm_rate = norm_rate
        self.reset_mode = reset_mode
        self.beam_mode = beam_mode

        self.serving: int | None = None
        self.node: CodebookNode | None = None
        self.t_syn = arrival_period
        self.assoc_stores: dict[int, SampleStore] = {}
        self.bt_stores: dict[int, SampleStore] = {}
        self.known_loads: dict[int, int] = {}
        self._last_node: CodebookNode | None = None
        self._last_full_rate: float | None = None
        self._pending_probes: list[tuple[CodebookNode, float]] = []

    # -- period phase helpers -------------------------------------------------

    def is_association_period(self, t: int) -> bool:
        return (t - self.arrival_period) % self.association_interval == 0

    def is_sync_period(self, t: int) -> bool:
        return (t - self.arrival_period) % self.association_interval \
            == self.association_interval - 1

    def _store(self, stores: dict[int, SampleStore], bs_id: int) -> SampleStore:
        if bs_id not in stores:
            stores[bs_id] = SampleStore(self.policy.capacity)
        return stores[bs_id]

    def _context(self, view: VehicleView, bs_id: int, load: int,
                 bias: float) -> Context:
        angle, dist, doppler = view.geometry(bs_id)
        return Context(bs_id=bs_id, angle=angle, distance=dist,
                       doppler=doppler, load=load, beam_bias=bias)

    def _alpha(self, t: int, store: SampleStore) -> float:
        if self.ucb.alpha_schedule == "logdet":
            return logdet_alpha(t, store, self.assoc_kernel, self.lambda_k,
                                self.ucb.norm_bound, self.ucb.confidence_delta)
        return self.ucb.alpha

    # -- decisions -------------------------------------------------------------

    def decide(self, view: VehicleView) -> Decision:
        t = view.t
        association = self.is_association_period(t) or self.serving is None
        if association:
            self.serving = self._decide_association(view)
            self.node = self._reset_beam(view, self.serving)
        if self.beam_mode == "exhaustive_csi":
            self.node = view.best_csi_node(self.serving)
            self._pending_probes = []
            return Decision(self.serving, self.node, [], association)
        node, probed = self._descend(view)
        self.node = node
        self._pending_probes = probed
        return Decision(self.serving, node, [n for n, _ in probed], association)

    def _decide_association(self, view: VehicleView) -> int:
        if not view.candidate_ids:
            raise ValueError(f"vehicle {self.vehicle_id}: empty candidate set")
        scores = {}
        for a in view.candidate_ids:
            store = self._store(self.assoc_stores, a)
            ctx = self._context(view, a, self.known_loads.get(a, 1), 0.0)
            solver = PosteriorSolver(self.assoc_kernel, store.context_array(),
                                     store.reward_array(), self.lambda_k)
            post = solver.query(ctx)
            scores[a] = post.mean + self._alpha(view.t, store) * post.deviation
        return ucb_select(scores)

    def _reset_beam(self, view: VehicleView, bs_id: int) -> CodebookNode:
        rho = view.los_angle(bs_id)
        if self.reset_mode == "layer1":
            return self.codebook.snap(rho, 1)
        store = self._store(self.bt_stores, bs_id)
        solver = PosteriorSolver(self.bt_kernel, store.context_array(),
                                 store.reward_array(), self.lambda_k)
        load = self.known_loads.get(bs_id, 1)
        # bias grid: every leaf pointing direction, relative to the LOS angle;
        # ties prefer the smallest |bias| (beam toward the BS)
        grid = sorted((wrap_angle(leaf.psi - rho) for leaf in self.codebook.leaves()),
                      key=lambda b: (abs(b), b))
        best_bias, best_mean, best_dev = None, -math.inf, None
        for bias in grid:
            post = solver.query(self._context(view, bs_id, load, bias))
            if post.mean > best_mean:
                best_bias, best_mean, best_dev = bias, post.mean, post.deviation
        layer = reset_layer(best_dev, self.lambda_k, self.codebook.max_layer)
        return self.codebook.snap(best_bias + rho, layer)

    def _descend(self, view: VehicleView
                 ) -> tuple[CodebookNode, list[tuple[CodebookNode, float]]]:
        node = self.node
        if node.layer < self.codebook.max_layer:
            lo, hi = self.codebook.children(node)
            r_lo = view.probe_rate(self.serving, lo)
            r_hi = view.probe_rate(self.serving, hi)
            return (lo if r_lo >= r_hi else hi), [(lo, r_lo), (hi, r_hi)]
        # leaf layer: track by comparing the adjacent leaves against the
        # previous period's measured rate of the current beam
        neighbors = self.codebook.neighbors(node)
        probed = [(nb, view.probe_rate(self.serving, nb)) for nb in neighbors]
        best, best_rate = node, -math.inf
        if self._last_node == node and self._last_full_rate is not None:
            best_rate = self._last_full_rate
        for nb, r in probed:
            if r > best_rate:
                best, best_rate = nb, r
        return best, probed

    # -- outcomes and synchronization -------------------------------------------

    def record(self, view: VehicleView, sample_id: int, reward_norm: float,
               full_rate: float, serving_load: int,
               probe_sample_ids: tuple[int, ...] = ()) -> None:
        """Store this period's (context, reward) sample for both kernels."""
        rho = view.los_angle(self.serving)
        bias = wrap_angle(self.node.psi - rho)
        ctx = self._context(view, self.serving, serving_load, bias)
        sample = Sample(sample_id=sample_id, vehicle_id=self.vehicle_id,
                        bs_id=self.serving, period=view.t, context=ctx,
                        reward=reward_norm)
        self._store(self.assoc_stores, self.serving).append(sample)
        self._store(self.bt_stores, self.serving).append(sample)
        if self.policy.include_probe_samples:
            for pid, (pnode, prate) in zip(probe_sample_ids, self._pending_probes):
                pctx = self._context(view, self.serving, serving_load,
                                     wrap_angle(pnode.psi - rho))
                preward = min(max(prate / self.norm_rate, 0.0), 1.0)
                self._store(self.bt_stores, self.serving).append(
                    Sample(pid, self.vehicle_id, self.serving, view.t, pctx, preward))
        self.known_loads[self.serving] = serving_load
        self._last_node = self.node
        self._last_full_rate = full_rate

    def new_samples(self) -> list[Sample]:
        out = []
        for bs_id in sorted(self.assoc_stores):
            out.extend(self.assoc_stores[bs_id].new_samples())
        return sorted(out, key=lambda s: s.sample_id)

    def maybe_sync(self, t: int, pool_by_bs: dict[int, list[Sample]],
                   loads_broadcast: dict[int, int]) -> list[Sample] | None:
        """Evaluate the trigger at the interval's last period; exchange if it fires.

        Returns the uploaded (previously unshared) samples when the trigger
        fires, for the caller to fold into the shared pool; None otherwise.
        """
        if not self.is_sync_period(t) or self.serving is None:
            return None
        store = self.assoc_stores.get(self.serving)
        if store is None:
            return None
        fired = sync_trigger(store, t, self.t_syn, self.assoc_kernel,
                             self.lambda_k, self.ucb.sync_threshold,
                             self.policy.sync_literal_new_only)
        if not fired:
            return None
        upload = self.new_samples()
        for bs_id, shared in pool_by_bs.items():
            self._store(self.assoc_stores, bs_id).merge(shared)
            self._store(self.bt_stores, bs_id).merge(shared)
        for stores in (self.assoc_stores, self.bt_stores):
            for s in stores.values():
                s.mark_all_synced()
        self.t_syn = t
        # broadcast counts become "load if I attached there": own BS already
        # counts this vehicle, other BSs gain it
        for bs_id, raw in loads_broadcast.items():
            self.known_loads[bs_id] = raw if bs_id == self.serving else raw + 1
        return upload


class RandomAgent:
    """Uniform candidate BS each interval, uniform leaf beam each period."""

    def __init__(self, vehicle_id: int, arrival_period: int, codebook: Codebook,
                 association_interval: int, rng):
        self.vehicle_id = vehicle_id
        self.arrival_period = arrival_period
        self.codebook = codebook
        self.association_interval = association_interval
        self.rng = rng
        self.serving: int | None = None
        self.node: CodebookNode | None = None

    def is_association_period(self, t: int) -> bool:
        return (t - self.arrival_period) % self.association_interval == 0

    def decide(self, view: VehicleView) -> Decision:
        association = self.is_association_period(view.t) or self.serving is None
        if association:
            self.serving = view.candidate_ids[
                self.rng.integers(len(view.candidate_ids))]
        leaves = self.codebook.leaves()
        self.node = leaves[self.rng.integers(len(leaves))]
        return Decision(self.serving, self.node, [], association)

    def record(self, *args, **kwargs) -> None:
        pass

    def maybe_sync(self, *args, **kwargs) -> None:
        return None
