"""Comparison policies: genie best response, centralized worst-connection
swapping with SVD beams, and supporting linear algebra.

The genie (oracle_csi) iterates sequential best responses each period until
the action profile is a fixed point, so every vehicle's realized action is
optimal against the others' final actions and its measured regret is zero.
The WCS baseline re-solves associations and SVD beamforming/combining vectors
from full CSI on the association grid and holds them frozen in between,
mirroring an offline centralized scheme operating on stale channel snapshots.
"""
from __future__ import annotations

import logging
import math

import numpy as np

from .phy import Codebook, exhaustive_best_beam
from .rates import (Action, PeriodState, best_leaf_response, explicit_rate,
                    interference_vector, leaf_rates, realized_rate)

logger = logging.getLogger(__name__)


def dominant_svd(channel: np.ndarray, max_iters: int = 100,
                 tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray, float] | None:
    """Dominant singular triple (w_t, w_r, sigma) via power iteration.

    Returns None when the iteration fails to converge or the channel is zero;
    callers fall back to an exhaustive codebook beam.
    """
    n_t = channel.shape[1]
    v = np.ones(n_t, dtype=complex) / math.sqrt(n_t)
    sigma = 0.0
    for _ in range(max_iters):
        u = channel @ v
        z = np.conj(channel.T) @ u
        norm = float(np.linalg.norm(z))
        if norm == 0.0:
            return None
        v_new = z / norm
        sigma = math.sqrt(norm)
        residual = float(np.linalg.norm(z - norm * v)) / norm
        v = v_new
        if residual < tol:
            u = channel @ v
            un = float(np.linalg.norm(u))
            if un == 0.0:
                return None
            return v, u / un, sigma
    return None


class OraclePolicy:
    """Full-CSI per-period best response over candidates x max-layer beams."""

    name = "oracle_csi"

    def __init__(self, codebook: Codebook, max_sweeps: int = 16):
        self.codebook = codebook
        self.max_sweeps = max_sweeps
        self._prev: dict[int, Action] = {}

    def decide(self, ps: PeriodState, prev_field=None) -> dict[int, Action]:
        actions: dict[int, Action] = {}
        for vid in sorted(ps.vehicles):
            if vid in self._prev:
                actions[vid] = self._prev[vid]
            else:
                bs, node, _ = best_leaf_response(ps, actions, vid)
                actions[vid] = Action(bs, self.codebook.beam_vector(node), node)
        converged = False
        for _ in range(self.max_sweeps):
            changed = False
            for vid in sorted(actions):
                current = realized_rate(ps, actions, vid)
                bs, node, rate = best_leaf_response(ps, actions, vid)
                if rate > current:
                    actions[vid] = Action(bs, self.codebook.beam_vector(node), node)
                    changed = True
            if not changed:
                converged = True
                break
        if not converged:
            logger.warning("best-response sweep hit the cap at period %d", ps.t)
        self._prev = dict(actions)
        return actions

    def observe(self, ps, outcomes) -> dict[int, bool]:
        self._prev = {vid: a for vid, a in self._prev.items() if vid in ps.vehicles}
        return {}


class WcsPolicy:
    """Worst-connection swapping on the association grid, frozen in between."""

    name = "wcs"

    def __init__(self, codebook: Codebook, association_interval: int):
        self.codebook = codebook
        self.association_interval = association_interval
        self._assigned: dict[int, Action] = {}

    def decide(self, ps: PeriodState, prev_field=None) -> dict[int, Action]:
        for vid in [v for v in self._assigned if v not in ps.vehicles]:
            del self._assigned[vid]
        if (ps.t - 1) % self.association_interval == 0:
            self._assigned = self.solve(ps)
        else:
            for vid in sorted(ps.vehicles):
                if vid not in self._assigned:
                    self._assigned[vid] = self._greedy_single(ps, vid)
        return dict(self._assigned)

    def observe(self, ps, outcomes) -> dict[int, bool]:
        return {}

    # -- solving ------------------------------------------------------------

    def _svd_action(self, ps: PeriodState, vid: int, bs_id: int
                    ) -> tuple[Action, float]:
        h = ps.channels[(vid, bs_id)]
        svd = dominant_svd(h)
        if svd is None:
            node = exhaustive_best_beam(h, ps.codebook)
            w_t = ps.codebook.beam_vector(node)
            s = h @ w_t
            norm = float(np.linalg.norm(s))
            w_r = s / norm if norm > 0 else _unit(ps.radio.num_rx_antennas)
            return Action(bs_id, w_t, node, w_r), norm
        w_t, w_r, sigma = svd
        return Action(bs_id, w_t, None, w_r), sigma

    def _greedy_single(self, ps: PeriodState, vid: int) -> Action:
        best, best_sigma = None, -1.0
        for bs in ps.base_stations:
            action, sigma = self._svd_action(ps, vid, bs.id)
            if sigma > best_sigma:
                best, best_sigma = action, sigma
        return best

    def _total_rate(self, ps: PeriodState, actions: dict[int, Action]) -> float:
        total = 0.0
        for vid in sorted(actions):
            a = actions[vid]
            v = interference_vector(ps, actions, vid, a.bs_id)
            total += explicit_rate(ps, vid, a.bs_id, a.w_t, a.w_r, v)
        return total

    def solve(self, ps: PeriodState) -> dict[int, Action]:
        vids = sorted(ps.vehicles)
        if not vids:
            return {}
        per_pair = {(vid, bs.id): self._svd_action(ps, vid, bs.id)
                    for vid in vids for bs in ps.base_stations}
        actions = {}
        for vid in vids:
            best = max(((sigma, -bs.id) for bs in ps.base_stations
                        for sigma in [per_pair[(vid, bs.id)][1]]))
            actions[vid] = per_pair[(vid, -best[1])][0]
        total = self._total_rate(ps, actions)
        for _ in range(len(vids) * len(ps.base_stations)):
            rates = {vid: explicit_rate(
                ps, vid, actions[vid].bs_id, actions[vid].w_t, actions[vid].w_r,
                interference_vector(ps, actions, vid, actions[vid].bs_id))
                for vid in vids}
            worst = min(rates, key=lambda v: (rates[v], v))
            best_total, best_action = total, None
            for bs in ps.base_stations:
                if bs.id == actions[worst].bs_id:
                    continue
                trial = dict(actions)
                trial[worst] = per_pair[(worst, bs.id)][0]
                trial_total = self._total_rate(ps, trial)
                if trial_total > best_total:
                    best_total, best_action = trial_total, trial[worst]
            if best_action is None:
                break
            actions[worst] = best_action
            total = best_total
        return actions


def _unit(n: int) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    out[0] = 1.0
    return out
