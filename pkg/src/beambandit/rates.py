"""Per-period rate evaluation shared by the engine, baselines, and regret oracle.

All comparisons between a realized action and enumerated alternatives go
through the same functions here, in the same summation order (ascending
vehicle id, leaf-matrix products), so argmax dominance holds bitwise and the
genie policy's measured regret is exactly zero at a best-response fixed point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import RadioConfig
from .phy import Codebook, CodebookNode
from .scenario import BaseStation, Vehicle


@dataclass
class Action:
    """One vehicle's transmission this period."""
    bs_id: int
    w_t: np.ndarray
    node: CodebookNode | None = None      # None for non-codebook (SVD) beams
    w_r: np.ndarray | None = None         # explicit combiner; None = matched
    probes: int = 0                       # candidate beams measured this period


@dataclass
class PeriodState:
    """Read-only snapshot of one period: geometry, channels, candidate sets."""
    t: int
    vehicles: dict[int, Vehicle]
    base_stations: list[BaseStation]
    channels: dict[tuple[int, int], np.ndarray]
    candidates: dict[int, list[int]]
    codebook: Codebook
    radio: RadioConfig

    def bs_by_id(self, bs_id: int) -> BaseStation:
        return self.base_stations[bs_id]


def interference_vector(ps: PeriodState, actions: dict[int, Action],
                        vehicle_id: int, bs_id: int) -> np.ndarray:
    """Coherent interference field at a BS, excluding the victim's own signal.

    sqrt(P) * sum over k != vehicle_id (ascending) of H[k, bs] @ w_k.
    """
    num_rx = ps.radio.num_rx_antennas
    acc = np.zeros(num_rx, dtype=complex)
    sqrt_p = math.sqrt(ps.radio.tx_power_w)
    for k in sorted(actions):
        if k == vehicle_id:
            continue
        acc = acc + sqrt_p * (ps.channels[(k, bs_id)] @ actions[k].w_t)
    return acc


def rate_with_powers(signal_w: float, interference_w: float,
                     radio: RadioConfig) -> float:
    noise = radio.noise_density_w_per_hz * radio.bandwidth_hz
    return radio.bandwidth_hz * math.log2(1.0 + signal_w / (interference_w + noise))


def matched_rate(ps: PeriodState, vehicle_id: int, bs_id: int,
                 w_t: np.ndarray, interference: np.ndarray) -> float:
    """Rate of one transmit beam under the matched (H w / ||H w||) combiner."""
    s = ps.channels[(vehicle_id, bs_id)] @ w_t
    energy = float(np.real(np.vdot(s, s)))
    if energy == 0.0:
        return 0.0
    p_sig = ps.radio.tx_power_w * energy
    p_int = abs(np.vdot(s, interference)) ** 2 / energy
    return rate_with_powers(p_sig, p_int, ps.radio)


def explicit_rate(ps: PeriodState, vehicle_id: int, bs_id: int, w_t: np.ndarray,
                  w_r: np.ndarray, interference: np.ndarray) -> float:
    """Rate under a fixed receive combiner (frozen SVD vectors)."""
    s = ps.channels[(vehicle_id, bs_id)] @ w_t
    p_sig = ps.radio.tx_power_w * abs(np.vdot(w_r, s)) ** 2
    p_int = abs(np.vdot(w_r, interference)) ** 2
    return rate_with_powers(p_sig, p_int, ps.radio)


def leaf_rates(ps: PeriodState, vehicle_id: int, bs_id: int,
               interference: np.ndarray) -> np.ndarray:
    """Matched-combiner rates of every max-layer beam, one vectorized pass."""
    g = ps.channels[(vehicle_id, bs_id)] @ ps.codebook.leaf_matrix   # (N_R, n_leaf)
    energy = np.real(np.sum(np.conj(g) * g, axis=0))
    proj = np.abs(np.conj(g).T @ interference) ** 2
    noise = ps.radio.noise_density_w_per_hz * ps.radio.bandwidth_hz
    with np.errstate(divide="ignore", invalid="ignore"):
        p_int = np.where(energy > 0.0, proj / energy, 0.0)
        sinr = np.where(energy > 0.0,
                        ps.radio.tx_power_w * energy / (p_int + noise), 0.0)
    return ps.radio.bandwidth_hz * np.log2(1.0 + sinr)


def leaf_index(codebook: Codebook, node: CodebookNode) -> int:
    w = codebook.sector_width(node.layer)
    return int(round((node.psi + math.pi / 2) / w - 0.5))


def realized_rate(ps: PeriodState, actions: dict[int, Action],
                  vehicle_id: int) -> float:
    """Full-period rate of the realized action under the live profile.

    Max-layer codebook actions are evaluated through the same leaf-matrix
    pass the enumerations use, keeping regret comparisons bitwise exact.
    """
    action = actions[vehicle_id]
    v = interference_vector(ps, actions, vehicle_id, action.bs_id)
    if action.w_r is not None:
        return explicit_rate(ps, vehicle_id, action.bs_id, action.w_t, action.w_r, v)
    if action.node is not None and action.node.layer == ps.codebook.max_layer:
        rates = leaf_rates(ps, vehicle_id, action.bs_id, v)
        return float(rates[leaf_index(ps.codebook, action.node)])
    return matched_rate(ps, vehicle_id, action.bs_id, action.w_t, v)


def best_leaf_response(ps: PeriodState, actions: dict[int, Action],
                       vehicle_id: int) -> tuple[int, CodebookNode, float]:
    """Best (candidate BS, max-layer beam) against the others' frozen actions.

    Ties resolve to the lowest (bs_id, steering angle).
    """
    best = None
    best_rate = -math.inf
    for a in ps.candidates[vehicle_id]:
        v = interference_vector(ps, actions, vehicle_id, a)
        rates = leaf_rates(ps, vehicle_id, a, v)
        idx = int(np.argmax(rates))          # first max = smallest angle
        if rates[idx] > best_rate:
            best = (a, ps.codebook.leaves()[idx])
            best_rate = float(rates[idx])
    return best[0], best[1], best_rate
