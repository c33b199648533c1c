"""Uniform linear arrays, the hierarchical binary-tree beam codebook, a geometric
Rician multipath channel with static rectangle blockage, and SINR/rate arithmetic.

Angle conventions: steering angles live in [-pi/2, pi/2] (broadside ULA domain).
World bearings are folded into that domain with fold_angle(), which preserves
sin(angle) and therefore the array phase profile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RadioConfig


class PhyError(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def fold_angle(bearing: float) -> float:
    """Fold a world bearing into the ULA steering domain [-pi/2, pi/2].

    A half-wavelength ULA cannot distinguish bearings with equal sine, so the
    fold keeps sin() unchanged: fold(b) = asin(sin(b)).
    """
    return math.asin(math.sin(bearing))


# ---------------------------------------------------------------------------
# codebook
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CodebookNode:
    """A beam in the binary-tree codebook: sector center angle and layer."""
    psi: float
    layer: int

    @property
    def width(self) -> float:
        return math.pi / (2 ** self.layer)


def steering_vector(psi: float, n: int) -> np.ndarray:
    """Unit-norm ULA response: entry k = exp(j*pi*k*sin(psi)) / sqrt(n)."""
    if n < 1:
        raise PhyError(f"steering vector needs n >= 1, got {n}")
    k = np.arange(n)
    return np.exp(1j * math.pi * k * math.sin(psi)) / math.sqrt(n)


class Codebook:
    """Hierarchical binary-tree codebook over [-pi/2, pi/2) for an N_T-element ULA.

    Layer l holds 2^l sectors of width pi/2^l; a beam at layer l activates
    N(l) = min(2^l, N_T) leading array elements.  The maximum layer is
    L_m = ceil(log2 N_T); layer 1 (two half-space sectors) is the widest used.
    """

    def __init__(self, num_antennas: int):
        if num_antennas < 2 or (num_antennas & (num_antennas - 1)) != 0:
            raise PhyError(f"codebook needs a power-of-two antenna count >= 2, got {num_antennas}")
        self.num_antennas = num_antennas
        self.max_layer = int(math.ceil(math.log2(num_antennas)))
        self._leaves = [self.node(self.max_layer, k) for k in range(2 ** self.max_layer)]
        self.leaf_matrix = np.stack(
            [self.beam_vector(node) for node in self._leaves], axis=1
        )  # (N_T, num_leaves)

    def sector_width(self, layer: int) -> float:
        return math.pi / (2 ** layer)

    def node(self, layer: int, index: int) -> CodebookNode:
        if not 1 <= layer <= self.max_layer:
            raise PhyError(f"layer {layer} outside [1, {self.max_layer}]")
        count = 2 ** layer
        if not 0 <= index < count:
            raise PhyError(f"sector index {index} outside [0, {count})")
        w = self.sector_width(layer)
        return CodebookNode(psi=-math.pi / 2 + (index + 0.5) * w, layer=layer)

    def snap(self, angle: float, layer: int) -> CodebookNode:
        """Nearest sector center at the given layer (angle folded first)."""
        a = fold_angle(angle)
        w = self.sector_width(layer)
        index = int(math.floor((a + math.pi / 2) / w))
        index = min(max(index, 0), 2 ** layer - 1)
        return self.node(layer, index)

    def children(self, node: CodebookNode) -> tuple[CodebookNode, CodebookNode]:
        """The two half-sector beams one layer down (centers psi -+ w/4)."""
        if node.layer >= self.max_layer:
            raise PhyError(f"node at leaf layer {node.layer} has no children")
        q = node.width / 4.0
        return (
            CodebookNode(psi=node.psi - q, layer=node.layer + 1),
            CodebookNode(psi=node.psi + q, layer=node.layer + 1),
        )

    def neighbors(self, node: CodebookNode) -> list[CodebookNode]:
        """Same-layer adjacent sectors (one at the edges of the domain)."""
        w = node.width
        index = int(round((node.psi + math.pi / 2) / w - 0.5))
        out = []
        if index - 1 >= 0:
            out.append(self.node(node.layer, index - 1))
        if index + 1 < 2 ** node.layer:
            out.append(self.node(node.layer, index + 1))
        return out

    def leaves(self) -> list[CodebookNode]:
        return list(self._leaves)

    def beam_vector(self, node: CodebookNode) -> np.ndarray:
        """Codebook beam: steering vector over N(l) elements, zero-padded to N_T."""
        if node.layer > self.max_layer:
            raise PhyError(f"layer {node.layer} exceeds max layer {self.max_layer}")
        active = min(2 ** node.layer, self.num_antennas)
        vec = np.zeros(self.num_antennas, dtype=complex)
        vec[:active] = steering_vector(node.psi, active)
        return vec


# ---------------------------------------------------------------------------
# channel
# ---------------------------------------------------------------------------

@dataclass
class PathSet:
    """Multipath parameters of one vehicle->BS link, frozen for a coherence window.

    Index 0 is the LOS path; within the window only Doppler phases evolve.
    """
    gains: np.ndarray          # complex amplitudes, (P,)
    aod: np.ndarray            # departure steering angles at the vehicle, (P,)
    aoa: np.ndarray            # arrival steering angles at the BS, (P,)
    doppler_hz: np.ndarray     # per-path Doppler shifts, (P,)
    blocked: np.ndarray        # bool, (P,)
    ref_period: int
    ref_position: np.ndarray   # vehicle position at resample time


def realize_channel(state: PathSet, t: int, period_s: float,
                    num_rx: int, num_tx: int) -> np.ndarray:
    """H(t) = sum over unblocked paths of gain * e^{j 2 pi f (t - t_ref) T} a_R a_T^H."""
    keep = ~state.blocked
    if not keep.any():
        return np.zeros((num_rx, num_tx), dtype=complex)
    dt = (t - state.ref_period) * period_s
    phase = np.exp(2j * math.pi * state.doppler_hz[keep] * dt)
    coef = state.gains[keep] * phase
    a_r = np.stack([steering_vector(a, num_rx) for a in state.aoa[keep]])    # (P, N_R)
    a_t = np.stack([steering_vector(a, num_tx) for a in state.aod[keep]])    # (P, N_T)
    # scale by sqrt(N) per side so a rank-1 LOS link realizes the full array gain
    a_r = a_r * math.sqrt(num_rx)
    a_t = a_t * math.sqrt(num_tx)
    return (a_r * coef[:, None]).T @ np.conj(a_t)


def _segment_hits_rect(p0, p1, rect) -> bool:
    """Liang-Barsky clip of segment p0->p1 against an axis-aligned rectangle."""
    x0, y0, x1, y1 = rect
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    t_lo, t_hi = 0.0, 1.0
    for delta, lo, hi, start in ((dx, x0, x1, p0[0]), (dy, y0, y1, p0[1])):
        if abs(delta) < 1e-12:
            if start < lo or start > hi:
                return False
            continue
        ta = (lo - start) / delta
        tb = (hi - start) / delta
        if ta > tb:
            ta, tb = tb, ta
        t_lo = max(t_lo, ta)
        t_hi = min(t_hi, tb)
        if t_lo > t_hi:
            return False
    return True


class ChannelModel:
    """Per-link Rician path sets with distance path loss and rectangle blockage.

    The LOS path carries log-distance path loss anchored at free space for the
    reference distance; NLOS paths split LOS power / K across random angles.
    A link's PathSet is resampled once the vehicle moves farther than the
    coherence displacement from the snapshot position.
    """

    def __init__(self, radio: RadioConfig, area_wh: tuple[float, float],
                 rng: np.random.Generator, period_s: float):
        self.radio = radio
        self.period_s = period_s
        self._rng = rng
        self._states: dict[tuple[int, int], PathSet] = {}
        self.buildings = self._draw_buildings(area_wh, rng)

    def _draw_buildings(self, area_wh, rng) -> list[tuple[float, float, float, float]]:
        w, h = area_wh
        count = int(round(self.radio.blockage_density_per_km2 * (w * h / 1e6)))
        rects = []
        for _ in range(count):
            sx = rng.uniform(self.radio.building_size_min_m, self.radio.building_size_max_m)
            sy = rng.uniform(self.radio.building_size_min_m, self.radio.building_size_max_m)
            cx = rng.uniform(0, w)
            cy = rng.uniform(0, h)
            rects.append((cx - sx / 2, cy - sy / 2, cx + sx / 2, cy + sy / 2))
        return rects

    def los_blocked(self, veh_pos, bs_pos) -> bool:
        return any(_segment_hits_rect(veh_pos, bs_pos, r) for r in self.buildings)

    def path_amplitude(self, dist_m: float) -> float:
        r = self.radio
        fspl_ref = r.wavelength_m / (4.0 * math.pi * r.path_loss_ref_m)
        return fspl_ref * (r.path_loss_ref_m / dist_m) ** (r.path_loss_exponent / 2.0)

    def drop_link(self, key: tuple[int, int]) -> None:
        self._states.pop(key, None)

    def state_for(self, vehicle, bs, t: int) -> PathSet:
        """Current PathSet for the (vehicle, bs) link, resampling when stale."""
        key = (vehicle.id, bs.id)
        state = self._states.get(key)
        if state is not None:
            moved = float(np.linalg.norm(vehicle.position - state.ref_position))
            if moved <= self.radio.coherence_displacement_m:
                return state
        state = self._sample(vehicle, bs, t)
        self._states[key] = state
        return state

    def _sample(self, vehicle, bs, t: int) -> PathSet:
        r = self.radio
        rng = self._rng
        delta = bs.position - vehicle.position
        dist = float(np.linalg.norm(delta))
        if dist <= 0:
            raise PhyError(f"vehicle {vehicle.id} coincides with BS {bs.id}")
        bearing_out = math.atan2(delta[1], delta[0])       # vehicle -> BS
        bearing_back = math.atan2(-delta[1], -delta[0])    # BS -> vehicle
        speed = float(np.linalg.norm(vehicle.velocity))
        heading = math.atan2(vehicle.velocity[1], vehicle.velocity[0]) if speed > 0 else 0.0

        los_amp = self.path_amplitude(dist)
        npaths = 1 + r.nlos_path_count
        gains = np.zeros(npaths, dtype=complex)
        aod = np.zeros(npaths)
        aoa = np.zeros(npaths)
        doppler = np.zeros(npaths)
        blocked = np.zeros(npaths, dtype=bool)

        gains[0] = los_amp * np.exp(1j * rng.uniform(0, 2 * math.pi))
        aod[0] = fold_angle(bearing_out)
        aoa[0] = fold_angle(bearing_back)
        doppler[0] = speed * math.cos(heading - bearing_out) / r.wavelength_m
        blocked[0] = self.los_blocked(vehicle.position, bs.position)

        if r.nlos_path_count > 0:
            per_path = los_amp / math.sqrt(r.rician_k * r.nlos_path_count)
            for p in range(1, npaths):
                scatter_bearing = rng.uniform(-math.pi, math.pi)
                gains[p] = per_path * math.sqrt(0.5) * complex(rng.standard_normal(),
                                                               rng.standard_normal())
                aod[p] = fold_angle(scatter_bearing)
                aoa[p] = fold_angle(rng.uniform(-math.pi, math.pi))
                doppler[p] = speed * math.cos(heading - scatter_bearing) / r.wavelength_m

        return PathSet(gains=gains, aod=aod, aoa=aoa, doppler_hz=doppler,
                       blocked=blocked, ref_period=t,
                       ref_position=vehicle.position.copy())


# ---------------------------------------------------------------------------
# gains, SINR, rate
# ---------------------------------------------------------------------------

def effective_gain(w_r: np.ndarray, channel: np.ndarray, w_t: np.ndarray) -> complex:
    """Beamformed channel gain w_r^H H w_t."""
    if channel.shape != (w_r.shape[0], w_t.shape[0]):
        raise PhyError(f"dimension mismatch: H {channel.shape}, "
                       f"w_r {w_r.shape}, w_t {w_t.shape}")
    return complex(np.conj(w_r) @ channel @ w_t)


def bs_combiner(channel: np.ndarray, w_t: np.ndarray) -> np.ndarray:
    """Matched receive filter H w_t / ||H w_t||; any unit vector if H w_t = 0."""
    s = channel @ w_t
    norm = float(np.linalg.norm(s))
    if norm == 0.0:
        out = np.zeros(channel.shape[0], dtype=complex)
        out[0] = 1.0
        return out
    return s / norm


def rate_from_powers(signal_w: float, interference_w: float, radio: RadioConfig) -> float:
    """Shannon rate W log2(1 + S / (I + N0 W)) in bit/s."""
    noise = radio.noise_density_w_per_hz * radio.bandwidth_hz
    sinr = signal_w / (interference_w + noise)
    return radio.bandwidth_hz * math.log2(1.0 + sinr)


def sinr_and_rate(vehicle_id: int, associations: dict[int, int],
                  tx_beams: dict[int, np.ndarray], combiners: dict[int, np.ndarray],
                  channels: dict[tuple[int, int], np.ndarray],
                  radio: RadioConfig) -> tuple[float, float]:
    """SINR and rate of one vehicle under a full action profile.

    The interference is the coherent sum sqrt(P) w_r^H H_{k,a} w_k over all
    other transmitting vehicles k, evaluated at the serving BS a.
    """
    a = associations[vehicle_id]
    w_r = combiners[vehicle_id]
    own = effective_gain(w_r, channels[(vehicle_id, a)], tx_beams[vehicle_id])
    sqrt_p = math.sqrt(radio.tx_power_w)
    interference = 0.0 + 0.0j
    for k in sorted(associations):
        if k == vehicle_id:
            continue
        interference += sqrt_p * effective_gain(w_r, channels[(k, a)], tx_beams[k])
    signal = radio.tx_power_w * abs(own) ** 2
    noise = radio.noise_density_w_per_hz * radio.bandwidth_hz
    sinr = signal / (abs(interference) ** 2 + noise)
    return sinr, radio.bandwidth_hz * math.log2(1.0 + sinr)


def exhaustive_best_beam(channel: np.ndarray, codebook: Codebook) -> CodebookNode:
    """Best max-layer beam by matched-combiner gain; ties take the smaller angle.

    With the matched combiner the achieved |gain| equals ||H w_t||, so the
    search reduces to the column norms of H @ leaf_matrix.
    """
    best = None
    best_gain = -1.0
    for node in codebook.leaves():
        gain = float(np.linalg.norm(channel @ codebook.beam_vector(node)))
        if gain > best_gain:
            best = node
            best_gain = gain
    return best
