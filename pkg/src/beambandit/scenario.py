"""World state: BS layout, vehicle arrivals/mobility/departures, context features.

Synthetic mobility is straight-line constant velocity: vehicles enter at a
uniform point on the area boundary with an inward heading, and are removed
once they leave the area.  A mobility trace file can replace the synthetic
model entirely (see load_trace).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .phy import wrap_angle


class ScenarioError(ValueError):
    pass


class TraceError(ValueError):
    """Malformed or inconsistent mobility trace."""


@dataclass
class BaseStation:
    id: int
    position: np.ndarray
    antenna_count: int


@dataclass
class Vehicle:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    antenna_count: int
    arrival_period: int


@dataclass(frozen=True)
class Context:
    """Bandit context: (BS id, bearing, distance, Doppler, load, beam bias)."""
    bs_id: int
    angle: float        # rad in [-pi, pi), BS -> vehicle bearing from +x axis
    distance: float     # m, > 0
    doppler: float      # Hz, >= 0, from the tangential velocity component
    load: int           # concurrent transmissions at the BS
    beam_bias: float    # rad, steering angle minus geometric LOS angle

    def as_array(self) -> np.ndarray:
        return np.array([self.bs_id, self.angle, self.distance,
                         self.doppler, self.load, self.beam_bias])


def extract_context(vehicle: Vehicle, bs: BaseStation, load: int,
                    beam_bias: float, wavelength_m: float) -> Context:
    """Geometry-derived context features for one (vehicle, BS) pair."""
    delta = vehicle.position - bs.position
    dist = float(np.linalg.norm(delta))
    if dist <= 0.0:
        raise ScenarioError(
            f"vehicle {vehicle.id} coincides with BS {bs.id}: degenerate geometry")
    angle = wrap_angle(math.atan2(delta[1], delta[0]))
    # tangential speed = |v x u| with u the unit BS->vehicle direction
    ux, uy = delta[0] / dist, delta[1] / dist
    tangential = abs(vehicle.velocity[0] * uy - vehicle.velocity[1] * ux)
    return Context(bs_id=bs.id, angle=angle, distance=dist,
                   doppler=tangential / wavelength_m, load=load,
                   beam_bias=beam_bias)


def candidate_set(vehicle: Vehicle, bs_list: list[BaseStation],
                  radius_m: float) -> list[int]:
    """BS ids within the candidate radius, ascending; nearest BS if none qualify."""
    if not bs_list:
        raise ScenarioError("no base stations configured")
    dists = [(float(np.linalg.norm(vehicle.position - bs.position)), bs.id)
             for bs in bs_list]
    inside = sorted(bs_id for d, bs_id in dists if d <= radius_m)
    if inside:
        return inside
    return [min(dists)[1]]


# ---------------------------------------------------------------------------
# mobility traces
# ---------------------------------------------------------------------------

TRACE_HEADER = ["period", "vehicle_id", "x_m", "y_m", "vx_mps", "vy_mps"]


def load_trace(path: str) -> dict[int, dict[int, tuple[np.ndarray, np.ndarray]]]:
    """Parse a trace file into {period: {vehicle_id: (position, velocity)}}.

    Format: UTF-8 CSV with header ``period,vehicle_id,x_m,y_m,vx_mps,vy_mps``;
    periods must be ascending per vehicle.
    """
    timeline: dict[int, dict[int, tuple[np.ndarray, np.ndarray]]] = {}
    last_period: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            return {}
        cols = [c.strip() for c in header.strip().split(",")]
        if cols != TRACE_HEADER:
            raise TraceError(f"{path}:1: expected header {','.join(TRACE_HEADER)}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(TRACE_HEADER):
                raise TraceError(
                    f"{path}:{lineno}: expected {len(TRACE_HEADER)} fields, got {len(parts)}")
            try:
                period = int(parts[0])
                vid = int(parts[1])
                x, y, vx, vy = (float(v) for v in parts[2:])
            except ValueError as exc:
                raise TraceError(f"{path}:{lineno}: {exc}") from exc
            if vid in last_period and period <= last_period[vid]:
                raise TraceError(
                    f"{path}:{lineno}: period {period} not ascending for vehicle {vid}")
            last_period[vid] = period
            timeline.setdefault(period, {})[vid] = (
                np.array([x, y], dtype=float), np.array([vx, vy], dtype=float))
    return timeline


# ---------------------------------------------------------------------------
# world
# ---------------------------------------------------------------------------

def place_base_stations(cfg: ScenarioConfig, antenna_count: int) -> list[BaseStation]:
    """BS layout from explicit positions or a seeded uniform draw with margin."""
    if cfg.bs_positions is not None:
        return [BaseStation(id=i, position=np.array(p, dtype=float),
                            antenna_count=antenna_count)
                for i, p in enumerate(cfg.bs_positions)]
    rng = np.random.default_rng(cfg.bs_placement_seed)
    m = min(cfg.bs_margin_m, cfg.area_width_m / 4, cfg.area_height_m / 4)
    out = []
    for i in range(cfg.num_bs):
        pos = np.array([rng.uniform(m, cfg.area_width_m - m),
                        rng.uniform(m, cfg.area_height_m - m)])
        out.append(BaseStation(id=i, position=pos, antenna_count=antenna_count))
    return out


class World:
    """Discrete-time world: one step() per period, single-writer mutation."""

    def __init__(self, cfg: ScenarioConfig, rng: np.random.Generator,
                 bs_antennas: int, vehicle_antennas: int,
                 trace: dict | None = None):
        self.cfg = cfg
        self.rng = rng
        self.vehicle_antennas = vehicle_antennas
        self.base_stations = place_base_stations(cfg, bs_antennas)
        self.vehicles: dict[int, Vehicle] = {}
        self.t = 0
        self.dropped_arrivals = 0
        self._next_id = 0
        self._trace = trace
        if trace is None:
            for _ in range(cfg.initial_vehicles):
                self._spawn_interior()

    # -- synthetic mobility ------------------------------------------------

    def _spawn_interior(self) -> None:
        pos = np.array([self.rng.uniform(0, self.cfg.area_width_m),
                        self.rng.uniform(0, self.cfg.area_height_m)])
        heading = self.rng.uniform(-math.pi, math.pi)
        speed = self.rng.uniform(self.cfg.speed_min_mps, self.cfg.speed_max_mps)
        self._add_vehicle(pos, speed * np.array([math.cos(heading), math.sin(heading)]))

    def _spawn_boundary(self) -> None:
        w, h = self.cfg.area_width_m, self.cfg.area_height_m
        u = self.rng.uniform(0, 2 * (w + h))
        if u < w:
            pos, normal = np.array([u, 0.0]), math.pi / 2
        elif u < w + h:
            pos, normal = np.array([w, u - w]), math.pi
        elif u < 2 * w + h:
            pos, normal = np.array([u - w - h, h]), -math.pi / 2
        else:
            pos, normal = np.array([0.0, u - 2 * w - h]), 0.0
        # inward heading, kept off the tangent to bound dwell times
        heading = normal + self.rng.uniform(-math.pi / 2 + 0.035, math.pi / 2 - 0.035)
        speed = self.rng.uniform(self.cfg.speed_min_mps, self.cfg.speed_max_mps)
        self._add_vehicle(pos, speed * np.array([math.cos(heading), math.sin(heading)]))

    def _add_vehicle(self, pos: np.ndarray, vel: np.ndarray) -> None:
        if len(self.vehicles) >= self.cfg.max_vehicles:
            self.dropped_arrivals += 1
            return
        vid = self._next_id
        self._next_id += 1
        self.vehicles[vid] = Vehicle(id=vid, position=pos, velocity=vel,
                                     antenna_count=self.vehicle_antennas,
                                     arrival_period=self.t)

    def _inside(self, pos: np.ndarray) -> bool:
        return (0.0 <= pos[0] <= self.cfg.area_width_m
                and 0.0 <= pos[1] <= self.cfg.area_height_m)

    def step(self) -> None:
        """Advance one period: move, remove departures, then draw arrivals."""
        self.t += 1
        if self._trace is not None:
            self._step_trace()
            return
        dt = self.cfg.period_duration_s
        departed = []
        for vid, veh in self.vehicles.items():
            veh.position = veh.position + veh.velocity * dt
            if not self._inside(veh.position):
                departed.append(vid)
        for vid in departed:
            del self.vehicles[vid]
        arrivals = self.rng.poisson(self.cfg.arrival_rate_per_s * dt)
        for _ in range(arrivals):
            self._spawn_boundary()

    def _step_trace(self) -> None:
        rows = self._trace.get(self.t, {})
        for vid in [v for v in self.vehicles if v not in rows]:
            del self.vehicles[vid]
        for vid in sorted(rows):
            pos, vel = rows[vid]
            if vid in self.vehicles:
                veh = self.vehicles[vid]
                veh.position = pos.copy()
                veh.velocity = vel.copy()
            else:
                self.vehicles[vid] = Vehicle(
                    id=vid, position=pos.copy(), velocity=vel.copy(),
                    antenna_count=self.vehicle_antennas, arrival_period=self.t)

    # -- read-only helpers ---------------------------------------------------

    def active_ids(self) -> list[int]:
        return sorted(self.vehicles)

    def candidates(self, vehicle: Vehicle) -> list[int]:
        return candidate_set(vehicle, self.base_stations, self.cfg.candidate_radius_m)
