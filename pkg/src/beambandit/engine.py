"""Period loop orchestration: world stepping, channel realization, policy
decisions, SINR/rate accounting, external-regret measurement against a
brute-force best-response oracle, event-triggered sync barrier, and metrics.

Each period runs in phases over read-only snapshots (world mutation, channel
upkeep, decisions, rates, regret, sync barrier), with every per-vehicle loop
in ascending vehicle id, so a (config, seed) pair yields a byte-identical log.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .agent import Decision, KernelUcbBeamAgent, RandomAgent, VehicleView
from .baselines import OraclePolicy, WcsPolicy
from .config import RunConfig
from .kernels import make_kernels
from .phy import (ChannelModel, Codebook, exhaustive_best_beam, fold_angle,
                  realize_channel)
from .rates import (Action, PeriodState, best_leaf_response, explicit_rate,
                    interference_vector, matched_rate, realized_rate)
from .scenario import World, extract_context, load_trace

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["period", "vehicle_id", "policy", "bs_id", "psi_rad", "layer",
               "rate_bps", "regret", "regret1", "regret2", "synced"]


@dataclass
class Outcome:
    full_rate: float
    credited_rate: float
    reward_norm: float
    serving_load: int


@dataclass
class PrevField:
    """Last period's channels and transmit beams, for probe measurements."""
    channels: dict[tuple[int, int], np.ndarray]
    beams: dict[int, np.ndarray]


@dataclass
class RunResult:
    rows: list[dict]
    summary: dict


def _los_angle(ps: PeriodState, vehicle_id: int, bs_id: int) -> float:
    veh = ps.vehicles[vehicle_id]
    bs = ps.bs_by_id(bs_id)
    delta = bs.position - veh.position
    return fold_angle(math.atan2(delta[1], delta[0]))


def compute_regret(ps: PeriodState, actions: dict[int, Action], vehicle_id: int,
                   full_rate: float, credited_rate: float
                   ) -> tuple[float, float, float]:
    """(total, association, beamforming) regret with the others' actions frozen.

    The oracle value is the better of the candidate x leaf enumeration and the
    realized action itself, so dominance (total >= 0) holds exactly even when
    the realized beam sits below the leaf layer or the serving BS has left the
    candidate set.  The beamforming term is total minus the association term.
    """
    action = actions[vehicle_id]
    enum_bs, enum_node, enum_rate = best_leaf_response(ps, actions, vehicle_id)
    if enum_rate >= full_rate:
        bs_star, oracle_rate = enum_bs, enum_rate
    else:
        bs_star, oracle_rate = action.bs_id, full_rate
    r_total = oracle_rate - credited_rate

    if bs_star == action.bs_id:
        carried = full_rate
    else:
        v = interference_vector(ps, actions, vehicle_id, bs_star)
        if action.node is not None:
            # carry the beam across BSs by its offset from the LOS direction
            delta = action.node.psi - _los_angle(ps, vehicle_id, action.bs_id)
            mapped = ps.codebook.snap(
                _los_angle(ps, vehicle_id, bs_star) + delta, action.node.layer)
            carried = matched_rate(ps, vehicle_id, bs_star,
                                   ps.codebook.beam_vector(mapped), v)
        else:
            carried = explicit_rate(ps, vehicle_id, bs_star, action.w_t,
                                    action.w_r, v)
    r1 = carried - credited_rate
    return r_total, r1, r_total - r1


# ---------------------------------------------------------------------------
# policy drivers
# ---------------------------------------------------------------------------

class BanditFleet:
    """Per-vehicle learning agents plus the shared uploaded-sample pool."""

    def __init__(self, config: RunConfig, codebook: Codebook, variant: str):
        self.config = config
        self.codebook = codebook
        self.variant = variant
        n_t = config.radio.num_tx_antennas
        self.assoc_kernel, self.bt_kernel = make_kernels(config.kernel, n_t)
        self.norm_rate = (config.radio.bandwidth_hz
                          * math.log2(1.0 + config.policy.sinr_cap))
        self.agents: dict[int, KernelUcbBeamAgent] = {}
        self.pool: dict[int, object] = {}
        self._next_sample_id = 0
        self._views: dict[int, VehicleView] = {}

    def _make_agent(self, vehicle) -> KernelUcbBeamAgent:
        reset_mode = "layer1" if self.variant == "layer1_restart" else "kernel"
        beam_mode = "exhaustive_csi" if self.variant == "dk_ucb_lite" else "hierarchical"
        return KernelUcbBeamAgent(
            vehicle_id=vehicle.id, arrival_period=vehicle.arrival_period,
            codebook=self.codebook, assoc_kernel=self.assoc_kernel,
            bt_kernel=self.bt_kernel, ucb=self.config.ucb,
            policy=self.config.policy, lambda_k=self.config.kernel.lambda_k,
            association_interval=self.config.scenario.association_interval,
            norm_rate=self.norm_rate, reset_mode=reset_mode, beam_mode=beam_mode)

    def _view(self, ps: PeriodState, prev: PrevField | None, vid) -> VehicleView:
        vehicle = ps.vehicles[vid]
        wavelength = self.config.radio.wavelength_m
        prev_cache: dict[int, np.ndarray] = {}

        def geometry(bs_id: int):
            ctx = extract_context(vehicle, ps.bs_by_id(bs_id), 0, 0.0, wavelength)
            return ctx.angle, ctx.distance, ctx.doppler

        def los_angle(bs_id: int) -> float:
            return _los_angle(ps, vid, bs_id)

        def prev_interference(bs_id: int) -> np.ndarray:
            if bs_id not in prev_cache:
                acc = np.zeros(self.config.radio.num_rx_antennas, dtype=complex)
                if prev is not None:
                    sqrt_p = math.sqrt(self.config.radio.tx_power_w)
                    for k in sorted(prev.beams):
                        if k == vid or (k, bs_id) not in prev.channels:
                            continue
                        acc = acc + sqrt_p * (prev.channels[(k, bs_id)] @ prev.beams[k])
                prev_cache[bs_id] = acc
            return prev_cache[bs_id]

        def probe_rate(bs_id: int, node) -> float:
            return matched_rate(ps, vid, bs_id, self.codebook.beam_vector(node),
                                prev_interference(bs_id))

        def best_csi_node(bs_id: int):
            return exhaustive_best_beam(ps.channels[(vid, bs_id)], self.codebook)

        return VehicleView(t=ps.t, vehicle_id=vid,
                           candidate_ids=ps.candidates[vid],
                           geometry=geometry, los_angle=los_angle,
                           probe_rate=probe_rate, best_csi_node=best_csi_node)

    def decide(self, ps: PeriodState, prev: PrevField | None) -> dict[int, Action]:
        for vid in [v for v in self.agents if v not in ps.vehicles]:
            del self.agents[vid]
        actions: dict[int, Action] = {}
        self._views = {}
        for vid in sorted(ps.vehicles):
            if vid not in self.agents:
                self.agents[vid] = self._make_agent(ps.vehicles[vid])
            view = self._view(ps, prev, vid)
            self._views[vid] = view
            decision = self.agents[vid].decide(view)
            actions[vid] = Action(bs_id=decision.bs_id,
                                  w_t=self.codebook.beam_vector(decision.node),
                                  node=decision.node,
                                  probes=len(decision.probes))
        return actions

    def observe(self, ps: PeriodState, outcomes: dict[int, Outcome]
                ) -> dict[int, bool]:
        include_probes = self.config.policy.include_probe_samples
        for vid in sorted(outcomes):
            agent = self.agents[vid]
            out = outcomes[vid]
            sid = self._next_sample_id
            self._next_sample_id += 1
            probe_ids: tuple[int, ...] = ()
            if include_probes:
                count = len(agent._pending_probes)
                probe_ids = tuple(range(self._next_sample_id,
                                        self._next_sample_id + count))
                self._next_sample_id += count
            agent.record(self._views[vid], sid, out.reward_norm, out.full_rate,
                         out.serving_load, probe_ids)
        # sync barrier, ascending vehicle id; later vehicles see earlier uploads
        loads = _loads_from(outcomes, self.agents)
        pool_by_bs: dict[int, list] = {}
        for s in self.pool.values():
            pool_by_bs.setdefault(s.bs_id, []).append(s)
        flags = {}
        for vid in sorted(outcomes):
            upload = self.agents[vid].maybe_sync(ps.t, pool_by_bs, loads)
            if upload is None:
                continue
            flags[vid] = True
            for s in upload:
                if s.sample_id not in self.pool:
                    self.pool[s.sample_id] = s
                    pool_by_bs.setdefault(s.bs_id, []).append(s)
        return flags


def _loads_from(outcomes, agents) -> dict[int, int]:
    loads: dict[int, int] = {}
    for vid in outcomes:
        bs = agents[vid].serving
        loads[bs] = loads.get(bs, 0) + 1
    return loads


class RandomFleet:
    """Uniform association each interval, uniform leaf each period."""

    def __init__(self, config: RunConfig, codebook: Codebook,
                 rng: np.random.Generator):
        self.config = config
        self.codebook = codebook
        self.rng = rng
        self.agents: dict[int, RandomAgent] = {}

    def decide(self, ps: PeriodState, prev: PrevField | None) -> dict[int, Action]:
        for vid in [v for v in self.agents if v not in ps.vehicles]:
            del self.agents[vid]
        actions = {}
        for vid in sorted(ps.vehicles):
            if vid not in self.agents:
                self.agents[vid] = RandomAgent(
                    vid, ps.vehicles[vid].arrival_period, self.codebook,
                    self.config.scenario.association_interval, self.rng)
            view = VehicleView(t=ps.t, vehicle_id=vid,
                               candidate_ids=ps.candidates[vid],
                               geometry=None, los_angle=None, probe_rate=None)
            decision = self.agents[vid].decide(view)
            actions[vid] = Action(decision.bs_id,
                                  self.codebook.beam_vector(decision.node),
                                  decision.node)
        return actions

    def observe(self, ps, outcomes) -> dict[int, bool]:
        return {}


def build_policy(config: RunConfig, codebook: Codebook,
                 policy_rng: np.random.Generator):
    name = config.policy.name
    if name in ("bkc_ucb", "dk_ucb_lite", "layer1_restart"):
        return BanditFleet(config, codebook, name)
    if name == "oracle_csi":
        return OraclePolicy(codebook, config.engine.best_response_max_sweeps)
    if name == "wcs":
        return WcsPolicy(codebook, config.scenario.association_interval)
    if name == "random":
        return RandomFleet(config, codebook, policy_rng)
    raise ValueError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# the run loop
# ---------------------------------------------------------------------------

def run(config: RunConfig, seed: int) -> RunResult:
    config.validate()
    scen, radio = config.scenario, config.radio
    master = np.random.default_rng(seed)
    world_rng, channel_rng, policy_rng = master.spawn(3)

    trace = load_trace(scen.trace_path) if scen.trace_path else None
    world = World(scen, world_rng, bs_antennas=radio.num_rx_antennas,
                  vehicle_antennas=radio.num_tx_antennas, trace=trace)
    channel = ChannelModel(radio, (scen.area_width_m, scen.area_height_m),
                           channel_rng, scen.period_duration_s)
    codebook = Codebook(radio.num_tx_antennas)
    policy = build_policy(config, codebook, policy_rng)
    norm_rate = radio.bandwidth_hz * math.log2(1.0 + config.policy.sinr_cap)

    rows: list[dict] = []
    ert_curve: list[float] = []
    cum_regret_norm = 0.0
    sync_period_count = 0
    window_sums = [[0.0, 0] for _ in config.engine.rate_windows]
    prev: PrevField | None = None
    prev_active: set[int] = set()

    for t in range(1, scen.horizon_periods + 1):
        world.step()
        active = world.active_ids()
        for vid in prev_active - set(active):
            for bs in world.base_stations:
                channel.drop_link((vid, bs.id))
        channels = {}
        for vid in active:
            veh = world.vehicles[vid]
            for bs in world.base_stations:
                state = channel.state_for(veh, bs, t)
                channels[(vid, bs.id)] = realize_channel(
                    state, t, scen.period_duration_s,
                    radio.num_rx_antennas, radio.num_tx_antennas)
        candidates = {vid: world.candidates(world.vehicles[vid]) for vid in active}
        ps = PeriodState(t=t, vehicles=dict(world.vehicles),
                         base_stations=world.base_stations, channels=channels,
                         candidates=candidates, codebook=codebook, radio=radio)

        actions = policy.decide(ps, prev)
        loads: dict[int, int] = {}
        for vid in active:
            loads[actions[vid].bs_id] = loads.get(actions[vid].bs_id, 0) + 1

        outcomes: dict[int, Outcome] = {}
        for vid in sorted(active):
            full = realized_rate(ps, actions, vid)
            frac = config.policy.probe_overhead if actions[vid].probes else 0.0
            credited = full * (1.0 - frac)
            reward = min(max(credited / norm_rate, 0.0), 1.0)
            outcomes[vid] = Outcome(full, credited, reward,
                                    loads[actions[vid].bs_id])

        regrets = {vid: compute_regret(ps, actions, vid,
                                       outcomes[vid].full_rate,
                                       outcomes[vid].credited_rate)
                   for vid in sorted(active)}
        sync_flags = policy.observe(ps, outcomes)
        if sync_flags:
            sync_period_count += 1

        for vid in sorted(active):
            action = actions[vid]
            r, r1, r2 = regrets[vid]
            rows.append({
                "period": t, "vehicle_id": vid, "policy": config.policy.name,
                "bs_id": action.bs_id,
                "psi_rad": action.node.psi if action.node else float("nan"),
                "layer": action.node.layer if action.node else 0,
                "rate_bps": outcomes[vid].credited_rate,
                "regret": r, "regret1": r1, "regret2": r2,
                "synced": int(bool(sync_flags.get(vid, False))),
            })
        if active:
            mean_regret_norm = sum(regrets[v][0] for v in active) / (
                len(active) * norm_rate)
            mean_rate = sum(outcomes[v].credited_rate for v in active) / len(active)
        else:
            mean_regret_norm = 0.0
            mean_rate = 0.0
        cum_regret_norm += mean_regret_norm
        ert_curve.append(cum_regret_norm / t)
        for w, (lo, hi) in zip(window_sums, config.engine.rate_windows):
            if lo <= t <= hi and active:
                w[0] += mean_rate
                w[1] += 1

        prev = PrevField(channels=channels,
                         beams={vid: actions[vid].w_t for vid in active})
        prev_active = set(active)

    summary = {
        "config_digest": config.digest(),
        "seed": seed,
        "policy": config.policy.name,
        "total_periods": scen.horizon_periods,
        "ert_curve": ert_curve,
        "avg_rate_windows": [
            {"start": lo, "end": hi,
             "mean_rate_bps": (w[0] / w[1] if w[1] else 0.0)}
            for w, (lo, hi) in zip(window_sums, config.engine.rate_windows)],
        "sync_rate": (sync_period_count / scen.horizon_periods
                      if scen.horizon_periods else 0.0),
        "dropped_arrivals": world.dropped_arrivals,
    }
    return RunResult(rows=rows, summary=summary)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def format_log_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                         for c in LOG_COLUMNS])
    return buf.getvalue()


def persist(rows: list[dict], summary: dict, out_dir: str, stem: str) -> list[str]:
    """Write {stem}_log.csv and {stem}_summary.json; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    try:
        log_path = os.path.join(out_dir, f"{stem}_log.csv")
        with open(log_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_log_csv(rows))
        paths.append(log_path)
        summary_path = os.path.join(out_dir, f"{stem}_summary.json")
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=1)
            fh.write("\n")
        paths.append(summary_path)
    except OSError as exc:
        raise OSError(f"failed writing results under {out_dir}: {exc}") from exc
    return paths
