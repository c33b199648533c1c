"""Command-line front end: config parsing, scenario presets, seed batches.

Outputs per (variant, seed): a per-period CSV log and a JSON summary, plus a
per-variant aggregate JSON (mean and standard error per metric) and a run
manifest naming every emitted file.  Exit codes: 0 success, 1 validation
error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .config import ConfigError, RunConfig, load_config
from .engine import persist, run

DESK_SEEDS = [1, 2, 3, 4, 5, 6, 7, 8]

_DESK_BASE = {
    "scenario": {
        "area_width_m": 600.0, "area_height_m": 600.0,
        "arrival_rate_per_s": 0.1, "horizon_periods": 2000,
        "period_duration_s": 0.01, "association_interval": 100,
        "candidate_radius_m": 400.0, "num_bs": 5, "bs_placement_seed": 7,
        "speed_min_mps": 8.0, "speed_max_mps": 14.0,
        "initial_vehicles": 4, "max_vehicles": 10,
    },
    "radio": {
        "tx_power_w": 1.0, "bandwidth_hz": 100e6,
        "num_tx_antennas": 16, "num_rx_antennas": 8,
    },
    "policy": {"name": "bkc_ucb", "capacity": 128},
    "engine": {"rate_windows": [[1, 500], [1500, 2000]]},
    "seeds": DESK_SEEDS,
}


def _merge(base: dict, overrides: dict) -> dict:
    out = json.loads(json.dumps(base))
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


class Preset:
    def __init__(self, name: str, description: str, base: dict,
                 sweep: list[tuple[str, dict]]):
        self.name = name
        self.description = description
        self.base = base
        self.sweep = sweep

    def variants(self) -> list[tuple[str, RunConfig]]:
        out = []
        for label, overrides in self.sweep:
            cfg = RunConfig.from_dict(_merge(self.base, overrides))
            cfg.preset = self.name
            out.append((label, cfg))
        return out


PRESETS: dict[str, Preset] = {}


def _register(preset: Preset) -> None:
    PRESETS[preset.name] = preset


_register(Preset(
    "fig_ert",
    "Per-period normalized regret decay of the learning policy at two bandwidths",
    _merge(_DESK_BASE, {"policy": {"name": "bkc_ucb"}}),
    [("bw50", {"radio": {"bandwidth_hz": 50e6}}),
     ("bw100", {"radio": {"bandwidth_hz": 100e6}})],
))

_register(Preset(
    "fig_sync_tradeoff",
    "Average rate and sync rate against transmit power for sync thresholds 30 and 90",
    _merge(_DESK_BASE, {"policy": {"name": "bkc_ucb"}}),
    [(f"p{dbm}dbm_L{lvl}",
      {"radio": {"tx_power_w": 10.0 ** (dbm / 10.0) / 1000.0},
       "ucb": {"sync_threshold": float(lvl)}})
     for dbm in (20, 25, 30) for lvl in (30, 90)],
))

_register(Preset(
    "fig_policy_compare",
    "Average converged rate of every policy on paired worlds",
    _DESK_BASE,
    [(name, {"policy": {"name": name}})
     for name in ("oracle_csi", "wcs", "dk_ucb_lite", "bkc_ucb",
                  "layer1_restart", "random")],
))

_register(Preset(
    "desk_smoke",
    "Small fast run for checks and demos",
    _merge(_DESK_BASE, {
        "scenario": {"horizon_periods": 250, "association_interval": 50,
                     "initial_vehicles": 3, "max_vehicles": 6},
        "engine": {"rate_windows": [[100, 250]]},
        "seeds": [1, 2],
    }),
    [("smoke", {})],
))


def list_presets() -> list[tuple[str, str]]:
    return [(p.name, p.description) for p in PRESETS.values()]


# ---------------------------------------------------------------------------
# batch execution
# ---------------------------------------------------------------------------

def _mean_se(values: list[float]) -> dict:
    n = len(values)
    mean = sum(values) / n
    if n > 1:
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        se = math.sqrt(var / n)
    else:
        se = 0.0
    return {"mean": mean, "se": se}


def run_batch(config: RunConfig, out_dir: str, label: str = "run") -> dict:
    """Run every seed of one config; write logs, summaries, and an aggregate.

    A failing seed aborts the batch: the aggregate is still written, flagged
    partial, and the error is re-raised.
    """
    config.validate()
    target = os.path.join(out_dir, label)
    summaries = []
    files: list[str] = []
    failure = None
    for seed in config.seeds:
        try:
            result = run(config, seed)
        except Exception as exc:   # noqa: BLE001 - flagged and re-raised
            failure = f"seed {seed}: {exc}"
            break
        summaries.append(result.summary)
        if config.output.write_logs or config.output.write_summaries:
            files.extend(persist(result.rows, result.summary, target,
                                 f"seed{seed}"))
    aggregate = {
        "label": label,
        "preset": config.preset,
        "policy": config.policy.name,
        "config_digest": config.digest(),
        "config": config.to_dict(),
        "seeds": config.seeds[:len(summaries)],
        "partial": failure is not None,
    }
    if failure:
        aggregate["error"] = failure
    if summaries:
        aggregate["sync_rate"] = _mean_se([s["sync_rate"] for s in summaries])
        aggregate["ert_final"] = _mean_se([s["ert_curve"][-1] if s["ert_curve"]
                                           else 0.0 for s in summaries])
        windows = []
        for idx, w in enumerate(summaries[0]["avg_rate_windows"]):
            vals = [s["avg_rate_windows"][idx]["mean_rate_bps"] for s in summaries]
            windows.append({"start": w["start"], "end": w["end"],
                            **_mean_se(vals)})
        aggregate["avg_rate_windows"] = windows
        curves = [s["ert_curve"] for s in summaries]
        if curves and curves[0]:
            aggregate["ert_curve_mean"] = [
                sum(c[i] for c in curves) / len(curves)
                for i in range(len(curves[0]))]
    os.makedirs(target, exist_ok=True)
    agg_path = os.path.join(target, "aggregate.json")
    aggregate["manifest"] = [os.path.relpath(p, out_dir) for p in files] + [
        os.path.relpath(agg_path, out_dir)]
    with open(agg_path, "w", encoding="utf-8") as fh:
        json.dump(aggregate, fh, indent=1)
        fh.write("\n")
    if failure:
        raise RuntimeError(failure)
    return aggregate


def run_variants(variants: list[tuple[str, RunConfig]], out_dir: str) -> list[dict]:
    aggregates = []
    for label, cfg in variants:
        aggregates.append(run_batch(cfg, out_dir, label))
    manifest = {
        "labels": [a["label"] for a in aggregates],
        "files": sorted(f for a in aggregates for f in a["manifest"])
        + ["run_manifest.json"],
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return aggregates


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parse_set_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beambandit",
        description="Kernelized-bandit user association and beam tracking simulator")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--preset", help="named preset (see --list-presets)")
    parser.add_argument("--list-presets", action="store_true",
                        help="print preset names and descriptions")
    parser.add_argument("--seed", help="comma-separated seed list, e.g. 1,2,3")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--policy", help="policy name override")
    parser.add_argument("--periods", type=int, help="horizon override")
    parser.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                        help="dotted config override, e.g. kernel.lambda_k=2.0")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.list_presets:
        for name, desc in list_presets():
            print(f"{name}: {desc}")
        return 0
    try:
        if args.preset:
            if args.preset not in PRESETS:
                raise ConfigError(
                    f"preset: unknown preset {args.preset!r}; "
                    f"available: {', '.join(PRESETS)}")
            variants = PRESETS[args.preset].variants()
        elif args.config:
            variants = [("run", load_config(args.config))]
        else:
            variants = [("run", RunConfig())]
        for _, cfg in variants:
            if args.policy:
                cfg.apply_override("policy.name", args.policy)
            if args.periods is not None:
                cfg.apply_override("scenario.horizon_periods", args.periods)
            if args.seed:
                cfg.seeds = [int(s) for s in args.seed.split(",")]
            for item in args.set:
                if "=" not in item:
                    raise ConfigError(f"--set {item!r}: expected PATH=VALUE")
                path, _, raw = item.partition("=")
                cfg.apply_override(path.strip(), _parse_set_value(raw.strip()))
            if args.out:
                cfg.output.out_dir = args.out
            cfg.validate()
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    out_dir = args.out or variants[0][1].output.out_dir
    try:
        aggregates = run_variants(variants, out_dir)
    except Exception as exc:   # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    for agg in aggregates:
        line = f"{agg['label']}: policy={agg['policy']} seeds={len(agg['seeds'])}"
        if "ert_final" in agg:
            line += f" ert_final={agg['ert_final']['mean']:.5f}"
        if "sync_rate" in agg:
            line += f" sync_rate={agg['sync_rate']['mean']:.3f}"
        print(line)
    print(f"results written under {out_dir}")
    return 0


def entry() -> None:
    raise SystemExit(main())
