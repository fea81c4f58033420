"""Frame-level simulator of one saturated 802.11a link under an RA-TPC controller.

A transmitter always has a full-size frame queued.  The receiver starts far
away and walks towards it at constant speed; the SNR of every attempt follows
from the current distance.  Time advances in whole microseconds (all DCF
durations are integral), so idle + transmit + receive time equals the
elapsed time exactly.
"""

from __future__ import annotations

import csv
import json
import math
import random
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .algorithms import Controller, Decision, TxFeedback, make_controller
from .dcf import TxSetup, backoff_mean, success_probabilities, wait_time
from .energy import DeviceProfile, builtin_profiles, dbm_to_mw, load_profiles
from .phy import (
    TIMING,
    ChannelModel,
    PhyMode,
    ack_mode_for,
    airtime_ack,
    airtime_data,
    mode_table,
    path_loss,
)
from .dcf import attempt_success_prob

__all__ = [
    "ScenarioConfig",
    "RunTrace",
    "RunStats",
    "ConfigError",
    "default_start_distance",
    "run_scenario",
    "conservativeness_index",
    "summarize_runs",
    "load_config",
    "write_trace_csv",
    "write_stats_csv",
    "STATS_COLUMNS",
]

MAX_RATE = 54.0
STATS_COLUMNS = (
    "algorithm",
    "seed",
    "device",
    "goodput_mbps",
    "energy_j",
    "efficiency_bpj",
    "mcs_hat",
    "txp_hat",
    "ci",
)


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    algorithm: str = "rrpaa"
    params: dict = field(default_factory=dict)  # controller constants
    speed: float = 1.0  # m/s
    start_distance: float | None = None  # m; None picks the mode-1 range limit
    end_distance: float = 1.0
    channel: ChannelModel = field(default_factory=ChannelModel)
    l: int = 1500
    n_max: int = 7
    seed: int = 1
    txp_min: int = 0
    txp_max: int = 17
    shadowing_sigma: float = 0.0  # dB, log-normal, redrawn per frame
    max_frames: int | None = None  # stop after this many frames (stationary runs)
    profiles: list[DeviceProfile] = field(default_factory=builtin_profiles)

    def validate(self) -> None:
        if self.l < 1 or self.n_max < 1:
            raise ConfigError("payload and retry limit must be positive")
        if self.txp_min > self.txp_max:
            raise ConfigError("txp_min above txp_max")
        if self.max_frames is None:
            if not self.speed > 0:
                raise ConfigError("speed must be positive")
            start = self.resolved_start()
            if not start > self.end_distance >= 1.0:
                raise ConfigError("need start distance > end distance >= 1 m")
        elif self.max_frames < 1:
            raise ConfigError("max_frames must be positive")
        if self.shadowing_sigma < 0:
            raise ConfigError("shadowing sigma must be non-negative")
        if not self.profiles:
            raise ConfigError("no device profiles")

    def resolved_start(self) -> float:
        if self.start_distance is not None:
            return float(self.start_distance)
        return default_start_distance(self.channel, self.txp_max, self.l, self.n_max)


def default_start_distance(
    channel: ChannelModel, txp: float = 17, l: int = 1500, n_max: int = 7, target: float = 0.9
) -> float:
    """Farthest distance at which the lowest mode at `txp` delivers with probability >= target."""
    low = mode_table()[0]

    def ok(d: float) -> bool:
        snr = txp - path_loss(channel.at(d)) - channel.noise_floor
        return success_probabilities(TxSetup.constant(l, low, snr, n_max))[0] >= target

    lo, hi = 1.0, 2.0
    if not ok(lo):
        raise ConfigError("lowest mode cannot reach even at 1 m")
    while ok(hi):
        lo, hi = hi, hi * 2
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


@dataclass
class RunTrace:
    steps: list[tuple[float, float, int]]  # (t_s, mode_mbps, txp_dbm) step function
    elapsed_us: int
    frames_generated: int
    frames_delivered: int
    attempts: int
    tx_us: int
    rx_us: int
    idle_us: int
    tx_by_config: dict  # (rate, txp) -> us
    rx_by_rate: dict  # ack rate -> us

    @property
    def elapsed_s(self) -> float:
        return self.elapsed_us * 1e-6


@dataclass
class RunStats:
    algorithm: str
    seed: int
    goodput: float  # Mbps
    energy: dict  # device -> J
    efficiency: dict  # device -> bits/J
    mcs_hat: float
    txp_hat: float
    ci: float


def _rng_streams(seed: int) -> tuple[random.Random, random.Random, random.Random, random.Random]:
    states = np.random.SeedSequence(seed).spawn(4)
    return tuple(random.Random(int(s.generate_state(1, np.uint64)[0])) for s in states)


def run_scenario(config: ScenarioConfig, controller: Controller | None = None) -> tuple[RunTrace, RunStats]:
    """Simulate one run and account goodput, energy and conservativeness."""
    config.validate()
    rng_backoff, rng_loss, rng_ctrl, rng_shadow = _rng_streams(config.seed)
    ctrl = controller or make_controller(
        config.algorithm,
        rng=rng_ctrl,
        txp_min=config.txp_min,
        txp_max=config.txp_max,
        n_max=config.n_max,
        l=config.l,
        **config.params,
    )
    chan = config.channel
    l, n_max = config.l, config.n_max
    slot = int(TIMING.slot)
    sifs, difs = int(TIMING.t_sifs), int(TIMING.t_difs)
    wait = int(wait_time())
    cws = [int(round(2 * backoff_mean(i) / TIMING.slot)) for i in range(1, n_max + 1)]
    t_data = {m: int(airtime_data(l, m)) for m in mode_table()}
    t_ack = {m: int(airtime_ack(ack_mode_for(m))) for m in mode_table()}

    stationary = config.max_frames is not None
    d0 = chan.distance if stationary else config.resolved_start()
    speed = 0.0 if stationary else config.speed
    end = config.end_distance
    base_offset = chan.noise_floor  # snr = txp - loss - noise

    p_cache: dict = {}

    def p_success(mode: PhyMode, snr: float) -> float:
        key = (mode.index, round(snr, 3))
        p = p_cache.get(key)
        if p is None:
            p = attempt_success_prob(l, mode, key[1])
            p_cache[key] = p
        return p

    loss_cache: dict = {}

    def loss_at(d: float) -> float:
        key = round(d, 4)
        v = loss_cache.get(key)
        if v is None:
            v = path_loss(chan.at(key))
            loss_cache[key] = v
        return v

    t = 0
    idle = tx = rx = 0
    generated = delivered = attempts = 0
    tx_by = defaultdict(int)
    rx_by = defaultdict(int)
    dec: Decision = ctrl.decision
    steps = [(0.0, float(dec.mode.rate), dec.txp_dbm)]

    def done() -> bool:
        if stationary:
            return generated >= config.max_frames
        return d0 - speed * t * 1e-6 <= end

    while not done():
        generated += 1
        shadow = rng_shadow.gauss(0.0, config.shadowing_sigma) if config.shadowing_sigma else 0.0
        for attempt in range(1, n_max + 1):
            b = rng_backoff.randint(0, cws[attempt - 1]) * slot
            idle += b
            t += b
            mode, txp = dec.mode, dec.txp_dbm
            d = max(d0 - speed * t * 1e-6, 1.0)
            snr = txp - loss_at(d) - base_offset + shadow
            td = t_data[mode]
            tx += td
            tx_by[(mode.rate, txp)] += td
            t += td
            attempts += 1
            ok = rng_loss.random() < p_success(mode, snr)
            if ok:
                ta = t_ack[mode]
                idle += sifs + difs
                rx += ta
                rx_by[ack_mode_for(mode).rate] += ta
                t += sifs + ta + difs
                delivered += 1
            else:
                idle += wait
                t += wait
            new = ctrl.step(TxFeedback(ok, dec, t * 1e-6, attempt))
            if new != dec:
                steps.append((t * 1e-6, float(new.mode.rate), new.txp_dbm))
                dec = new
            if ok:
                break

    trace = RunTrace(
        steps=steps,
        elapsed_us=t,
        frames_generated=generated,
        frames_delivered=delivered,
        attempts=attempts,
        tx_us=tx,
        rx_us=rx,
        idle_us=idle,
        tx_by_config=dict(tx_by),
        rx_by_rate=dict(rx_by),
    )
    return trace, _stats(config, trace)


def trace_energy(trace: RunTrace, profile: DeviceProfile) -> float:
    """Energy in J: idle time at rho_id, airtime at the state's slope, plus the
    generation cross-factor for every frame handed to the MAC."""
    e = profile.rho_id * trace.idle_us
    for (rate, txp), us in trace.tx_by_config.items():
        e += profile.rho_tx(rate, dbm_to_mw(txp)) * us
    for rate, us in trace.rx_by_rate.items():
        e += profile.rho_rx(rate) * us
    return e * 1e-6 + profile.gamma_xg * trace.frames_generated


def _stats(config: ScenarioConfig, trace: RunTrace) -> RunStats:
    bits = trace.frames_delivered * config.l * 8
    energy = {p.name: trace_energy(trace, p) for p in config.profiles}
    eff = {k: bits / v for k, v in energy.items()}
    mcs_hat, txp_hat, ci = conservativeness_index(trace, txp_max=config.txp_max)
    return RunStats(
        algorithm=config.algorithm,
        seed=config.seed,
        goodput=bits / trace.elapsed_us,
        energy=energy,
        efficiency=eff,
        mcs_hat=mcs_hat,
        txp_hat=txp_hat,
        ci=ci,
    )


def conservativeness_index(
    trace: RunTrace | Sequence[tuple[float, float, float]],
    t_sim: float | None = None,
    max_mcs: float = MAX_RATE,
    txp_max: float = 17.0,
) -> tuple[float, float, float]:
    """(normalised mean MCS, normalised mean TXP in dBm, CI) of a decision step function."""
    if isinstance(trace, RunTrace):
        steps, t_sim = trace.steps, trace.elapsed_s
    else:
        steps = list(trace)
    if not steps or t_sim is None or not t_sim > 0:
        raise ValueError("conservativeness index needs a trace of positive duration")
    mcs_area = txp_area = 0.0
    for (t0, mcs, txp), nxt in zip(steps, list(steps[1:]) + [(t_sim, None, None)]):
        dt = nxt[0] - t0
        mcs_area += mcs * dt
        txp_area += txp * dt
    mcs_hat = mcs_area / (max_mcs * t_sim)
    txp_hat = txp_area / (txp_max * t_sim)
    prod = mcs_hat * txp_hat
    return mcs_hat, txp_hat, (1.0 / prod if prod > 0 else math.inf)


def _iqr(values: Sequence[float]) -> float:
    q1, q3 = np.percentile(values, [25, 75])
    return float(q3 - q1)


def summarize_runs(stats: Sequence[RunStats]) -> dict:
    """Per-algorithm medians/IQRs and per-device (mean CI, median efficiency)."""
    if not stats:
        raise ValueError("no runs to summarize")
    by_alg: dict[str, list[RunStats]] = defaultdict(list)
    for s in stats:
        by_alg[s.algorithm].append(s)
    out = {}
    for alg, runs in sorted(by_alg.items()):
        devices = sorted(runs[0].efficiency)
        out[alg] = {
            "runs": len(runs),
            "goodput_median": statistics.median(r.goodput for r in runs),
            "goodput_iqr": _iqr([r.goodput for r in runs]),
            "ci_mean": statistics.fmean(r.ci for r in runs),
            "ci_median": statistics.median(r.ci for r in runs),
            "efficiency_median": {d: statistics.median(r.efficiency[d] for r in runs) for d in devices},
            "efficiency_iqr": {d: _iqr([r.efficiency[d] for r in runs]) for d in devices},
        }
    return out


# --- files ------------------------------------------------------------------------


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a JSON scenario file; keys mirror ScenarioConfig fields.

    ``channel`` is an object of ChannelModel fields; ``profiles`` is either a
    path to a profile CSV or a list of built-in device names.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    known = set(ScenarioConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    kw = dict(raw)
    if "channel" in kw:
        try:
            kw["channel"] = ChannelModel(**kw["channel"])
        except TypeError as exc:
            raise ConfigError(f"{path}: bad channel ({exc})") from None
    if "profiles" in kw:
        source = kw["profiles"]
        if isinstance(source, str):
            p = Path(source)
            kw["profiles"] = load_profiles(p if p.is_absolute() else path.parent / p)
        else:
            table = {p.name: p for p in builtin_profiles()}
            try:
                kw["profiles"] = [table[n] for n in source]
            except KeyError as exc:
                raise ConfigError(f"{path}: unknown device {exc}") from None
    cfg = ScenarioConfig(**kw)
    cfg.validate()
    return cfg


def write_trace_csv(trace: RunTrace, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "mode_mbps", "txp_dbm"])
        for t, mode, txp in trace.steps:
            w.writerow([repr(float(t)), repr(float(mode)), int(txp)])


def stats_rows(stats: Sequence[RunStats]) -> list[dict]:
    rows = []
    for s in stats:
        for dev in sorted(s.energy):
            rows.append(
                {
                    "algorithm": s.algorithm,
                    "seed": s.seed,
                    "device": dev,
                    "goodput_mbps": s.goodput,
                    "energy_j": s.energy[dev],
                    "efficiency_bpj": s.efficiency[dev],
                    "mcs_hat": s.mcs_hat,
                    "txp_hat": s.txp_hat,
                    "ci": s.ci,
                }
            )
    return rows


def write_stats_csv(stats: Sequence[RunStats], path: str | Path) -> None:
    from .analysis import write_csv

    write_csv(path, stats_rows(stats), STATS_COLUMNS)
