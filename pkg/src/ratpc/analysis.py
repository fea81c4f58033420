"""Numerical sweeps over the joint goodput-energy model.

Every sweep is a pure function of its grid: rows come back in grid order and
re-running a sweep reproduces it bit for bit.  ``write_csv`` serialises any
row list with full-precision floats.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .dcf import DelayBreakdown, TxSetup, expected_delay
from .energy import DeviceProfile, energy_from_delay, scale_parameter
from .phy import ChannelModel, PhyMode, mode_table, path_loss

__all__ = [
    "SweepGrid",
    "TransitionDrop",
    "CurvePoint",
    "SensitivityCase",
    "SensitivityReport",
    "envelope_sweep",
    "energy_vs_txp",
    "efficiency_vs_optimal_goodput",
    "efficiency_vs_txp",
    "find_transitions",
    "find_transition_drops",
    "mean_relative_drop",
    "sensitivity_scan",
    "write_csv",
    "format_value",
]

N_MODES = len(mode_table())


@dataclass(frozen=True)
class SweepGrid:
    """Evenly spaced axis (SNR in dB or TXP in dBm) plus link parameters."""

    start: float = 0.0
    stop: float = 40.0
    step: float = 0.1
    l: int = 1500
    n_max: int = 7
    channel: ChannelModel = field(default_factory=ChannelModel)

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if not self.start < self.stop:
            raise ValueError("grid start must be below stop")

    @property
    def points(self) -> np.ndarray:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return np.round(self.start + self.step * np.arange(n), 10)

    @property
    def offset(self) -> float:
        """TXP minus SNR (dB) on this grid's channel."""
        return path_loss(self.channel) + self.channel.noise_floor


@dataclass(frozen=True)
class CurvePoint:
    snr: float
    txp: float
    mode: int
    g_star: float
    mu: float
    e_frame: float = float("nan")  # J, expected energy per frame


@dataclass(frozen=True)
class TransitionDrop:
    snr_at_transition: float
    from_mode: int
    to_mode: int
    mu_before: float
    mu_after: float
    g_before: float
    g_after: float

    @property
    def drop(self) -> float:
        """Relative efficiency decrease across the transition (negative for a rise)."""
        return (self.mu_before - self.mu_after) / self.mu_before


@lru_cache(maxsize=200_000)
def _delay(l: int, n_max: int, mode: PhyMode, snr: float) -> DelayBreakdown:
    return expected_delay(TxSetup.constant(l, mode, snr, n_max))


def _goodput(l: int, n_max: int, mode: PhyMode, snr: float) -> float:
    d = _delay(l, n_max, mode, snr)
    return d.p_succ * l * 8 / d.e_delay


def _best(goodputs: Sequence[float]) -> int:
    # first maximum: ties go to the lower mode
    return int(np.argmax(goodputs))


def envelope_sweep(grid: SweepGrid) -> list[dict]:
    """Per-mode goodput, goodput-optimal mode and optimal goodput at each SNR."""
    modes = mode_table()
    rows = []
    for snr in grid.points:
        g = [_goodput(grid.l, grid.n_max, m, float(snr)) for m in modes]
        k = _best(g)
        row = {"snr_db": float(snr)}
        row.update({f"g_mode{m.index}": gi for m, gi in zip(modes, g)})
        row["best_mode"] = modes[k].index
        row["g_star"] = g[k]
        rows.append(row)
    return rows


def energy_vs_txp(grid: SweepGrid, profile: DeviceProfile) -> list[dict]:
    """Expected energy per frame (J) of every mode along a TXP axis."""
    modes = mode_table()
    rows = []
    for txp in grid.points:
        snr = float(txp) - grid.offset
        row = {"txp_dbm": float(txp), "snr_db": snr}
        for m in modes:
            e = energy_from_delay(_delay(grid.l, grid.n_max, m, snr), grid.l, profile, float(txp))
            row[f"e_mode{m.index}"] = e.e_frame
        rows.append(row)
    return rows


def efficiency_vs_optimal_goodput(grid: SweepGrid, profile: DeviceProfile) -> list[CurvePoint]:
    """Efficiency of the goodput-optimal mode at each SNR, ordered by optimal goodput."""
    modes = mode_table()
    out = []
    for snr in grid.points:
        snr = float(snr)
        g = [_goodput(grid.l, grid.n_max, m, snr) for m in modes]
        k = _best(g)
        txp = snr + grid.offset
        e = energy_from_delay(_delay(grid.l, grid.n_max, modes[k], snr), grid.l, profile, txp)
        out.append(CurvePoint(snr=snr, txp=txp, mode=modes[k].index, g_star=g[k], mu=e.mu, e_frame=e.e_frame))
    # stable: equal goodputs keep SNR order
    return sorted(out, key=lambda p: p.g_star)


def efficiency_vs_txp(grid: SweepGrid, profile: DeviceProfile) -> list[dict]:
    """Per-mode efficiency along a TXP axis, with the goodput-optimal mode."""
    modes = mode_table()
    rows = []
    for txp in grid.points:
        txp = float(txp)
        snr = txp - grid.offset
        row = {"txp_dbm": txp, "snr_db": snr}
        g = []
        for m in modes:
            d = _delay(grid.l, grid.n_max, m, snr)
            g.append(d.p_succ * grid.l * 8 / d.e_delay)
            row[f"mu_mode{m.index}"] = energy_from_delay(d, grid.l, profile, txp).mu
        k = _best(g)
        row["best_mode"] = modes[k].index
        row["mu_best"] = row[f"mu_mode{modes[k].index}"]
        rows.append(row)
    return rows


def find_transitions(curve: Sequence[CurvePoint]) -> list[TransitionDrop]:
    """Every change of the goodput-optimal mode along the curve."""
    out = []
    for a, b in zip(curve, curve[1:]):
        if a.mode != b.mode:
            out.append(TransitionDrop(b.snr, a.mode, b.mode, a.mu, b.mu, a.g_star, b.g_star))
    return out


def find_transition_drops(curve: Sequence[CurvePoint]) -> list[TransitionDrop]:
    """Mode transitions at which efficiency falls."""
    return [t for t in find_transitions(curve) if t.mu_after < t.mu_before]


def mean_relative_drop(transitions: Sequence[TransitionDrop]) -> float:
    if not transitions:
        return 0.0
    return float(np.mean([t.drop for t in transitions]))


@dataclass
class SensitivityCase:
    param: str
    factor: float
    curve: list[CurvePoint]
    transitions: list[TransitionDrop]

    @property
    def mean_drop(self) -> float:
        return mean_relative_drop(self.transitions)


@dataclass
class SensitivityReport:
    profile: DeviceProfile
    baseline: SensitivityCase
    cases: list[SensitivityCase]
    rho_rx_max_change: float  # max relative change of mu under rho_rx scaling

    def case(self, param: str, factor: float) -> SensitivityCase:
        for c in self.cases:
            if c.param == param and math.isclose(c.factor, factor):
                return c
        raise KeyError((param, factor))


def _case(grid: SweepGrid, profile: DeviceProfile, param: str, factor: float) -> SensitivityCase:
    p = profile if factor == 1 else scale_parameter(profile, param, factor)
    curve = efficiency_vs_optimal_goodput(grid, p)
    return SensitivityCase(param, factor, curve, find_transitions(curve))


def sensitivity_scan(
    base: DeviceProfile,
    grid: SweepGrid | None = None,
    factors: Iterable[float] = (3.0, 1.0 / 3.0),
    params: Iterable[str] = ("rho_id", "rho_tx", "gamma_xg"),
) -> SensitivityReport:
    """Re-derive the efficiency/goodput curve with each parameter scaled up and down."""
    grid = grid or SweepGrid()
    factors = tuple(factors)
    baseline = _case(grid, base, "none", 1.0)
    cases = [_case(grid, base, p, f) for p in params for f in factors]
    worst = 0.0
    for f in factors:
        alt = efficiency_vs_optimal_goodput(grid, scale_parameter(base, "rho_rx", f))
        for a, b in zip(baseline.curve, alt):
            if a.mu > 0:
                worst = max(worst, abs(b.mu - a.mu) / a.mu)
    return SensitivityReport(base, baseline, cases, worst)


# --- CSV ----------------------------------------------------------------------------


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows: Sequence[dict], header: Sequence[str] | None = None) -> None:
    header = list(header or (rows[0].keys() if rows else []))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_value(r[h]) for h in header])
