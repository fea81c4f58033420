"""Analytical goodput of single-link 802.11a DCF with retries.

A frame of `l` octets is attempted up to `n_max` times; attempt `i` uses
mode ``modes[i]`` under SNR ``snrs[i]``.  Attempts succeed independently
and a success needs both the data frame and its ACK to get through.
Times are in microseconds, goodput in Mbps (bits per microsecond).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .phy import (
    TIMING,
    PerModel,
    PhyMode,
    TimingParams,
    ACK_OCTETS,
    MAC_OVERHEAD,
    ack_mode_for,
    airtime_ack,
    airtime_data,
    mode_by_rate,
    per as default_per,
)

__all__ = [
    "TxSetup",
    "DelayBreakdown",
    "attempt_success_prob",
    "success_probabilities",
    "backoff_mean",
    "wait_time",
    "expected_delay",
    "goodput",
    "optimal_goodput",
]


@dataclass(frozen=True)
class TxSetup:
    l: int
    modes: tuple[PhyMode, ...]
    snrs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "snrs", tuple(float(s) for s in self.snrs))
        if self.l < 1:
            raise ValueError("payload must be at least one octet")
        if len(self.modes) < 1:
            raise ValueError("n_max must be >= 1")
        if len(self.modes) != len(self.snrs):
            raise ValueError("need one SNR per attempt mode")

    @property
    def n_max(self) -> int:
        return len(self.modes)

    @classmethod
    def constant(cls, l: int, mode: PhyMode, snr: float, n_max: int = 7) -> "TxSetup":
        """Same mode and SNR on every retry."""
        return cls(l, (mode,) * n_max, (snr,) * n_max)


@dataclass(frozen=True)
class DelayBreakdown:
    """Expected durations of one frame's transmission process.

    The ``succ_*`` terms are conditioned on delivery and sum to ``d_succ``;
    the ``fail_*`` terms sum to ``d_fail``.  Transmit and receive time are
    kept per attempt index so callers can weight them by the attempt's mode.
    """

    p_succ: float
    p_n_succ: np.ndarray
    d_succ: float
    d_fail: float
    e_delay: float
    succ_idle: float
    succ_tx: np.ndarray  # expected T_data spent in attempt i, given success
    succ_rx: np.ndarray  # expected T_ACK received after attempt n, given success
    fail_idle: float
    fail_tx: np.ndarray
    modes: tuple[PhyMode, ...] = field(repr=False, default=())


def attempt_success_prob(
    l: int,
    mode: PhyMode,
    snr: float,
    per_model: PerModel | None = None,
    mac_overhead: int = MAC_OVERHEAD,
) -> float:
    per = per_model or default_per
    data_bits = 8 * (l + mac_overhead)
    p_data = 1.0 - per(mode, snr, data_bits)
    if p_data == 0.0:
        return 0.0
    return p_data * (1.0 - per(ack_mode_for(mode), snr, 8 * ACK_OCTETS))


def success_probabilities(
    setup: TxSetup, per_model: PerModel | None = None
) -> tuple[float, np.ndarray]:
    p = [attempt_success_prob(setup.l, m, s, per_model) for m, s in zip(setup.modes, setup.snrs)]
    return _success_from_attempts(p)


def _success_from_attempts(p: Sequence[float]) -> tuple[float, np.ndarray]:
    p_n = np.empty(len(p))
    all_failed = 1.0
    for i, pi in enumerate(p):
        p_n[i] = pi * all_failed
        all_failed *= 1.0 - pi
    return float(p_n.sum()), p_n


def backoff_mean(attempt: int, timing: TimingParams = TIMING) -> float:
    """Mean backoff before attempt `attempt` (1-based) under BEB."""
    if attempt < 1:
        raise ValueError("attempts are numbered from 1")
    cw = min(2 ** (attempt - 1) * (timing.cw_min + 1), timing.cw_max + 1) - 1
    return cw / 2.0 * timing.slot


def wait_time(attempt: int = 2, timing: TimingParams = TIMING) -> float:
    """Idle time spent waiting before attempt `attempt` after a failure.

    The sender waits out the ACK timeout: SIFS, a base-rate ACK and one slot.
    """
    return timing.t_sifs + airtime_ack(mode_by_rate(6), timing) + timing.slot


def expected_delay(
    setup: TxSetup,
    per_model: PerModel | None = None,
    timing: TimingParams = TIMING,
    p_attempt: Sequence[float] | None = None,
) -> DelayBreakdown:
    """Expected transmission time of one frame and its decomposition.

    ``p_attempt`` overrides the per-attempt success probabilities (used to
    evaluate the model at prescribed loss levels).
    """
    n_max = setup.n_max
    if p_attempt is None:
        p = [attempt_success_prob(setup.l, m, s, per_model) for m, s in zip(setup.modes, setup.snrs)]
    else:
        if len(p_attempt) != n_max:
            raise ValueError("need one success probability per attempt")
        p = list(p_attempt)
    p_succ, p_n = _success_from_attempts(p)

    t_data = np.array([airtime_data(setup.l, m, timing=timing) for m in setup.modes])
    t_ack = np.array([airtime_ack(ack_mode_for(m), timing) for m in setup.modes])
    bkoff = np.array([backoff_mean(i, timing) for i in range(1, n_max + 2)])
    wait = np.array([wait_time(i, timing) for i in range(1, n_max + 2)])

    # conditional distribution of the successful attempt index
    if p_succ > 0.0:
        cond = p_n / p_succ
    else:
        cond = np.zeros(n_max)
        cond[0] = 1.0
    # attempt i (0-based) happens iff success index n >= i
    reach = np.cumsum(cond[::-1])[::-1]

    succ_tx = reach * t_data
    succ_rx = cond * t_ack
    # backoff of every attempt made; a wait before every retry
    succ_idle = float(
        np.sum(reach * bkoff[:n_max])
        + np.sum(reach[1:] * wait[1:n_max])
        + timing.t_sifs
        + timing.t_difs
    )
    d_succ = succ_idle + float(succ_tx.sum() + succ_rx.sum())

    fail_tx = t_data.copy()
    fail_idle = float(np.sum(bkoff[:n_max]) + np.sum(wait[1 : n_max + 1]))
    d_fail = fail_idle + float(fail_tx.sum())

    e_delay = (1.0 - p_succ) * d_fail + p_succ * d_succ
    return DelayBreakdown(
        p_succ=p_succ,
        p_n_succ=p_n,
        d_succ=d_succ,
        d_fail=d_fail,
        e_delay=e_delay,
        succ_idle=succ_idle,
        succ_tx=succ_tx,
        succ_rx=succ_rx,
        fail_idle=fail_idle,
        fail_tx=fail_tx,
        modes=setup.modes,
    )


def goodput(setup: TxSetup, per_model: PerModel | None = None, timing: TimingParams = TIMING) -> float:
    """Expected effective goodput in Mbps."""
    d = expected_delay(setup, per_model, timing)
    return d.p_succ * setup.l * 8 / d.e_delay


def optimal_goodput(
    l: int,
    snr: float,
    mode_set: Sequence[PhyMode],
    n_max: int = 7,
    per_model: PerModel | None = None,
) -> tuple[PhyMode, float]:
    """Best constant-mode goodput at `snr`; ties go to the lower mode."""
    if not mode_set:
        raise ValueError("empty mode set")
    best_mode, best_g = None, -1.0
    for m in sorted(mode_set, key=lambda m: m.index):
        g = goodput(TxSetup.constant(l, m, snr, n_max), per_model)
        if g > best_g:
            best_mode, best_g = m, g
    return best_mode, best_g
