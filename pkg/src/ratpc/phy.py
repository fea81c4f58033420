"""802.11a PHY: mode table, frame airtimes, AWGN packet-error model and channel.

All durations are in microseconds, powers in dBm, SNRs and losses in dB.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Protocol

__all__ = [
    "Modulation",
    "PhyMode",
    "TimingParams",
    "TIMING",
    "ChannelModel",
    "PerModel",
    "EffectiveSnrPer",
    "MAC_OVERHEAD",
    "ACK_OCTETS",
    "MANDATORY_RATES",
    "mode_table",
    "mode_by_rate",
    "airtime_data",
    "airtime_ack",
    "ack_mode_for",
    "ber",
    "per",
    "path_loss",
    "snr_from_txp",
]

MAC_OVERHEAD = 28  # MAC header (24) + FCS (4), octets
ACK_OCTETS = 14
MANDATORY_RATES = (6, 12, 24)


class Modulation(enum.Enum):
    BPSK = 2
    QPSK = 4
    QAM16 = 16
    QAM64 = 64

    @property
    def order(self) -> int:
        return self.value


@dataclass(frozen=True)
class PhyMode:
    index: int
    rate: int  # Mbps
    modulation: Modulation
    coding_rate: Fraction

    @property
    def bits_per_symbol(self) -> int:
        # data bits per 4 us OFDM symbol
        return self.rate * 4

    def __str__(self) -> str:
        return f"mode{self.index}({self.rate} Mbps)"


_MODES = (
    PhyMode(1, 6, Modulation.BPSK, Fraction(1, 2)),
    PhyMode(2, 9, Modulation.BPSK, Fraction(3, 4)),
    PhyMode(3, 12, Modulation.QPSK, Fraction(1, 2)),
    PhyMode(4, 18, Modulation.QPSK, Fraction(3, 4)),
    PhyMode(5, 24, Modulation.QAM16, Fraction(1, 2)),
    PhyMode(6, 36, Modulation.QAM16, Fraction(3, 4)),
    PhyMode(7, 48, Modulation.QAM64, Fraction(2, 3)),
    PhyMode(8, 54, Modulation.QAM64, Fraction(3, 4)),
)
_BY_RATE = {m.rate: m for m in _MODES}


def mode_table() -> list[PhyMode]:
    """The eight 802.11a modes in index order."""
    return list(_MODES)


def mode_by_rate(rate: float) -> PhyMode:
    try:
        return _BY_RATE[int(rate)]
    except KeyError:
        raise ValueError(f"no 802.11a mode at {rate} Mbps") from None


@dataclass(frozen=True)
class TimingParams:
    slot: float = 9.0
    t_sifs: float = 16.0
    t_difs: float = 34.0
    preamble: float = 16.0
    signal: float = 4.0
    symbol: float = 4.0
    cw_min: int = 15
    cw_max: int = 1023
    service_tail_bits: int = 22


TIMING = TimingParams()


def _airtime(octets: int, mode: PhyMode, timing: TimingParams) -> float:
    n_sym = math.ceil((timing.service_tail_bits + 8 * octets) / mode.bits_per_symbol)
    return timing.preamble + timing.signal + timing.symbol * n_sym


def airtime_data(
    l: int,
    mode: PhyMode,
    mac_overhead: int = MAC_OVERHEAD,
    timing: TimingParams = TIMING,
) -> float:
    """Airtime of a data frame carrying `l` payload octets, in us."""
    if l < 0:
        raise ValueError("payload length must be non-negative")
    return _airtime(l + mac_overhead, mode, timing)


def airtime_ack(ack_mode: PhyMode, timing: TimingParams = TIMING) -> float:
    if ack_mode.rate not in MANDATORY_RATES:
        raise ValueError(f"ACKs are sent at a mandatory rate {MANDATORY_RATES}, got {ack_mode.rate}")
    return _airtime(ACK_OCTETS, ack_mode, timing)


def ack_mode_for(data_mode: PhyMode) -> PhyMode:
    """Highest mandatory rate not above the data rate (control response rule)."""
    rate = max(r for r in MANDATORY_RATES if r <= data_mode.rate)
    return _BY_RATE[rate]


# --- error model -----------------------------------------------------------

# effective SNR gain credited to the convolutional code, per coding rate
CODING_GAIN_DB = {Fraction(1, 2): 5.0, Fraction(2, 3): 4.0, Fraction(3, 4): 3.0}


def _qfunc(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _ber_square_qam(order: int, esn0: float) -> float:
    # Exact Gray-coded square M-QAM BER (Cho & Yoon, 2002).
    sqm = int(round(math.sqrt(order)))
    bits_per_dim = int(round(math.log2(sqm)))
    arg = math.sqrt(3.0 * esn0 / (2.0 * (order - 1)))
    total = 0.0
    for k in range(1, bits_per_dim + 1):
        step = 2 ** (k - 1)
        acc = 0.0
        for i in range(int((1 - 2.0**-k) * sqm)):
            sign = -1.0 if (i * step // sqm) % 2 else 1.0
            weight = step - math.floor(i * step / sqm + 0.5)
            acc += sign * weight * math.erfc((2 * i + 1) * arg)
        total += acc / sqm
    return max(total / bits_per_dim, 0.0)


def ber(mode: PhyMode, snr_db: float) -> float:
    """Post-decoding bit error rate of `mode` at `snr_db` (AWGN)."""
    esn0 = 10.0 ** ((snr_db + CODING_GAIN_DB[mode.coding_rate]) / 10.0)
    if mode.modulation is Modulation.BPSK:
        return _qfunc(math.sqrt(2.0 * esn0))
    if mode.modulation is Modulation.QPSK:
        return _qfunc(math.sqrt(esn0))
    return _ber_square_qam(mode.modulation.order, esn0)


class PerModel(Protocol):
    def __call__(self, mode: PhyMode, snr_db: float, length_bits: int) -> float: ...


class EffectiveSnrPer:
    """PER = 1 - (1 - BER)^bits with BER from the uncoded formulas at an
    SNR raised by a per-coding-rate gain."""

    def __call__(self, mode: PhyMode, snr_db: float, length_bits: int) -> float:
        if length_bits < 1:
            raise ValueError("length_bits must be >= 1")
        b = ber(mode, snr_db)
        if b >= 0.5:
            b = 0.5
        return min(1.0, max(0.0, -math.expm1(length_bits * math.log1p(-b))))


_default_per = EffectiveSnrPer()


def per(mode: PhyMode, snr_db: float, length_bits: int) -> float:
    return _default_per(mode, snr_db, length_bits)


# --- channel -----------------------------------------------------------------


@dataclass(frozen=True)
class ChannelModel:
    """ITU-R P.1238 indoor link: noise floor, distance and site parameters."""

    distance: float = 18.0  # m
    noise_floor: float = -85.0  # dBm
    frequency: float = 5200.0  # MHz
    path_loss_exponent_coefficient: float = 31.0  # office
    floor_penetration: float = 0.0  # dB

    def at(self, distance: float) -> "ChannelModel":
        return ChannelModel(
            distance,
            self.noise_floor,
            self.frequency,
            self.path_loss_exponent_coefficient,
            self.floor_penetration,
        )


def path_loss(chan: ChannelModel) -> float:
    if chan.distance < 1.0:
        raise ValueError("ITU indoor model needs distance >= 1 m")
    return (
        20.0 * math.log10(chan.frequency)
        + chan.path_loss_exponent_coefficient * math.log10(chan.distance)
        + chan.floor_penetration
        - 28.0
    )


def snr_from_txp(txp_dbm: float, chan: ChannelModel) -> float:
    return txp_dbm - path_loss(chan) - chan.noise_floor
