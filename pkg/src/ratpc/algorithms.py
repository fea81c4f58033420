"""Joint rate adaptation and transmit power control (RA-TPC) controllers.

Every controller exposes the same loop: read ``decision`` for the next
attempt, transmit, then hand the outcome to ``step`` which returns the
decision for the following attempt (a retry of the same frame or the first
attempt of the next one).  Controllers only ever emit modes from their mode
set and integer TXPs within ``[txp_min, txp_max]`` dBm.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

from .dcf import backoff_mean
from .phy import TIMING, PhyMode, ack_mode_for, airtime_ack, airtime_data, mode_table

__all__ = [
    "Decision",
    "TxFeedback",
    "FeedbackError",
    "Controller",
    "FixedController",
    "Parf",
    "MinstrelPiano",
    "Rrpaa",
    "Prcs",
    "ALGORITHMS",
    "make_controller",
    "controller_step",
    "loss_thresholds",
]


@dataclass(frozen=True)
class Decision:
    mode: PhyMode
    txp_dbm: int


@dataclass(frozen=True)
class TxFeedback:
    success: bool
    decision: Decision
    timestamp: float  # s
    attempt: int = 1  # 1-based attempt index within the frame


class FeedbackError(ValueError):
    """Feedback does not match the controller's last decision or goes back in time."""


class Controller:
    name = "base"
    # True when decisions may only change at loss-window boundaries
    windowed = False

    def __init__(
        self,
        modes: Sequence[PhyMode] | None = None,
        txp_min: int = 0,
        txp_max: int = 17,
        n_max: int = 7,
        l: int = 1500,
        rng: random.Random | None = None,
    ):
        self.modes = sorted(modes or mode_table(), key=lambda m: m.index)
        if txp_min > txp_max:
            raise ValueError("txp_min above txp_max")
        self.txp_min = int(txp_min)
        self.txp_max = int(txp_max)
        self.n_max = n_max
        self.l = l
        self.rng = rng or random.Random(0)
        self.rate = 0  # index into self.modes
        self.power = self.txp_max
        self.next_attempt = 1
        self._last_time = -math.inf
        self._decision: Decision | None = None
        self.window_closed = False  # set by windowed controllers on evaluation

    @property
    def top(self) -> int:
        return len(self.modes) - 1

    @property
    def decision(self) -> Decision:
        if self._decision is None:
            self._decision = self._decide()
        return self._decision

    def _decide(self) -> Decision:
        return Decision(self.modes[self.rate], self.power)

    def step(self, fb: TxFeedback) -> Decision:
        if fb.decision != self.decision:
            raise FeedbackError(f"feedback for {fb.decision}, last decision was {self.decision}")
        if fb.timestamp < self._last_time:
            raise FeedbackError("feedback timestamps must be non-decreasing")
        self._last_time = fb.timestamp
        self.window_closed = False
        frame_done = fb.success or fb.attempt >= self.n_max
        self.next_attempt = 1 if frame_done else fb.attempt + 1
        self._update(fb, frame_done)
        self.rate = min(max(self.rate, 0), self.top)
        self.power = min(max(self.power, self.txp_min), self.txp_max)
        self._decision = self._decide()
        d = self._decision
        assert d.mode in self.modes and self.txp_min <= d.txp_dbm <= self.txp_max
        return d

    def _update(self, fb: TxFeedback, frame_done: bool) -> None:
        pass


def controller_step(ctrl: Controller, feedback: TxFeedback) -> Decision:
    return ctrl.step(feedback)


class FixedController(Controller):
    """Never changes its decision."""

    name = "fixed"

    def __init__(self, mode: PhyMode | int = 8, txp: int = 17, **kw):
        super().__init__(**kw)
        index = mode if isinstance(mode, int) else mode.index
        self.rate = [m.index for m in self.modes].index(index)
        self.power = int(txp)


class Parf(Controller):
    """Auto Rate Fallback with power control.

    Rate goes up after ``success_threshold`` consecutive successes or when
    ``timer`` seconds pass at the same rate; it reverts if the first attempt
    at the new rate fails.  At the top rate the same success rule lowers the
    power instead, and a failure right after a power drop restores it.  Two
    consecutive failures raise the power, or lower the rate at full power.
    """

    name = "parf"

    def __init__(self, success_threshold: int = 10, timer: float = 15.0, txp_step: int = 1, **kw):
        super().__init__(**kw)
        self.success_threshold = success_threshold
        self.timer = timer
        self.txp_step = txp_step
        self.rate = 0
        self.power = self.txp_max
        self.n_success = 0
        self.n_fail = 0
        self.recovery_rate = False
        self.recovery_power = False
        self.timer_start: float | None = None

    def _update(self, fb, frame_done):
        if self.timer_start is None:
            self.timer_start = fb.timestamp
        if fb.success:
            self.n_success += 1
            self.n_fail = 0
            self.recovery_rate = self.recovery_power = False
            expired = fb.timestamp - self.timer_start >= self.timer
            if self.n_success >= self.success_threshold or expired:
                self.n_success = 0
                self.timer_start = fb.timestamp
                if self.rate < self.top:
                    self.rate += 1
                    self.recovery_rate = True
                elif self.power > self.txp_min:
                    self.power -= self.txp_step
                    self.recovery_power = True
            return
        self.n_success = 0
        self.n_fail += 1
        if self.recovery_rate:
            self.rate -= 1
            self.recovery_rate = False
            self.n_fail = 0
            self.timer_start = fb.timestamp
        elif self.recovery_power:
            self.power += self.txp_step
            self.recovery_power = False
            self.n_fail = 0
        elif self.n_fail >= 2:
            self.n_fail = 0
            if self.power < self.txp_max:
                self.power += self.txp_step
            elif self.rate > 0:
                self.rate -= 1
                self.timer_start = fb.timestamp


def _exchange_time(l: int, mode: PhyMode) -> float:
    # one successful frame exchange, us
    return (
        backoff_mean(1)
        + airtime_data(l, mode)
        + TIMING.t_sifs
        + airtime_ack(ack_mode_for(mode))
        + TIMING.t_difs
    )


class MinstrelPiano(Controller):
    """Minstrel rate sampling with Piano-style power sampling.

    Every ``interval`` seconds the per-rate success ratio of the elapsed
    interval is folded into an EWMA, ``p = w * p + (1 - w) * ratio``, and the
    rates are re-ranked by expected throughput.  A ``probe_ratio`` share of
    frames opens with a randomly chosen rate faster than the best one (slower
    rates cannot raise throughput and are not sampled).  Power works the same way per
    rate: a share of frames goes out at a random level below the rate's
    reference power, and the reference follows the lowest level whose success
    EWMA stays within ``power_tolerance`` of the reference.
    """

    name = "mp"

    def __init__(
        self,
        ewma_weight: float = 0.75,
        interval: float = 0.1,
        probe_ratio: float = 0.1,
        power_probe_ratio: float = 0.1,
        txp_step: int = 1,
        power_tolerance: float = 0.05,
        min_prob: float = 0.1,
        **kw,
    ):
        super().__init__(**kw)
        self.w = ewma_weight
        self.interval = interval
        self.probe_ratio = probe_ratio
        self.power_probe_ratio = power_probe_ratio
        self.txp_step = txp_step
        self.power_tolerance = power_tolerance
        self.min_prob = min_prob
        n = len(self.modes)
        self.t_exchange = [_exchange_time(self.l, m) for m in self.modes]
        self.ewma: list[float | None] = [None] * n
        self.att = [0] * n
        self.succ = [0] * n
        self.ref_power = [self.txp_max] * n
        self.p_ewma: dict[tuple[int, int], float] = {}
        self.p_att: dict[tuple[int, int], int] = {}
        self.p_succ: dict[tuple[int, int], int] = {}
        self.best_tp = 0
        self.second_tp = 0
        self.best_prob = 0
        self.next_update: float | None = None
        self.frames = 0
        self.probes = 0
        self.power_probes = 0
        self.window_frames = 0
        self.window_probes = 0
        self._frame_probe: int | None = None  # rate index sampled by this frame
        self._frame_power_probe: int | None = None  # TXP sampled by this frame
        self._start_frame()

    # frame-level scheduling ------------------------------------------------

    def _start_frame(self):
        self.frames += 1
        self.window_frames += 1
        self._frame_probe = None
        self._frame_power_probe = None
        others = list(range(self.best_tp + 1, len(self.modes)))
        if others and self.probes < self.probe_ratio * self.frames:
            self._frame_probe = self.rng.choice(others)
            self.probes += 1
            self.window_probes += 1
        elif self.power_probes < self.power_probe_ratio * self.frames:
            ref = self.ref_power[self.best_tp]
            if ref > self.txp_min:
                self.power_probes += 1
                self._frame_power_probe = self.rng.randrange(self.txp_min, ref)

    def _chain_rate(self, attempt: int) -> int:
        if self._frame_probe is not None:
            if attempt == 1:
                return self._frame_probe
            attempt -= 1
        if attempt <= 2:
            return self.best_tp
        if attempt <= 4:
            return self.second_tp
        if attempt <= 6:
            return self.best_prob
        return 0

    def _decide(self):
        a = self.next_attempt
        r = self._chain_rate(a)
        if a == 1 and self._frame_power_probe is not None:
            p = self._frame_power_probe
        elif a <= 2:
            p = self.ref_power[r]
        else:
            p = self.txp_max  # fallback stages use full power
        p = min(max(p, self.txp_min), self.txp_max)
        self.rate, self.power = r, p
        return Decision(self.modes[r], p)

    # statistics ---------------------------------------------------------------

    def _update(self, fb, frame_done):
        r = self.modes.index(fb.decision.mode)
        key = (r, fb.decision.txp_dbm)
        self.att[r] += 1
        self.p_att[key] = self.p_att.get(key, 0) + 1
        if fb.success:
            self.succ[r] += 1
            self.p_succ[key] = self.p_succ.get(key, 0) + 1
        if self.next_update is None:
            self.next_update = fb.timestamp + self.interval
        if fb.timestamp >= self.next_update:
            self.update_stats()
            self.next_update = fb.timestamp + self.interval
        if frame_done:
            self._start_frame()

    def ewma_update(self, old: float | None, ratio: float) -> float:
        return ratio if old is None else self.w * old + (1.0 - self.w) * ratio

    def throughput(self, r: int) -> float:
        p = self.ewma[r]
        if p is None or p < self.min_prob:
            return 0.0
        return p * self.l * 8 / self.t_exchange[r]

    def update_stats(self):
        for r in range(len(self.modes)):
            if self.att[r]:
                self.ewma[r] = self.ewma_update(self.ewma[r], self.succ[r] / self.att[r])
            self.att[r] = self.succ[r] = 0
        for key, n in self.p_att.items():
            self.p_ewma[key] = self.ewma_update(self.p_ewma.get(key), self.p_succ.get(key, 0) / n)
        self.p_att.clear()
        self.p_succ.clear()
        idx = range(len(self.modes))
        # ties resolve to the lower (more robust) rate
        ranked = sorted(idx, key=lambda r: (-self.throughput(r), r))
        self.best_tp = ranked[0]
        self.second_tp = ranked[1] if self.throughput(ranked[1]) > 0 else ranked[0]
        self.best_prob = max(idx, key=lambda r: ((self.ewma[r] or 0.0), -r))
        if (self.ewma[self.best_prob] or 0.0) == 0.0:
            self.best_prob = 0
        self._update_power(self.best_tp)
        self.window_frames = self.window_probes = 0

    def _update_power(self, r: int):
        ref = self.ref_power[r]
        p_ref = self.p_ewma.get((r, ref))
        if p_ref is None:
            return
        lower = [
            q for q in range(self.txp_min, ref)
            if self.p_ewma.get((r, q), -1.0) >= p_ref - self.power_tolerance
        ]
        if lower:
            self.ref_power[r] = lower[0]
        elif p_ref < 1.0 - 2 * self.power_tolerance and ref < self.txp_max:
            self.ref_power[r] = min(ref + self.txp_step, self.txp_max)
            # forget stale statistics of the abandoned levels
            for q in range(self.txp_min, ref):
                self.p_ewma.pop((r, q), None)


def loss_thresholds(modes: Sequence[PhyMode], l: int = 1500) -> tuple[list[float], list[float]]:
    """RRAA-style (MTL, ORI) loss thresholds per rate.

    MTL of a rate is the loss ratio at which its goodput falls to the
    loss-free goodput of the next slower rate; the opportunistic-increase
    threshold of a rate is half the MTL of the next faster one.  The slowest
    rate has no fallback, so it borrows the MTL of the next rate; there the
    threshold only drives power increases.
    """
    t = [_exchange_time(l, m) for m in modes]
    n = len(modes)
    mtl = [1.0 - t[i] / t[i - 1] for i in range(1, n)]
    mtl = [mtl[0] if mtl else 1.0] + mtl
    ori = [mtl[i + 1] / 2.0 for i in range(n - 1)] + [mtl[-1] / 2.0]
    return mtl, ori


class Rrpaa(Controller):
    """Windowed loss-ratio controller for rate and power (RRAA family).

    Starts at the fastest rate and full power.  Outcomes are counted over a
    window of ``window`` attempts, which closes early once its verdict can no
    longer change.  On close: loss above MTL raises power, or lowers the rate
    at full power; loss below ORI moves up (faster rate, or lower power at the
    top rate); in between, power may step down.

    Upward moves are taken with a learned probability per (rate, power):
    leaving a configuration because of a bad window divides its probability
    by ``pd_decrease``, every good window multiplies the probabilities of the
    configurations at or below the current one by ``pd_increase``.
    """

    name = "rrpaa"
    windowed = True
    # in-between windows try a lower power
    power_save_in_between = True

    def __init__(
        self,
        window: int = 40,
        txp_step: int = 1,
        pd_decrease: float = 2.0,
        pd_increase: float = 1.0905,
        **kw,
    ):
        super().__init__(**kw)
        self.window = window
        self.txp_step = txp_step
        self.pd_decrease = pd_decrease
        self.pd_increase = pd_increase
        self.mtl, self.ori = loss_thresholds(self.modes, self.l)
        self.rate = self.top
        self.power = self.txp_max
        self.pd = [[1.0] * (self.txp_max - self.txp_min + 1) for _ in self.modes]
        self.w_att = 0
        self.w_loss = 0

    def _pd(self, rate: int, power: int) -> float:
        return self.pd[rate][power - self.txp_min]

    def _scale_pd(self, rate: int, power: int, factor: float) -> None:
        i = power - self.txp_min
        self.pd[rate][i] = min(1.0, self.pd[rate][i] * factor)

    def _update(self, fb, frame_done):
        self.w_att += 1
        self.w_loss += 0 if fb.success else 1
        remaining = self.window - self.w_att
        mtl, ori = self.mtl[self.rate], self.ori[self.rate]
        if self.w_loss > mtl * self.window:
            verdict = "bad"
        elif self.w_loss + remaining < ori * self.window:
            verdict = "good"
        elif remaining <= 0:
            verdict = "hold"
        else:
            return
        self.w_att = self.w_loss = 0
        self.window_closed = True
        if verdict == "bad":
            self._scale_pd(self.rate, self.power, 1.0 / self.pd_decrease)
            self._on_bad()
        elif verdict == "good":
            self._on_good()
        elif self.power_save_in_between:
            self._try_lower_power()

    def _try_lower_power(self) -> bool:
        if self.power <= self.txp_min:
            return False
        for p in range(self.power, self.txp_max + 1):
            self._scale_pd(self.rate, p, self.pd_increase)
        if self.rng.random() < self._pd(self.rate, self.power - self.txp_step):
            self.power -= self.txp_step
            return True
        return False

    def _on_good(self):
        if self.rate < self.top:
            for r in range(self.rate + 1):
                self._scale_pd(r, self.power, self.pd_increase)
            if self.rng.random() < self._pd(self.rate + 1, self.power):
                self.rate += 1
        else:
            self._try_lower_power()

    def _on_bad(self):
        if self.power < self.txp_max:
            self.power += self.txp_step
        elif self.rate > 0:
            self.rate -= 1


class Prcs(Rrpaa):
    """RRPAA thresholds and learned probabilities with a different update
    order: a rate increase restarts at full power, a bad window at reduced
    power returns straight to full power, and in-between windows hold."""

    name = "prcs"
    power_save_in_between = False

    def _on_good(self):
        if self.rate < self.top:
            for r in range(self.rate + 1):
                self._scale_pd(r, self.power, self.pd_increase)
            if self.rng.random() < self._pd(self.rate + 1, self.txp_max):
                self.rate += 1
                self.power = self.txp_max
        else:
            self._try_lower_power()

    def _on_bad(self):
        if self.power < self.txp_max:
            self.power = self.txp_max
        elif self.rate > 0:
            self.rate -= 1


ALGORITHMS = {c.name: c for c in (Parf, MinstrelPiano, Rrpaa, Prcs, FixedController)}


def make_controller(name: str, rng: random.Random | None = None, **params) -> Controller:
    try:
        cls = ALGORITHMS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    return cls(rng=rng, **params)
