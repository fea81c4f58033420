import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratpc.algorithms import (
    ALGORITHMS,
    FeedbackError,
    FixedController,
    MinstrelPiano,
    Parf,
    Prcs,
    Rrpaa,
    TxFeedback,
    controller_step,
    loss_thresholds,
    make_controller,
)
from ratpc.phy import mode_table

MODES = mode_table()
RA_TPC = ["parf", "mp", "rrpaa", "prcs"]


class Clock:
    def __init__(self, dt=0.001):
        self.t = 0.0
        self.dt = dt

    def __call__(self):
        self.t += self.dt
        return self.t


def feed(ctrl, outcomes, clock=None):
    """Send a sequence of outcomes; returns the decisions that were used."""
    if clock is None:
        clock = Clock()
        clock.t = max(ctrl._last_time, 0.0)
    used = []
    for ok in outcomes:
        d = ctrl.decision
        used.append(d)
        ctrl.step(TxFeedback(bool(ok), d, clock(), ctrl.next_attempt))
    return used


def channel_outcomes(decision, rng):
    # success more likely at low rate and high power
    p = min(1.0, max(0.0, 1.2 - decision.mode.index / 8 + decision.txp_dbm / 40))
    return rng.random() < p


def run_closed_loop(name, seed, n=3000):
    ctrl = make_controller(name, rng=random.Random(seed))
    rng = random.Random(seed + 100)
    clock = Clock()
    seq = []
    for _ in range(n):
        d = ctrl.decision
        seq.append((d.mode.index, d.txp_dbm))
        ctrl.step(TxFeedback(channel_outcomes(d, rng), d, clock(), ctrl.next_attempt))
    return seq


@pytest.mark.parametrize("name", RA_TPC)
def test_determinism(name):
    assert run_closed_loop(name, 5) == run_closed_loop(name, 5)


@pytest.mark.parametrize("name", RA_TPC)
@settings(max_examples=25, deadline=None)
@given(outcomes=st.lists(st.booleans(), min_size=1, max_size=400), lo=st.integers(0, 8), span=st.integers(0, 12))
def test_decisions_within_bounds(name, outcomes, lo, span):
    ctrl = make_controller(name, rng=random.Random(1), txp_min=lo, txp_max=lo + span)
    for d in feed(ctrl, outcomes) + [ctrl.decision]:
        assert d.mode in MODES
        assert isinstance(d.txp_dbm, int) and lo <= d.txp_dbm <= lo + span


def test_feedback_validation():
    ctrl = Parf()
    d = ctrl.decision
    ctrl.step(TxFeedback(True, d, 1.0))
    with pytest.raises(FeedbackError):
        ctrl.step(TxFeedback(True, d, 0.5))
    other = FixedController(mode=3).decision
    with pytest.raises(FeedbackError):
        ctrl.step(TxFeedback(True, other, 2.0))
    assert controller_step(ctrl, TxFeedback(True, ctrl.decision, 2.0)) == ctrl.decision


def test_registry():
    assert set(RA_TPC) <= set(ALGORITHMS)
    with pytest.raises(ValueError):
        make_controller("aarf")
    with pytest.raises(ValueError):
        Parf(txp_min=5, txp_max=4)


def test_fixed_controller_never_changes():
    ctrl = FixedController(mode=MODES[3], txp=9)
    used = feed(ctrl, [True, False] * 50)
    assert {(d.mode.index, d.txp_dbm) for d in used} == {(4, 9)}


# --- PARF ---------------------------------------------------------------------------


def test_parf_start_and_rate_up():
    ctrl = Parf()
    assert (ctrl.decision.mode.index, ctrl.decision.txp_dbm) == (1, 17)
    feed(ctrl, [True] * 9)
    assert ctrl.decision.mode.index == 1
    feed(ctrl, [True])
    assert ctrl.decision.mode.index == 2


def test_parf_reverts_after_first_failure_at_new_rate():
    ctrl = Parf()
    feed(ctrl, [True] * 10 + [False])
    assert ctrl.decision.mode.index == 1


def test_parf_two_failures_lower_rate():
    ctrl = Parf()
    feed(ctrl, [True] * 20 + [True] + [False, False])
    assert ctrl.decision.mode.index == 2


def test_parf_power_phase_at_top_rate():
    ctrl = Parf()
    feed(ctrl, [True] * 70)
    assert ctrl.decision.mode.index == 8 and ctrl.decision.txp_dbm == 17
    feed(ctrl, [True] * 10)
    assert ctrl.decision.txp_dbm == 16
    feed(ctrl, [False])
    assert (ctrl.decision.mode.index, ctrl.decision.txp_dbm) == (8, 17)


def test_parf_timer_raises_rate():
    ctrl = Parf(timer=1.0)
    d = ctrl.decision
    ctrl.step(TxFeedback(True, d, 0.0))
    ctrl.step(TxFeedback(False, ctrl.decision, 0.5, 1))
    ctrl.step(TxFeedback(True, ctrl.decision, 1.2, 2))
    assert ctrl.decision.mode.index == 2


def test_parf_floor_all_failures():
    ctrl = Parf(txp_min=0)
    ctrl.power = 0
    ctrl._decision = None
    used = feed(ctrl, [False] * 60)
    assert all(d.mode.index == 1 for d in used)
    powers = [d.txp_dbm for d in used]
    assert powers == sorted(powers) and powers[-1] == 17 and min(powers) == 0


# --- Minstrel-Piano -----------------------------------------------------------------


def test_mp_ewma_definition():
    mp = MinstrelPiano(ewma_weight=0.75)
    assert mp.ewma_update(None, 0.4) == 0.4
    assert mp.ewma_update(0.8, 0.0) == pytest.approx(0.6)
    assert mp.ewma_update(0.5, 1.0) == pytest.approx(0.625)


def test_mp_converges_to_top_rate_when_lossless():
    mp = MinstrelPiano(rng=random.Random(3))
    feed(mp, [True] * 5000, Clock(0.0005))
    assert MODES[mp.best_tp].index == 8


def test_mp_probe_ratio():
    mp = MinstrelPiano(rng=random.Random(4), probe_ratio=0.1)
    counts = []
    clock = Clock(0.0005)
    for _ in range(40):
        start = (mp.frames, mp.probes)
        feed(mp, [True] * 100, clock)
        counts.append((mp.frames - start[0], mp.probes - start[1]))
    for frames, probes in counts[5:]:
        if mp.best_tp < len(MODES) - 1:
            assert abs(probes - 0.1 * frames) <= 1


def test_mp_probe_only_faster_rates():
    mp = MinstrelPiano(rng=random.Random(9))
    clock = Clock(0.0005)
    rng = random.Random(2)
    for _ in range(4000):
        d = mp.decision
        if mp.next_attempt == 1 and mp._frame_probe is not None:
            assert mp._frame_probe > mp.best_tp
        mp.step(TxFeedback(rng.random() < 0.7, d, clock(), mp.next_attempt))


# --- RRPAA / PRCS ---------------------------------------------------------------------


def test_loss_thresholds():
    mtl, ori = loss_thresholds(MODES)
    assert len(mtl) == len(ori) == 8
    assert all(0 < x < 1 for x in mtl)
    for i in range(7):
        assert ori[i] == pytest.approx(mtl[i + 1] / 2)


@pytest.mark.parametrize("cls", [Rrpaa, Prcs])
def test_rraa_family_starts_at_top(cls):
    d = cls().decision
    assert (d.mode.index, d.txp_dbm) == (8, 17)


@pytest.mark.parametrize("cls", [Rrpaa, Prcs])
def test_rraa_clean_window_moves_up(cls):
    ctrl = cls(window=40)
    ctrl.rate = 3
    ctrl._decision = None
    feed(ctrl, [True] * 40)
    assert ctrl.decision.mode.index == 5
    # at the top rate a clean window lowers power
    top = cls(window=40)
    feed(top, [True] * 40)
    assert (top.decision.mode.index, top.decision.txp_dbm) == (8, 16)


@pytest.mark.parametrize("cls", [Rrpaa, Prcs])
def test_rraa_lossy_window_moves_down(cls):
    ctrl = cls(window=40)
    feed(ctrl, [False] * 40)
    assert ctrl.decision.mode.index < 8
    # below full power a lossy window raises power first
    ctrl = cls(window=40)
    ctrl.rate, ctrl.power = 4, 10
    ctrl._decision = None
    while not ctrl.window_closed:
        feed(ctrl, [False])
    d = ctrl.decision
    assert d.mode.index == 5 and d.txp_dbm > 10


@pytest.mark.parametrize("cls", [Rrpaa, Prcs])
def test_rraa_in_between_keeps_rate(cls):
    ctrl = cls(window=40)
    ctrl.rate = 4
    ctrl._decision = None
    mtl, ori = ctrl.mtl[4], ctrl.ori[4]
    losses = int((mtl + ori) / 2 * 40)
    assert ori * 40 < losses < mtl * 40
    outcomes = [False] * losses + [True] * (40 - losses)
    before = ctrl.decision
    feed(ctrl, outcomes)
    assert ctrl.decision.mode == before.mode
    if cls is Prcs:
        assert ctrl.decision == before


@pytest.mark.parametrize("name", ["rrpaa", "prcs"])
def test_rraa_changes_only_at_window_close(name):
    ctrl = make_controller(name, rng=random.Random(0))
    rng = random.Random(1)
    clock = Clock()
    prev = ctrl.decision
    for _ in range(5000):
        new = ctrl.step(TxFeedback(channel_outcomes(prev, rng), prev, clock(), ctrl.next_attempt))
        if new != prev:
            assert ctrl.window_closed
        prev = new


def test_rrpaa_learns_to_avoid_failed_step_up():
    ctrl = Rrpaa(rng=random.Random(0), window=40)
    ctrl.rate = 5
    ctrl._decision = None
    ups = 0
    for _ in range(30):
        feed(ctrl, [True] * 40)  # clean window at rate index 5
        if ctrl.rate == 6:
            ups += 1
            feed(ctrl, [False] * 40)  # the faster rate fails
            ctrl.rate = 5
            ctrl._decision = None
    assert 1 <= ups < 30
