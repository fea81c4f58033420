import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_frame, replay_frames
from ratpc.dcf import TxSetup, attempt_success_prob, backoff_mean, expected_delay
from ratpc.energy import (
    DegenerateFitError,
    DeviceProfile,
    TrafficLoad,
    avg_power,
    builtin_profiles,
    dbm_to_mw,
    efficiency,
    energy_from_delay,
    expected_energy,
    fit_profile,
    get_profile,
    load_profiles,
    scale_parameter,
    write_profiles,
)
from ratpc.phy import TIMING, ack_mode_for, airtime_ack, airtime_data, mode_by_rate, mode_table

PROFILES = builtin_profiles()
HTC = get_profile("htc_legend")
RPI = get_profile("raspberrypi")
MODES = mode_table()


def zero_per(mode, snr, bits):
    return 0.0


def test_builtin_profiles():
    assert len(PROFILES) == 5
    assert get_profile("soekris").alpha[1] == 0.0170
    assert RPI.beta[1] == 0.00146
    with pytest.raises(KeyError):
        get_profile("nokia")


def test_slopes_examples():
    assert HTC.rho_tx(54, 100) == pytest.approx(2.7348, abs=1e-12)
    assert HTC.rho_rx(6) == pytest.approx(0.05158, abs=1e-12)
    assert HTC.rho_tx(36, 0.0) == pytest.approx(HTC.alpha[0] + HTC.alpha[1] * 36)


def test_profile_validation():
    with pytest.raises(ValueError):
        DeviceProfile("x", 0.0, 0.0, 0.0, (1, 0, 0), (0, 0))


def test_profile_roundtrip(tmp_path):
    path = tmp_path / "p.csv"
    write_profiles(PROFILES, path)
    assert load_profiles(path) == PROFILES
    bad = tmp_path / "bad.csv"
    bad.write_text("name,rho_id\nx,1\n")
    with pytest.raises(ValueError):
        load_profiles(bad)
    bad.write_text(path.read_text().replace("0.75", "abc", 1))
    with pytest.raises(ValueError):
        load_profiles(bad)


def _samples(alpha, beta, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    tx = [
        (mcs, mw, alpha[0] + alpha[1] * mcs + alpha[2] * mw + rng.normal(0, noise) if noise else alpha[0] + alpha[1] * mcs + alpha[2] * mw)
        for mcs in (6, 12, 24, 36, 48, 54)
        for mw in (1, 5, 10, 25, 50, 100)
    ]
    rx = [(mcs, beta[0] + beta[1] * mcs + (rng.normal(0, noise) if noise else 0.0)) for mcs in (6, 9, 12, 18, 24, 36, 48, 54)]
    return tx, rx


def test_fit_exact_recovery():
    fit = fit_profile(*_samples(HTC.alpha, HTC.beta))
    np.testing.assert_allclose(fit.alpha, HTC.alpha, atol=1e-9)
    np.testing.assert_allclose(fit.beta, HTC.beta, atol=1e-9)
    assert fit.adj_r2_tx == pytest.approx(1.0) and fit.adj_r2_rx == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_fit_noisy_within_standard_errors(seed):
    fit = fit_profile(*_samples(RPI.alpha, RPI.beta, noise=0.01, seed=seed))
    for est, true, se in zip(fit.alpha + fit.beta, RPI.alpha + RPI.beta, fit.alpha_se + fit.beta_se):
        assert abs(est - true) <= 3 * se


def test_fit_degenerate():
    with pytest.raises(DegenerateFitError):
        fit_profile([(6, 10, 1.0)] * 5, [(6, 0.1), (12, 0.2)])
    with pytest.raises(DegenerateFitError):
        fit_profile(*_samples(HTC.alpha, HTC.beta)[:1], [(6, 0.1)])


def test_energy_zero_duration_is_gamma():
    from ratpc.phy import TimingParams

    zero = TimingParams(slot=0, t_sifs=0, t_difs=0, preamble=0, signal=0, symbol=0)
    e = expected_energy(TxSetup.constant(1500, MODES[0], 30.0, 3), RPI, 10.0, zero_per, timing=zero)
    assert e.e_frame == pytest.approx(RPI.gamma_xg, rel=1e-15)


def test_energy_single_attempt_closed_form():
    m = mode_by_rate(36)
    e = expected_energy(TxSetup.constant(1500, m, 30.0, 1), RPI, 15.0, zero_per)
    ack = ack_mode_for(m)
    expected = RPI.gamma_xg + 1e-6 * (
        RPI.rho_id * (backoff_mean(1) + TIMING.t_sifs + TIMING.t_difs)
        + RPI.rho_tx(36, dbm_to_mw(15.0)) * airtime_data(1500, m)
        + RPI.rho_rx(ack.rate) * airtime_ack(ack)
    )
    assert e.e_frame == pytest.approx(expected, rel=1e-14)
    assert e.mu == pytest.approx(12000 / expected, rel=1e-14)


@pytest.mark.parametrize("n_max", [1, 2, 3])
@pytest.mark.parametrize("p", [0.0, 0.3, 0.77, 1.0])
def test_energy_matches_enumeration(n_max, p):
    modes = (mode_by_rate(54), mode_by_rate(18), mode_by_rate(6))[:n_max]
    setup = TxSetup(1500, modes, (0.0,) * n_max)
    d = expected_delay(setup, p_attempt=[p] * n_max)
    e = energy_from_delay(d, 1500, RPI, 12.0)
    _, _, ee = enumerate_frame(1500, modes, [p] * n_max, RPI, 12.0, RPI.gamma_xg)
    assert e.e_frame == pytest.approx(ee, rel=1e-12)


def test_energy_matches_monte_carlo_replay():
    m = mode_by_rate(12)
    p = attempt_success_prob(1500, m, 10.0)
    e = expected_energy(TxSetup.constant(1500, m, 10.0), RPI, 15.0)
    _, _, e_mc = replay_frames(1500, m, p, RPI, 15.0, 7, 100_000, seed=11)
    assert e_mc == pytest.approx(e.e_frame, rel=0.01)


def test_efficiency_zero_when_undeliverable():
    assert efficiency(TxSetup.constant(1500, MODES[-1], -20.0), RPI, 10.0) == 0.0


def test_efficiency_rises_with_payload_at_fixed_timing():
    d = expected_delay(TxSetup.constant(1500, MODES[4], 30.0))
    assert energy_from_delay(d, 3000, RPI, 10.0).mu > energy_from_delay(d, 1500, RPI, 10.0).mu


def test_device_bands():
    mu = {p.name: efficiency(TxSetup.constant(1500, MODES[5], 25.0), p, 10.0) for p in PROFILES}
    high = min(mu["galaxy_note"], mu["htc_legend"])
    low = max(mu["linksys_wrt54g"], mu["soekris"])
    assert high > mu["raspberrypi"] > low


def test_avg_power():
    assert avg_power(RPI, TrafficLoad(), 54, 50) == RPI.rho_id
    assert avg_power(RPI, TrafficLoad(tau_tx=1.0), 54, 50) == pytest.approx(RPI.rho_id + RPI.rho_tx(54, 50))
    a = TrafficLoad(0.2, 0.1, 100, 20)
    b = TrafficLoad(0.3, 0.05, 50, 10)
    ab = TrafficLoad(0.5, 0.15, 150, 30)
    assert avg_power(RPI, ab, 24, 10) == pytest.approx(avg_power(RPI, a, 24, 10) + avg_power(RPI, b, 24, 10) - RPI.rho_id)
    with pytest.raises(ValueError):
        TrafficLoad(tau_tx=0.8, tau_rx=0.5)
    with pytest.raises(ValueError):
        TrafficLoad(lambda_g=-1)


def test_scale_parameter():
    assert scale_parameter(RPI, "rho_id", 1.0) == RPI
    assert scale_parameter(RPI, "rho_tx", 2.0).alpha == tuple(2 * a for a in RPI.alpha)
    with pytest.raises(ValueError):
        scale_parameter(RPI, "rho_id", 0.0)
    with pytest.raises(ValueError):
        scale_parameter(RPI, "alpha9", 2.0)


@settings(max_examples=40)
@given(st.sampled_from(MODES), st.floats(-5, 45), st.integers(1, 7), st.floats(0, 20))
def test_gamma_scaling_shifts_energy(mode, snr, n, txp):
    setup = TxSetup.constant(1500, mode, snr, n)
    e1 = expected_energy(setup, RPI, txp).e_frame
    e3 = expected_energy(setup, scale_parameter(RPI, "gamma_xg", 3.0), txp).e_frame
    assert e3 - e1 == pytest.approx(2 * RPI.gamma_xg, rel=1e-9)


@settings(max_examples=40)
@given(st.sampled_from(MODES), st.floats(0, 45), st.floats(1.5, 5))
def test_larger_idle_power_lowers_efficiency(mode, snr, k):
    setup = TxSetup.constant(1500, mode, snr)
    base = efficiency(setup, RPI, 10.0)
    assert efficiency(setup, scale_parameter(RPI, "rho_id", k), 10.0) <= base
