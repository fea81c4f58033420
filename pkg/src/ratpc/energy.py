"""Device energy model, per-frame expected energy and energy efficiency.

Power parameters follow the multilinear device model: a baseline idle power,
airtime-proportional transmit/receive slopes and a per-frame processing toll
(the cross-factor).  Transmit and receive slopes depend linearly on the MCS
(Mbps) and, for transmission, on the TXP in mW.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dcf import DelayBreakdown, TxSetup, expected_delay
from .phy import TIMING, PerModel, TimingParams, ack_mode_for

__all__ = [
    "DeviceProfile",
    "EnergyBreakdown",
    "TrafficLoad",
    "ProfileFit",
    "DegenerateFitError",
    "PROFILE_FIELDS",
    "PROFILES_ENV",
    "dbm_to_mw",
    "power_slopes",
    "builtin_profiles",
    "load_profiles",
    "write_profiles",
    "get_profile",
    "fit_profile",
    "expected_energy",
    "energy_from_delay",
    "efficiency",
    "avg_power",
    "scale_parameter",
]

PROFILES_ENV = "RATPC_PROFILES"
PROFILE_FIELDS = ("name", "rho_id", "gamma_xg", "gamma_xr", "alpha0", "alpha1", "alpha2", "beta0", "beta1")


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    rho_id: float  # W
    gamma_xg: float  # J/frame
    gamma_xr: float  # J/frame
    alpha: tuple[float, float, float]  # W, W/Mbps, W/mW
    beta: tuple[float, float]  # W, W/Mbps

    def __post_init__(self):
        if self.rho_id <= 0:
            raise ValueError(f"{self.name}: rho_id must be positive")

    def rho_tx(self, mcs: float, txp_mw: float) -> float:
        a0, a1, a2 = self.alpha
        return a0 + a1 * mcs + a2 * txp_mw

    def rho_rx(self, mcs: float) -> float:
        b0, b1 = self.beta
        return b0 + b1 * mcs


@dataclass(frozen=True)
class EnergyBreakdown:
    e_succ: float  # J
    e_fail: float  # J
    e_frame: float  # J, expected energy per frame handed to the MAC
    mu: float  # bits per Joule
    p_succ: float


@dataclass(frozen=True)
class TrafficLoad:
    tau_tx: float = 0.0
    tau_rx: float = 0.0
    lambda_g: float = 0.0  # frames/s
    lambda_r: float = 0.0

    def __post_init__(self):
        if min(self.tau_tx, self.tau_rx, self.lambda_g, self.lambda_r) < 0:
            raise ValueError("traffic load components must be non-negative")
        if self.tau_tx + self.tau_rx > 1.0 + 1e-12:
            raise ValueError("airtime fractions exceed 1")


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def power_slopes(profile: DeviceProfile, mcs: float, txp_mw: float) -> tuple[float, float]:
    """(rho_tx, rho_rx) in W at the given MCS (Mbps) and TXP (mW)."""
    return profile.rho_tx(mcs, txp_mw), profile.rho_rx(mcs)


# --- profile files ------------------------------------------------------------


def _parse_profiles(text: str, source: str) -> list[DeviceProfile]:
    reader = csv.DictReader(io.StringIO(text))
    missing = set(PROFILE_FIELDS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{source}: missing columns {sorted(missing)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            v = {k: float(row[k]) for k in PROFILE_FIELDS[1:]}
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{source}:{lineno}: bad numeric field ({exc})") from None
        out.append(
            DeviceProfile(
                name=row["name"].strip(),
                rho_id=v["rho_id"],
                gamma_xg=v["gamma_xg"],
                gamma_xr=v["gamma_xr"],
                alpha=(v["alpha0"], v["alpha1"], v["alpha2"]),
                beta=(v["beta0"], v["beta1"]),
            )
        )
    if not out:
        raise ValueError(f"{source}: no profiles")
    return out


def load_profiles(path: str | os.PathLike) -> list[DeviceProfile]:
    path = Path(path)
    return _parse_profiles(path.read_text(encoding="utf-8"), str(path))


def write_profiles(profiles: Iterable[DeviceProfile], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_FIELDS)
        for p in profiles:
            w.writerow([p.name, repr(p.rho_id), repr(p.gamma_xg), repr(p.gamma_xr), *map(repr, p.alpha), *map(repr, p.beta)])


def builtin_profiles() -> list[DeviceProfile]:
    """The five bundled device profiles."""
    text = resources.files("ratpc").joinpath("data/profiles.csv").read_text(encoding="utf-8")
    return _parse_profiles(text, "profiles.csv")


def get_profile(name: str, profiles: Sequence[DeviceProfile] | None = None) -> DeviceProfile:
    for p in profiles if profiles is not None else builtin_profiles():
        if p.name == name:
            return p
    raise KeyError(f"unknown device profile {name!r}")


# --- regression -----------------------------------------------------------------


class DegenerateFitError(ValueError):
    """Raised when the samples cannot identify the linear model."""


@dataclass(frozen=True)
class ProfileFit:
    alpha: tuple[float, float, float]
    beta: tuple[float, float]
    alpha_se: tuple[float, float, float]
    beta_se: tuple[float, float]
    adj_r2_tx: float
    adj_r2_rx: float


def _ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    n, k = X.shape
    if np.linalg.matrix_rank(X) < k:
        raise DegenerateFitError(f"design matrix is rank deficient ({n} samples, {k} coefficients)")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    dof = n - k
    if ss_res <= 1e-24 * max(ss_tot, 1.0):
        adj = 1.0
    elif dof <= 0 or ss_tot == 0.0:
        adj = float("nan")
    else:
        adj = 1.0 - (ss_res / dof) / (ss_tot / (n - 1))
    if dof > 0:
        cov = ss_res / dof * np.linalg.inv(X.T @ X)
        se = np.sqrt(np.diag(cov))
    else:
        se = np.full(k, np.nan)
    return coef, se, adj


def fit_profile(
    tx_samples: Sequence[tuple[float, float, float]],
    rx_samples: Sequence[tuple[float, float]],
) -> ProfileFit:
    """Least-squares fit of the transmit and receive slope models.

    ``tx_samples`` are ``(mcs, txp_mw, rho_tx)`` and ``rx_samples`` are
    ``(mcs, rho_rx)``.
    """
    tx = np.asarray(tx_samples, dtype=float).reshape(-1, 3)
    rx = np.asarray(rx_samples, dtype=float).reshape(-1, 2)
    if len(tx) < 4 or len(np.unique(tx[:, 0])) < 2 or len(np.unique(tx[:, 1])) < 2:
        raise DegenerateFitError("need >= 4 transmit samples spanning >= 2 MCS and >= 2 TXP values")
    if len(rx) < 2:
        raise DegenerateFitError("need >= 2 receive samples")
    a, a_se, r2_tx = _ols(np.column_stack([np.ones(len(tx)), tx[:, 0], tx[:, 1]]), tx[:, 2])
    b, b_se, r2_rx = _ols(np.column_stack([np.ones(len(rx)), rx[:, 0]]), rx[:, 1])
    return ProfileFit(
        alpha=tuple(a.tolist()),
        beta=tuple(b.tolist()),
        alpha_se=tuple(a_se.tolist()),
        beta_se=tuple(b_se.tolist()),
        adj_r2_tx=r2_tx,
        adj_r2_rx=r2_rx,
    )


# --- per-frame energy ----------------------------------------------------------------


def energy_from_delay(
    d: DelayBreakdown, l: int, profile: DeviceProfile, txp_dbm: float
) -> EnergyBreakdown:
    """Weight an expected-delay decomposition by the device's state powers.

    Idle time is charged at rho_id, data airtime at rho_tx of the attempt's
    mode, ACK airtime at rho_rx of the ACK's mode.  The receive cross-factor
    does not apply: ACKs never reach the host.
    """
    txp_mw = dbm_to_mw(txp_dbm)
    rho_tx = np.array([profile.rho_tx(m.rate, txp_mw) for m in d.modes])
    rho_rx = np.array([profile.rho_rx(ack_mode_for(m).rate) for m in d.modes])
    # durations are in microseconds
    e_succ = 1e-6 * (profile.rho_id * d.succ_idle + float(d.succ_tx @ rho_tx) + float(d.succ_rx @ rho_rx))
    e_fail = 1e-6 * (profile.rho_id * d.fail_idle + float(d.fail_tx @ rho_tx))
    e_frame = profile.gamma_xg + (1.0 - d.p_succ) * e_fail + d.p_succ * e_succ
    mu = d.p_succ * l * 8 / e_frame if e_frame > 0 else 0.0
    return EnergyBreakdown(e_succ=e_succ, e_fail=e_fail, e_frame=e_frame, mu=mu, p_succ=d.p_succ)


def expected_energy(
    setup: TxSetup,
    profile: DeviceProfile,
    txp_dbm: float,
    per_model: PerModel | None = None,
    timing: TimingParams = TIMING,
) -> EnergyBreakdown:
    return energy_from_delay(expected_delay(setup, per_model, timing), setup.l, profile, txp_dbm)


def efficiency(
    setup: TxSetup,
    profile: DeviceProfile,
    txp_dbm: float,
    per_model: PerModel | None = None,
) -> float:
    """Expected delivered bits per Joule."""
    return expected_energy(setup, profile, txp_dbm, per_model).mu


def avg_power(profile: DeviceProfile, load: TrafficLoad, mcs: float, txp_mw: float) -> float:
    rho_tx, rho_rx = power_slopes(profile, mcs, txp_mw)
    return (
        profile.rho_id
        + rho_tx * load.tau_tx
        + rho_rx * load.tau_rx
        + profile.gamma_xg * load.lambda_g
        + profile.gamma_xr * load.lambda_r
    )


SCALABLE = ("rho_id", "rho_tx", "rho_rx", "gamma_xg")


def scale_parameter(profile: DeviceProfile, which: str, factor: float) -> DeviceProfile:
    """Copy of `profile` with one energy parameter multiplied by `factor`.

    Scaling ``rho_tx``/``rho_rx`` scales the whole alpha/beta vector.
    """
    if factor <= 0:
        raise ValueError("factor must be positive")
    if which == "rho_id":
        return replace(profile, rho_id=profile.rho_id * factor)
    if which == "gamma_xg":
        return replace(profile, gamma_xg=profile.gamma_xg * factor)
    if which == "rho_tx":
        return replace(profile, alpha=tuple(a * factor for a in profile.alpha))
    if which == "rho_rx":
        return replace(profile, beta=tuple(b * factor for b in profile.beta))
    raise ValueError(f"cannot scale {which!r}; choose one of {SCALABLE}")
