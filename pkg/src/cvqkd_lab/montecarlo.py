"""Pulse-level simulation of coherent-state transmission and homodyne detection.

Per pulse, in shot-noise units:

* Alice draws ``x_a, p_a ~ N(0, V-1)`` and Bob picks a quadrature bit.
* The measured signal quadrature (modulation plus vacuum) crosses the
  channel: ``q -> sqrt(T) q + N(0, 1 - T + T eps)``.
* The detector output follows the linearized nonideal homodyne form
  ``sqrt(eta I) (sqrt(eta) q + sqrt(1-eta) x_N) + x_el`` where ``I`` is the
  LO photon number of that pulse and ``x_el`` has the fixed variance
  ``eta * I_cal * n_el_cal`` set at calibration.

Random numbers are drawn in fixed-size blocks, each from its own
``SeedSequence(seed, spawn_key=(block,))`` stream, so a batch depends only on
``(seed, n)`` and not on how many threads produced it.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .model import ChannelModel, DetectorModel, ProtocolParams

BLOCK_SIZE = 1 << 16
RAIL_SIGMAS = 8.0
BATCH_COLUMNS = ("pulse_index", "x_a", "p_a", "theta", "lo_intensity", "raw_output", "saturated")


class EstimationError(ValueError):
    """Estimated transmittance is degenerate (non-positive correlation)."""


def default_workers() -> int:
    env = os.environ.get("CVQKD_LAB_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _blocks(n: int):
    return [(b, s, min(s + BLOCK_SIZE, n)) for b, s in enumerate(range(0, n, BLOCK_SIZE))]


# ---------------------------------------------------------------- LO profiles


@dataclass(frozen=True)
class ConstantLo:
    gain: float = 1.0


@dataclass(frozen=True)
class StochasticLo:
    """I.i.d. log-normal gains with mean ``mean_gain`` and relative std ``rel_std``."""

    rel_std: float
    seed: int = 0
    mean_gain: float = 1.0


@dataclass(frozen=True, eq=False)
class SequenceLo:
    """Explicit per-pulse gains (stored as a read-only float array)."""

    gains: np.ndarray

    def __post_init__(self) -> None:
        gains = np.array(self.gains, dtype=float)
        gains.flags.writeable = False
        object.__setattr__(self, "gains", gains)


LoProfile = Union[ConstantLo, StochasticLo, SequenceLo]


def lo_gains(profile: LoProfile, n: int) -> np.ndarray:
    """Per-pulse multiplicative LO gains for ``n`` pulses."""
    if isinstance(profile, ConstantLo):
        gains = np.full(n, float(profile.gain))
    elif isinstance(profile, StochasticLo):
        s2 = math.log1p(profile.rel_std**2)
        gains = np.empty(n)
        for b, start, stop in _blocks(n):
            z = _block_rng(profile.seed, b).standard_normal(stop - start)
            gains[start:stop] = profile.mean_gain * np.exp(math.sqrt(s2) * z - s2 / 2.0)
    elif isinstance(profile, SequenceLo):
        if len(profile.gains) != n:
            raise ValueError(f"sequence has {len(profile.gains)} gains for {n} pulses")
        gains = profile.gains
    else:
        raise TypeError(f"unknown LO profile {profile!r}")
    if not np.all(gains > 0):
        raise ValueError("LO gains must be positive")
    return gains


# ---------------------------------------------------------------- simulation


@dataclass(frozen=True)
class PulseBatch:
    n: int
    seed: int
    x_a: np.ndarray
    p_a: np.ndarray
    theta_bits: np.ndarray  # 0 -> x quadrature, 1 -> p quadrature
    lo_intensity: np.ndarray
    raw_output: np.ndarray
    saturated: np.ndarray
    rail: float = math.inf

    def matched_alice(self) -> np.ndarray:
        """Alice's value for the quadrature Bob measured on each pulse."""
        return np.where(self.theta_bits == 1, self.p_a, self.x_a)


def analytic_bob_variance(V, T, eps, eta, n_el) -> float:
    """Normalized variance of Bob's outcome; ``n_el`` is the noise actually present."""
    return eta * T * (V - 1.0) + 1.0 + eta * T * eps + n_el


def simulate_batch(
    params: ProtocolParams,
    channel: ChannelModel,
    detector: DetectorModel,
    lo: LoProfile,
    n: int,
    seed: int,
    rail_sigmas: float = RAIL_SIGMAS,
    workers: int | None = None,
) -> PulseBatch:
    if n < 1:
        raise ValueError("n must be >= 1")
    V, T, eps = params.V, channel.T, channel.epsilon
    eta, i_cal = detector.eta, detector.lo_photons_cal
    sig_mod = math.sqrt(V - 1.0)
    sig_chan = math.sqrt(1.0 - T + T * eps)
    sig_el = math.sqrt(eta * i_cal * detector.n_el_cal)
    rail = rail_sigmas * math.sqrt(eta * i_cal * analytic_bob_variance(V, T, eps, eta, detector.n_el_cal))

    intensity = i_cal * lo_gains(lo, n)
    x_a = np.empty(n)
    p_a = np.empty(n)
    theta = np.empty(n, dtype=np.int8)
    raw = np.empty(n)

    def run(block):
        b, start, stop = block
        m = stop - start
        rng = _block_rng(seed, b)
        xa = rng.normal(0.0, sig_mod, m)
        pa = rng.normal(0.0, sig_mod, m)
        th = rng.integers(0, 2, m, dtype=np.int8)
        q = np.where(th == 1, pa, xa) + rng.standard_normal(m)
        q = math.sqrt(T) * q + sig_chan * rng.standard_normal(m)
        x_n = rng.standard_normal(m)
        x_el = sig_el * rng.standard_normal(m)
        amp = np.sqrt(eta * intensity[start:stop])
        x_a[start:stop] = xa
        p_a[start:stop] = pa
        theta[start:stop] = th
        raw[start:stop] = amp * (math.sqrt(eta) * q + math.sqrt(1.0 - eta) * x_n) + x_el

    blocks = _blocks(n)
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(blocks) == 1:
        for block in blocks:
            run(block)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))

    return PulseBatch(
        n=n,
        seed=seed,
        x_a=x_a,
        p_a=p_a,
        theta_bits=theta,
        lo_intensity=intensity,
        raw_output=raw,
        saturated=np.abs(raw) > rail,
        rail=rail,
    )


def normalize_batch(batch: PulseBatch, detector: DetectorModel, scheme: str = "instantaneous") -> np.ndarray:
    """Scale raw outputs to shot-noise units.

    ``"instantaneous"`` divides each pulse by ``sqrt(eta * I_i)`` using its own
    LO intensity; ``"calibrated"`` divides every pulse by the calibration
    value ``sqrt(eta * I_cal)``.
    """
    if scheme == "instantaneous":
        if np.any(batch.lo_intensity <= 0):
            raise ValueError("zero LO intensity cannot be normalized")
        return batch.raw_output / np.sqrt(detector.eta * batch.lo_intensity)
    if scheme == "calibrated":
        return batch.raw_output / math.sqrt(detector.eta * detector.lo_photons_cal)
    raise ValueError(f"unknown normalization scheme {scheme!r}")


# ---------------------------------------------------------------- stabilizer


@dataclass(frozen=True)
class StabilizerConfig:
    tap_fraction: float = 0.01
    target_intensity: float = 1e9
    gain_min: float = 0.01
    gain_max: float = 100.0
    monitor_noise_rel: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.tap_fraction < 1:
            raise ValueError("tap_fraction must lie in (0, 1)")
        if not self.gain_min <= 1 <= self.gain_max:
            raise ValueError("need gain_min <= 1 <= gain_max")
        if self.target_intensity <= 0 or self.monitor_noise_rel < 0:
            raise ValueError("target_intensity must be > 0 and monitor_noise_rel >= 0")


@dataclass(frozen=True)
class StabilizationResult:
    gains: np.ndarray
    stabilized: np.ndarray
    residuals: np.ndarray
    clipped: int


def stabilize_lo(intensities, config: StabilizerConfig, seed: int = 0) -> StabilizationResult:
    """Tap, measure and re-scale each LO pulse towards the target intensity.

    The monitor reading carries multiplicative Gaussian noise of relative
    size ``monitor_noise_rel`` (drawn block-wise from ``seed``).
    """
    intensities = np.asarray(intensities, dtype=float)
    n = intensities.size
    measured = intensities.copy()
    if config.monitor_noise_rel > 0:
        for b, start, stop in _blocks(n):
            z = _block_rng(seed, b).standard_normal(stop - start)
            measured[start:stop] *= 1.0 + config.monitor_noise_rel * z
    through = (1.0 - config.tap_fraction) * intensities
    wanted = config.target_intensity / ((1.0 - config.tap_fraction) * measured)
    gains = np.clip(wanted, config.gain_min, config.gain_max)
    stabilized = gains * through
    residuals = np.abs(stabilized - config.target_intensity) / config.target_intensity
    clipped = int(np.count_nonzero(gains != wanted))
    return StabilizationResult(gains=gains, stabilized=stabilized, residuals=residuals, clipped=clipped)


# ---------------------------------------------------------------- estimation


@dataclass(frozen=True)
class EstimationReport:
    eta_t_hat: float
    t_hat: float
    eps_hat: float
    var_y: float
    cov_ay: float
    n_used: int
    standard_errors: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "eta_t_hat": self.eta_t_hat,
            "t_hat": self.t_hat,
            "eps_hat": self.eps_hat,
            "var_y": self.var_y,
            "cov_ay": self.cov_ay,
            "n_used": self.n_used,
            **{f"se_{k}": v for k, v in self.standard_errors.items()},
        }


def _moments(alice, bob, V, eta, n_el, true_t, nominal):
    cov = float(np.mean(alice * bob) - np.mean(alice) * np.mean(bob))
    var_y = float(np.var(bob))
    var_a = V - 1.0 if nominal else float(np.var(alice))
    if true_t is None:
        if not cov > 0 or not var_a > 0:
            raise EstimationError(f"degenerate Alice-Bob covariance {cov!r}")
        eta_t = (cov / var_a) ** 2
    else:
        eta_t = eta * true_t
    eps = (var_y - eta_t * var_a - 1.0 - n_el) / eta_t
    return eta_t, eps, var_y, cov


def estimate_parameters(
    alice,
    bob,
    params: ProtocolParams,
    trusted: DetectorModel,
    true_t: float | None = None,
    n_splits: int = 20,
    modulation_variance: str = "sample",
) -> EstimationReport:
    """Estimate transmittance and excess noise from matched quadrature pairs.

    ``alice`` must already hold the quadrature Bob measured on each pulse
    (see :meth:`PulseBatch.matched_alice`). Bob's assumed electronic noise is
    ``trusted.n_el``. ``modulation_variance="sample"`` uses the empirical
    variance of Alice's data where the model has ``V - 1``; this removes the
    modulation's own sampling noise from the excess-noise estimate.
    ``"nominal"`` uses ``V - 1`` as given. Standard errors come from
    ``n_splits`` contiguous sub-batches.
    """
    if modulation_variance not in ("sample", "nominal"):
        raise ValueError(f"unknown modulation_variance {modulation_variance!r}")
    nominal = modulation_variance == "nominal"
    alice = np.asarray(alice, dtype=float)
    bob = np.asarray(bob, dtype=float)
    if alice.shape != bob.shape or alice.size == 0:
        raise ValueError("alice and bob must be non-empty and equally long")
    V, eta, n_el = params.V, trusted.eta, trusted.n_el
    eta_t, eps, var_y, cov = _moments(alice, bob, V, eta, n_el, true_t, nominal)

    parts = np.array(
        [
            _moments(a, b, V, eta, n_el, true_t, nominal)
            for a, b in zip(np.array_split(alice, n_splits), np.array_split(bob, n_splits))
        ]
    )
    se = parts.std(axis=0, ddof=1) / math.sqrt(n_splits)
    return EstimationReport(
        eta_t_hat=eta_t,
        t_hat=eta_t / eta,
        eps_hat=eps,
        var_y=var_y,
        cov_ay=cov,
        n_used=int(alice.size),
        standard_errors={
            "eta_t_hat": float(se[0]),
            "t_hat": float(se[0] / eta),
            "eps_hat": float(se[1]),
            "var_y": float(se[2]),
            "cov_ay": float(se[3]),
        },
    )


# ---------------------------------------------------------------- export


def write_batch(batch: PulseBatch, path) -> None:
    """Write a batch as CSV with columns ``BATCH_COLUMNS`` (theta as 0/1 bit)."""
    table = np.column_stack(
        (
            np.arange(batch.n),
            batch.x_a,
            batch.p_a,
            batch.theta_bits,
            batch.lo_intensity,
            batch.raw_output,
            batch.saturated,
        )
    )
    fmt = ["%d", "%.12g", "%.12g", "%d", "%.12g", "%.12g", "%d"]
    np.savetxt(Path(path), table, fmt=fmt, delimiter=",", header=",".join(BATCH_COLUMNS), comments="")


def read_batch(path) -> dict[str, np.ndarray]:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != BATCH_COLUMNS:
            raise ValueError(f"unexpected batch header {header}")
        rows = np.array([[float(v) for v in row] for row in reader])
    if rows.size == 0:
        rows = rows.reshape(0, len(BATCH_COLUMNS))
    return {name: rows[:, i] for i, name in enumerate(BATCH_COLUMNS)}
