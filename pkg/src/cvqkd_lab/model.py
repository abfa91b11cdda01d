"""Domain types and Gaussian-state algebra shared by every other module.

Units: quadrature variances are in shot-noise units (vacuum variance = 1),
entropies and rates in bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

# Roundoff allowances for boundary (pure-state) cases.
RADICAND_TOL = 1e-9
EIGEN_TOL = 1e-9
UNPHYSICAL_TOL = 1e-6


class UnphysicalStateError(ValueError):
    """A covariance matrix violates the uncertainty principle beyond roundoff."""


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def db_to_transmission(loss_db: float) -> float:
    loss_db = _check_finite("loss_db", loss_db)
    if loss_db < 0:
        raise ValueError(f"loss_db must be >= 0, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def transmission_to_db(transmission: float) -> float:
    transmission = _check_finite("transmission", transmission)
    if not 0 < transmission <= 1:
        raise ValueError(f"transmission must lie in (0, 1], got {transmission}")
    return -10.0 * math.log10(transmission)


def g_entropy(x: float) -> float:
    """Entropy of a thermal state with mean photon number ``x``.

    Evaluates ``(x+1) log2(x+1) - x log2 x`` in the rearranged form
    ``log2(x+1) + x log2(1 + 1/x)``, which avoids the cancellation between
    the two large terms when ``x`` is big.
    """
    x = _check_finite("x", x)
    if x < 0:
        raise ValueError(f"g_entropy requires x >= 0, got {x}")
    if x == 0:
        return 0.0
    return (math.log1p(x) + x * math.log1p(1.0 / x)) / math.log(2.0)


def entropy_of_eigenvalue(lam: float) -> float:
    """Von Neumann entropy contribution ``G((lam - 1) / 2)`` of one mode."""
    if lam < 1.0 - EIGEN_TOL:
        raise UnphysicalStateError(f"symplectic eigenvalue {lam!r} below 1")
    return g_entropy(max((lam - 1.0) / 2.0, 0.0))


@dataclass(frozen=True)
class ProtocolParams:
    V: float = 40.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        _check_finite("V", self.V)
        _check_finite("beta", self.beta)
        if self.V < 1:
            raise ValueError(f"V must be >= 1 SNU, got {self.V}")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")


@dataclass(frozen=True)
class ChannelModel:
    """Lossy, noisy line. Build with :meth:`from_loss` or :meth:`from_transmission`."""

    loss_db: float
    T: float
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        _check_finite("loss_db", self.loss_db)
        _check_finite("T", self.T)
        _check_finite("epsilon", self.epsilon)
        if self.loss_db < 0:
            raise ValueError(f"loss_db must be >= 0, got {self.loss_db}")
        if not 0 < self.T <= 1:
            raise ValueError(f"T must lie in (0, 1], got {self.T}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        expected = db_to_transmission(self.loss_db)
        if not math.isclose(self.T, expected, rel_tol=1e-12, abs_tol=0.0):
            raise ValueError(f"T={self.T} inconsistent with loss_db={self.loss_db}")

    @classmethod
    def from_loss(cls, loss_db: float, epsilon: float = 0.0) -> ChannelModel:
        return cls(float(loss_db), db_to_transmission(loss_db), float(epsilon))

    @classmethod
    def from_transmission(cls, T: float, epsilon: float = 0.0) -> ChannelModel:
        return cls(transmission_to_db(T), float(T), float(epsilon))

    def with_epsilon(self, epsilon: float) -> ChannelModel:
        return ChannelModel(self.loss_db, self.T, float(epsilon))


@dataclass(frozen=True)
class DetectorModel:
    """Balanced homodyne detector as calibrated, plus the LO gain applied since.

    ``n_el_cal`` is the electronic noise normalized at the calibration LO
    level; the electronic variance itself is fixed, so scaling the LO by
    ``lo_gain`` divides the normalized noise by the same factor.
    """

    eta: float = 0.606
    n_el_cal: float = 0.041
    lo_gain: float = 1.0
    lo_photons_cal: float = 1e9

    def __post_init__(self) -> None:
        for name in ("eta", "n_el_cal", "lo_gain", "lo_photons_cal"):
            _check_finite(name, getattr(self, name))
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.n_el_cal < 0:
            raise ValueError(f"n_el_cal must be >= 0, got {self.n_el_cal}")
        if self.lo_gain <= 0:
            raise ValueError(f"lo_gain must be > 0, got {self.lo_gain}")
        if self.lo_photons_cal <= 0:
            raise ValueError(f"lo_photons_cal must be > 0, got {self.lo_photons_cal}")

    @property
    def n_el(self) -> float:
        return self.n_el_cal / self.lo_gain

    def with_gain(self, gain: float) -> DetectorModel:
        return DetectorModel(self.eta, self.n_el_cal, float(gain), self.lo_photons_cal)


@dataclass(frozen=True)
class NoiseBudget:
    chi_c: float
    chi_d: float
    chi_t: float
    # None when eta == 1: the noise-EPR variance is undefined there.
    epr_noise_variance: float | None


@dataclass(frozen=True)
class TwoModeCovariance:
    """``[[a I, c Z], [c Z, b I]]`` in (a, b, c) form."""

    a: float
    b: float
    c: float

    @property
    def delta(self) -> float:
        return self.a * self.a + self.b * self.b - 2.0 * self.c * self.c

    @property
    def det(self) -> float:
        """Square root of the full determinant, ``ab - c^2``."""
        return self.a * self.b - self.c * self.c


@dataclass(frozen=True)
class KeyRateBreakdown:
    i_ab: float
    s_e: float
    s_e_given_b: float
    chi_be: float
    k_raw: float
    lambdas: tuple[float, ...]
    beta: float = 1.0
    chi_be_roundoff: bool = False

    @property
    def k_clamped(self) -> float:
        return max(self.k_raw, 0.0)


@dataclass(frozen=True)
class PerfectHomodyne:
    name = "perfect_homodyne"


@dataclass(frozen=True)
class Heterodyne:
    name = "heterodyne"


@dataclass(frozen=True)
class NoisyHomodyne:
    detector: DetectorModel = field(default_factory=DetectorModel)
    name = "noisy_homodyne"


Protocol = Union[PerfectHomodyne, Heterodyne, NoisyHomodyne]


def added_noise(eta: float, n_el: float) -> float:
    """Detection noise referred to the detector input: ``(1-eta)/eta + n_el/eta``."""
    return (1.0 - eta) / eta + n_el / eta


def noise_budget(channel: ChannelModel, detector: DetectorModel) -> NoiseBudget:
    T = channel.T
    if T <= 0:
        raise ValueError("transmission must be > 0")
    eta, n_el = detector.eta, detector.n_el
    chi_c = (1.0 - T) / T + channel.epsilon
    if eta == 1.0:
        chi_d = n_el
        epr = None
    else:
        chi_d = added_noise(eta, n_el)
        epr = 1.0 + n_el / (1.0 - eta)
    return NoiseBudget(chi_c=chi_c, chi_d=chi_d, chi_t=chi_c + chi_d / T, epr_noise_variance=epr)


def covariance_from_link(params: ProtocolParams, channel: ChannelModel) -> TwoModeCovariance:
    V, T = params.V, channel.T
    chi_c = (1.0 - T) / T + channel.epsilon
    return TwoModeCovariance(a=V, b=T * (V + chi_c), c=math.sqrt(T * (V * V - 1.0)))


def _clamped_radicand(value: float, what: str) -> float:
    if value < 0:
        if value < -RADICAND_TOL:
            raise UnphysicalStateError(f"{what} radicand {value!r} is negative")
        return 0.0
    return value


def symplectic_pair(cm: TwoModeCovariance) -> tuple[float, float]:
    """Symplectic eigenvalues ``(lam1, lam2)`` of a two-mode (a, b, c) matrix, ascending.

    Uses ``delta^2 - 4 D^2 = (a-b)^2 (a+b-2c)(a+b+2c)`` for the radicand and
    ``lam1^2 = 2 D^2 / (delta + r)`` for the small root; both forms keep the
    pure-state case ``lam1 = 1`` accurate when ``a`` and ``b`` are large.
    """
    a, b, c = cm.a, cm.b, cm.c
    delta, D = cm.delta, cm.det
    radicand = _clamped_radicand((a - b) ** 2 * (a + b - 2.0 * c) * (a + b + 2.0 * c), "symplectic")
    r = math.sqrt(radicand)
    big = (delta + r) / 2.0
    if big <= 0:
        raise UnphysicalStateError(f"non-positive symplectic spectrum for {cm}")
    lam2 = math.sqrt(big)
    lam1 = abs(D) / lam2
    if lam1 < 1.0 - UNPHYSICAL_TOL:
        raise UnphysicalStateError(f"symplectic eigenvalue {lam1!r} < 1 for {cm}")
    return lam1, lam2
