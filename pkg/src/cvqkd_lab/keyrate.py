"""Reverse-reconciliation key rates for Gaussian-modulated coherent states.

Three detection schemes share one covariance matrix and one ``S(E)``; they
differ in the mutual information and in Eve's entropy conditioned on Bob's
outcome.
"""
from __future__ import annotations

import math

from .model import (
    EIGEN_TOL,
    RADICAND_TOL,
    ChannelModel,
    Heterodyne,
    KeyRateBreakdown,
    NoisyHomodyne,
    PerfectHomodyne,
    Protocol,
    ProtocolParams,
    TwoModeCovariance,
    UnphysicalStateError,
    covariance_from_link,
    entropy_of_eigenvalue,
    noise_budget,
    symplectic_pair,
)

__all__ = [
    "mutual_information",
    "holevo_bound",
    "key_rate",
    "noisy_homodyne_key_rate",
    "conditional_eigenvalues",
]


def _chi_c(channel: ChannelModel) -> float:
    return (1.0 - channel.T) / channel.T + channel.epsilon


def _protocol_chi_d(protocol: Protocol, channel: ChannelModel) -> float | None:
    if isinstance(protocol, NoisyHomodyne):
        return noise_budget(channel, protocol.detector).chi_d
    if isinstance(protocol, (PerfectHomodyne, Heterodyne)):
        return None
    raise TypeError(f"unknown protocol {protocol!r}")


def _mutual_information(
    protocol: Protocol, V: float, channel: ChannelModel, chi_d: float | None
) -> float:
    chi_c = _chi_c(channel)
    if isinstance(protocol, Heterodyne):
        T = channel.T
        return math.log2((T * (V + chi_c) + 1.0) / (T * (1.0 + chi_c) + 1.0))
    chi = chi_c if chi_d is None else chi_c + chi_d / channel.T
    return 0.5 * math.log2((V + chi) / (1.0 + chi))


def mutual_information(protocol: Protocol, params: ProtocolParams, channel: ChannelModel) -> float:
    """Alice-Bob mutual information in bits per pulse."""
    return _mutual_information(protocol, params.V, channel, _protocol_chi_d(protocol, channel))


def conditional_eigenvalues(
    protocol: Protocol,
    cm: TwoModeCovariance,
    chi_d: float | None = None,
    pair: tuple[float, float] | None = None,
) -> tuple[float, ...]:
    """Symplectic eigenvalues of Eve's state conditioned on Bob's measurement.

    One value for perfect homodyne and heterodyne, two for noisy homodyne
    (``chi_d`` is then the trusted added noise). ``pair`` may pass in the
    already computed ``symplectic_pair(cm)``.
    """
    a, b, c = cm.a, cm.b, cm.c
    D = cm.det
    if isinstance(protocol, Heterodyne):
        # a - c^2/(b+1), rearranged
        return ((D + a) / (b + 1.0),)
    if isinstance(protocol, PerfectHomodyne) or chi_d is None:
        # sqrt(a (a - c^2/b)), rearranged
        return (math.sqrt(a * D / b),)
    lam1, lam2 = symplectic_pair(cm) if pair is None else pair
    # Solve for y = lam^2 - 1 instead of lam^2: near a pure state both roots
    # approach 1 and the unshifted discriminant loses half the digits.
    s1 = max((lam1 - 1.0) * (lam1 + 1.0), 0.0)
    s2 = max((lam2 - 1.0) * (lam2 + 1.0), 0.0)
    total = b * (a - 1.0) * (a + 1.0) - a * c * c + chi_d * (s1 + s2)
    if total < 0:
        if total < -RADICAND_TOL * max(1.0, b * a * a):
            raise UnphysicalStateError(f"conditional trace {total!r} is negative for {cm}")
        total = 0.0
    y_sum = total / (b + chi_d)
    y_prod = chi_d * s1 * s2 / (b + chi_d)
    radicand = y_sum * y_sum - 4.0 * y_prod
    if radicand < 0:
        if radicand < -RADICAND_TOL * max(1.0, y_sum * y_sum):
            raise UnphysicalStateError(f"conditional radicand {radicand!r} is negative")
        radicand = 0.0
    y_hi = (y_sum + math.sqrt(radicand)) / 2.0
    y_lo = y_prod / y_hi if y_hi > 0 else 0.0
    return (math.sqrt(1.0 + y_lo), math.sqrt(1.0 + y_hi))


def _holevo(
    protocol: Protocol, params: ProtocolParams, channel: ChannelModel, chi_d: float | None
) -> tuple[float, float, float, tuple[float, ...], bool]:
    cm = covariance_from_link(params, channel)
    lam1, lam2 = symplectic_pair(cm)
    cond = conditional_eigenvalues(protocol, cm, chi_d, (lam1, lam2))
    s_e = entropy_of_eigenvalue(lam1) + entropy_of_eigenvalue(lam2)
    s_e_given_b = sum(entropy_of_eigenvalue(lam) for lam in cond)
    chi_be = s_e - s_e_given_b
    roundoff = False
    if chi_be < 0:
        if chi_be < -EIGEN_TOL:
            raise UnphysicalStateError(f"negative Holevo bound {chi_be!r}")
        chi_be, roundoff = 0.0, True
    return chi_be, s_e, s_e_given_b, (lam1, lam2) + cond, roundoff


def holevo_bound(
    protocol: Protocol, params: ProtocolParams, channel: ChannelModel
) -> tuple[float, tuple[float, ...]]:
    """Eve's Holevo information on Bob's data and the eigenvalues used for it."""
    chi_be, _, _, lambdas, _ = _holevo(protocol, params, channel, _protocol_chi_d(protocol, channel))
    return chi_be, lambdas


def _breakdown(
    protocol: Protocol, params: ProtocolParams, channel: ChannelModel, chi_d: float | None
) -> KeyRateBreakdown:
    i_ab = _mutual_information(protocol, params.V, channel, chi_d)
    chi_be, s_e, s_e_given_b, lambdas, roundoff = _holevo(protocol, params, channel, chi_d)
    return KeyRateBreakdown(
        i_ab=i_ab,
        s_e=s_e,
        s_e_given_b=s_e_given_b,
        chi_be=chi_be,
        k_raw=params.beta * i_ab - chi_be,
        lambdas=lambdas,
        beta=params.beta,
        chi_be_roundoff=roundoff,
    )


def key_rate(protocol: Protocol, params: ProtocolParams, channel: ChannelModel) -> KeyRateBreakdown:
    """Full key-rate breakdown; ``k_raw`` is left unclamped and may be negative."""
    return _breakdown(protocol, params, channel, _protocol_chi_d(protocol, channel))


def noisy_homodyne_key_rate(
    params: ProtocolParams, channel: ChannelModel, chi_d: float
) -> KeyRateBreakdown:
    """Noisy-homodyne breakdown parametrized directly by the trusted added noise."""
    if not chi_d >= 0:
        raise ValueError(f"chi_d must be >= 0, got {chi_d}")
    return _breakdown(NoisyHomodyne(), params, channel, float(chi_d))
