"""LO-intensity deception at constant total noise.

Raising the LO by a gain ``G`` divides the normalized electronic noise by
``G``. If Eve adds exactly the excess noise that keeps the total noise
referred to the channel input unchanged, Bob sees the same statistics but
attributes too much of them to trusted detector noise.
"""
from __future__ import annotations

from dataclasses import dataclass

from .keyrate import key_rate
from .model import ChannelModel, DetectorModel, NoisyHomodyne, ProtocolParams, noise_budget


@dataclass(frozen=True)
class AttackScenario:
    believed_eps: float
    believed_n_el: float
    actual_eps: float
    actual_n_el: float
    gain: float
    eta: float
    channel: ChannelModel

    def believed_detector(self) -> DetectorModel:
        return DetectorModel(eta=self.eta, n_el_cal=self.believed_n_el)

    def actual_detector(self) -> DetectorModel:
        return DetectorModel(eta=self.eta, n_el_cal=self.actual_n_el)

    def chi_t(self, which: str = "actual") -> float:
        if which == "actual":
            eps, det = self.actual_eps, self.actual_detector()
        elif which == "believed":
            eps, det = self.believed_eps, self.believed_detector()
        else:
            raise ValueError(which)
        return noise_budget(self.channel.with_epsilon(eps), det).chi_t


@dataclass(frozen=True)
class RateGap:
    k_believed: float
    k_true: float
    gap: float


def constant_total_noise_scenario(
    base_eps: float,
    n_el_cal: float,
    eta: float,
    channel: ChannelModel,
    gain: float,
) -> AttackScenario:
    if gain < 1:
        raise ValueError(f"gain must be >= 1 for a noise-hiding scenario, got {gain}")
    hidden = n_el_cal * (1.0 - 1.0 / gain) / (eta * channel.T)
    return AttackScenario(
        believed_eps=float(base_eps),
        believed_n_el=float(n_el_cal),
        actual_eps=base_eps + hidden,
        actual_n_el=n_el_cal / gain,
        gain=float(gain),
        eta=float(eta),
        channel=channel.with_epsilon(base_eps),
    )


def rate_gap(scenario: AttackScenario, params: ProtocolParams) -> RateGap:
    """Key rate Bob computes from his calibration versus the rate he really has."""
    believed = key_rate(
        NoisyHomodyne(scenario.believed_detector()),
        params,
        scenario.channel.with_epsilon(scenario.believed_eps),
    ).k_raw
    true = key_rate(
        NoisyHomodyne(scenario.actual_detector()),
        params,
        scenario.channel.with_epsilon(scenario.actual_eps),
    ).k_raw
    return RateGap(k_believed=believed, k_true=true, gap=believed - true)
