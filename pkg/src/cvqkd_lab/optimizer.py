"""Optimal trusted added noise, tolerable-excess-noise frontier, LO gain plans."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import (
    ChannelModel,
    DetectorModel,
    Heterodyne,
    NoisyHomodyne,
    PerfectHomodyne,
    Protocol,
    ProtocolParams,
    noise_budget,
)

CHI_D_MAX = 100.0
CHI_D_TOL = 1e-6
EPS_CAP = 10.0
EPS_TOL = 1e-10
ROOT_TOL = 1e-6
WITNESS_REL = 1e-3
# Hardware bound: at most one decade of LO gain.
MAX_HARDWARE_GAIN = 10.0


class BracketError(RuntimeError):
    """The key rate does not change sign on the allowed excess-noise range."""


@dataclass(frozen=True)
class AddedNoiseOptimum:
    chi_d_star: float
    k_star: float
    k_zero: float
    evaluations: int
    grid: np.ndarray


@dataclass(frozen=True)
class FrontierPoint:
    loss_db: float
    eps_max: float
    chi_d_star: float
    converged: bool
    iterations: int
    no_key: bool = False
    k_at_root: float = 0.0
    k_below: float = math.nan
    k_above: float = math.nan


@dataclass(frozen=True)
class GainPlan:
    chi_d_star: float
    n_el_target: float
    gain: float
    feasible: bool
    within_hardware_range: bool


def added_noise_grid(chi_d_max: float = CHI_D_MAX, n: int = 64) -> np.ndarray:
    """Sorted search grid on ``[0, chi_d_max]``: zero, log-spaced and linear points.

    The log half resolves small optima, the linear half covers the range
    evenly; together they give ``n`` distinct points.
    """
    if chi_d_max <= 0:
        raise ValueError(f"chi_d_max must be > 0, got {chi_d_max}")
    n_log = n // 2
    n_lin = n - 1 - n_log
    log_pts = chi_d_max * np.logspace(-6.0, 0.0, n_log)
    lin_pts = chi_d_max * np.arange(1, n_lin + 1) / (n_lin + 1)
    grid = np.unique(np.concatenate(([0.0], log_pts, lin_pts)))
    grid[-1] = chi_d_max
    return np.ascontiguousarray(grid, dtype=float)


def optimal_added_noise(
    params: ProtocolParams,
    channel: ChannelModel,
    chi_d_max: float = CHI_D_MAX,
    tol: float = CHI_D_TOL,
) -> AddedNoiseOptimum:
    grid = added_noise_grid(chi_d_max)
    chi, k, k0, evals = kernels.best_added_noise(
        params.V, channel.T, channel.epsilon, params.beta, grid, tol
    )
    return AddedNoiseOptimum(chi_d_star=chi, k_star=k, k_zero=k0, evaluations=int(evals), grid=grid)


def _rate_function(protocol: Protocol, params: ProtocolParams, T: float, optimize_chi_d: bool, chi_d_max: float):
    V, beta = params.V, params.beta
    if optimize_chi_d:
        grid = added_noise_grid(chi_d_max)

        def f(eps):
            chi, k, _, _ = kernels.best_added_noise(V, T, eps, beta, grid, CHI_D_TOL)
            return k, chi

    elif isinstance(protocol, PerfectHomodyne):

        def f(eps):
            return kernels.rate_homodyne(V, T, eps, beta), 0.0

    elif isinstance(protocol, Heterodyne):

        def f(eps):
            return kernels.rate_heterodyne(V, T, eps, beta), 0.0

    elif isinstance(protocol, NoisyHomodyne):
        chi_d = noise_budget(ChannelModel.from_transmission(T), protocol.detector).chi_d

        def f(eps):
            return kernels.rate_noisy(V, T, eps, chi_d, beta), chi_d

    else:
        raise TypeError(f"unknown protocol {protocol!r}")
    return f


def tolerable_excess_noise(
    protocol: Protocol,
    params: ProtocolParams,
    loss_db: float,
    optimize_chi_d: bool = False,
    chi_d_max: float = CHI_D_MAX,
    eps_cap: float = EPS_CAP,
) -> FrontierPoint:
    """Largest excess noise keeping the key rate positive at ``loss_db``.

    With ``optimize_chi_d`` the rate at each trial excess noise is the
    noisy-homodyne rate maximized over the trusted added noise; otherwise the
    protocol is evaluated as given. Bisection runs on the excess-noise
    interval alone (a tiny ``|K|`` is not trusted as convergence, because
    the optimized rate flattens towards zero beyond the frontier) and the
    result carries the rate on both sides of the root as a witness.
    """
    T = ChannelModel.from_loss(loss_db).T
    f = _rate_function(protocol, params, T, optimize_chi_d, chi_d_max)

    k0, chi0 = f(0.0)
    if not k0 > 0:
        return FrontierPoint(loss_db, 0.0, chi0, True, 0, no_key=True, k_at_root=k0)

    lo, hi = 0.0, min(0.01, eps_cap)
    k_hi, _ = f(hi)
    iterations = 0
    while k_hi > 0:
        if hi >= eps_cap:
            raise BracketError(f"key rate still positive at eps={eps_cap} (loss {loss_db} dB)")
        lo, hi = hi, min(2.0 * hi, eps_cap)
        k_hi, _ = f(hi)
        iterations += 1

    while hi - lo > EPS_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        k_mid, _ = f(mid)
        if k_mid > 0:
            lo = mid
        else:
            hi = mid
        iterations += 1

    eps_max = lo
    k_root, chi_star = f(eps_max)
    k_below, _ = f(eps_max * (1.0 - WITNESS_REL))
    k_above, _ = f(eps_max * (1.0 + WITNESS_REL))
    converged = abs(k_root) <= ROOT_TOL and k_below > 0 and k_above < 0
    return FrontierPoint(
        loss_db=float(loss_db),
        eps_max=eps_max,
        chi_d_star=chi_star,
        converged=converged,
        iterations=iterations,
        k_at_root=k_root,
        k_below=k_below,
        k_above=k_above,
    )


def electronic_noise_for(eta: float, chi_d: float) -> float:
    """Electronic noise realizing ``chi_d`` at fixed efficiency (may be negative)."""
    return eta * chi_d - (1.0 - eta)


def _plan(detector: DetectorModel, chi_d: float, n_el_target: float) -> GainPlan:
    if n_el_target <= 0:
        return GainPlan(chi_d, n_el_target, math.nan, False, False)
    gain = detector.n_el_cal / n_el_target
    floor = detector.n_el_cal / MAX_HARDWARE_GAIN
    in_range = gain <= MAX_HARDWARE_GAIN * (1 + 1e-12) and n_el_target >= floor * (1 - 1e-12)
    return GainPlan(chi_d, n_el_target, gain, True, in_range)


def gain_for_target_noise(detector: DetectorModel, chi_d_star: float) -> GainPlan:
    """LO gain that turns the detector's electronic noise into ``chi_d_star``.

    Infeasible (``feasible=False``, gain NaN) when the required electronic
    noise is not positive: efficiency alone already adds too much.
    """
    if not 0 < detector.eta < 1:
        raise ValueError("gain planning needs 0 < eta < 1")
    return _plan(detector, chi_d_star, electronic_noise_for(detector.eta, chi_d_star))


def gain_for_electronic_noise(detector: DetectorModel, n_el_target: float) -> GainPlan:
    """Same as :func:`gain_for_target_noise`, keyed by the target electronic noise."""
    chi_d = (1.0 - detector.eta) / detector.eta + n_el_target / detector.eta
    return _plan(detector, chi_d, n_el_target)


def improvement_threshold(losses, k_opt, k_ref, margin: float = 1e-6) -> float | None:
    """Smallest grid loss from which ``k_opt - k_ref > margin`` holds at every later point."""
    losses = np.asarray(losses, dtype=float)
    better = np.asarray(k_opt) - np.asarray(k_ref) > margin
    if not better[-1]:
        return None
    i = len(better) - 1
    while i > 0 and better[i - 1]:
        i -= 1
    return float(losses[i])
