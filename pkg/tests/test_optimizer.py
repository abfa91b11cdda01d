import math

import numpy as np
import pytest

from cvqkd_lab import kernels
from cvqkd_lab.model import ChannelModel, DetectorModel, NoisyHomodyne, PerfectHomodyne, ProtocolParams
from cvqkd_lab.optimizer import (
    CHI_D_MAX,
    BracketError,
    added_noise_grid,
    electronic_noise_for,
    gain_for_electronic_noise,
    gain_for_target_noise,
    improvement_threshold,
    optimal_added_noise,
    tolerable_excess_noise,
)

P40 = ProtocolParams(40.0)
DET = DetectorModel(0.606, 0.041)


def _k(loss, eps, chi):
    return kernels.rate_noisy(40.0, 10 ** (-loss / 10), eps, chi, 1.0)


def test_grid_shape():
    grid = added_noise_grid()
    assert len(grid) == 64
    assert grid[0] == 0.0 and grid[-1] == CHI_D_MAX
    assert np.all(np.diff(grid) > 0)
    with pytest.raises(ValueError):
        added_noise_grid(0.0)


def test_zero_loss_optimum_is_interior():
    # mpmath root of dK/dchi: 0.0378733479779897, K* = 0.353215876533141 vs K(0) = 0.350066195490824
    opt = optimal_added_noise(P40, ChannelModel.from_loss(0, 0.25))
    assert opt.chi_d_star == pytest.approx(0.03787334797798974, abs=1e-6)
    assert opt.k_star == pytest.approx(0.35321587653314157, abs=1e-12)
    assert opt.k_zero == pytest.approx(0.35006619549082384, abs=1e-12)


def test_high_loss_optimum_beats_no_added_noise():
    # mpmath: K(0) = -0.0156687424306715, K(100) = -1.03334920877e-4, still rising at the cap
    opt = optimal_added_noise(P40, ChannelModel.from_loss(15, 0.25))
    assert opt.chi_d_star > 0
    assert opt.k_star > opt.k_zero
    assert opt.k_zero == pytest.approx(-0.015668742430671547, abs=1e-12)
    assert opt.chi_d_star == pytest.approx(CHI_D_MAX, abs=1e-6)
    assert opt.k_star == pytest.approx(-1.0333492087723763e-4, abs=1e-12)


@pytest.mark.parametrize("loss", [0, 1, 5, 10, 15, 25])
def test_no_excess_noise_no_added_noise(loss):
    opt = optimal_added_noise(P40, ChannelModel.from_loss(loss, 0.0))
    assert opt.chi_d_star == 0.0
    assert opt.k_star == opt.k_zero


@pytest.mark.parametrize("loss", np.arange(0, 25.01, 2.5))
@pytest.mark.parametrize("eps", [0.0, 0.05, 0.25, 0.6])
def test_optimum_never_loses_to_trace(loss, eps):
    opt = optimal_added_noise(P40, ChannelModel.from_loss(loss, eps))
    for chi in opt.grid:
        assert opt.k_star >= _k(loss, eps, chi) - 1e-9
    assert opt.k_star >= max(_k(loss, eps, 0.0), _k(loss, eps, CHI_D_MAX)) - 1e-9
    assert opt.k_star == pytest.approx(_k(loss, eps, opt.chi_d_star), abs=1e-15)


def test_optimum_close_to_dense_scan():
    dense = np.concatenate([np.linspace(0, 1, 20001), np.linspace(1, 100, 20001)])
    for loss in (0.0, 3.0, 7.0):
        opt = optimal_added_noise(P40, ChannelModel.from_loss(loss, 0.25))
        scan = max(_k(loss, 0.25, c) for c in dense)
        assert opt.k_star >= scan - 1e-9


def test_frontier_perfect_homodyne_zero_loss():
    # sign scan + mpmath bisection: 0.37663700714258626
    pt = tolerable_excess_noise(PerfectHomodyne(), P40, 0.0)
    assert pt.converged and not pt.no_key
    assert pt.eps_max == pytest.approx(0.37663700714258626, abs=1e-9)
    assert pt.chi_d_star == 0.0
    assert abs(pt.k_at_root) <= 1e-6
    assert pt.k_below > 0 > pt.k_above


@pytest.mark.parametrize("loss", [0.0, 4.0, 10.0, 18.0])
def test_frontier_witnesses(loss):
    for optimize in (False, True):
        pt = tolerable_excess_noise(NoisyHomodyne(DET), P40, loss, optimize_chi_d=optimize)
        assert pt.converged
        eps_lo, eps_hi = pt.eps_max * 0.999, pt.eps_max * 1.001
        if optimize:
            grid = added_noise_grid()
            T = 10 ** (-loss / 10)
            k_lo = kernels.best_added_noise(40.0, T, eps_lo, 1.0, grid, 1e-6)[1]
            k_hi = kernels.best_added_noise(40.0, T, eps_hi, 1.0, grid, 1e-6)[1]
        else:
            chi_d = (1 - 0.606) / 0.606 + 0.041 / 0.606
            k_lo, k_hi = _k(loss, eps_lo, chi_d), _k(loss, eps_hi, chi_d)
        assert k_lo > 0 > k_hi


def test_frontier_dominance():
    for loss in np.arange(0, 20.01, 0.5):
        opt = tolerable_excess_noise(PerfectHomodyne(), P40, loss, optimize_chi_d=True)
        ref = tolerable_excess_noise(PerfectHomodyne(), P40, loss)
        assert opt.converged and ref.converged
        assert opt.eps_max >= ref.eps_max - 1e-9


def test_no_modulation_no_key():
    pt = tolerable_excess_noise(PerfectHomodyne(), ProtocolParams(1.0), 3.0)
    assert pt.no_key and pt.eps_max == 0.0


def test_non_bracketing_is_reported():
    with pytest.raises(BracketError):
        tolerable_excess_noise(PerfectHomodyne(), P40, 0.0, eps_cap=0.1)


@pytest.mark.parametrize(
    "target,gain,in_range", [(0.041, 1.0, True), (0.0041, 10.0, True), (0.0205, 2.0, True), (0.002, 20.5, False)]
)
def test_gain_examples(target, gain, in_range):
    plan = gain_for_electronic_noise(DET, target)
    assert plan.feasible
    assert plan.gain == gain
    assert plan.within_hardware_range is in_range


def test_gain_boundary_is_exact():
    plan = gain_for_electronic_noise(DET, 0.0041)
    assert plan.gain == 10.0
    assert plan.within_hardware_range


def test_gain_infeasible_when_efficiency_dominates():
    plan = gain_for_target_noise(DET, 0.5)
    assert electronic_noise_for(0.606, 0.5) < 0
    assert not plan.feasible and math.isnan(plan.gain)
    with pytest.raises(ValueError):
        gain_for_target_noise(DetectorModel(1.0, 0.041), 1.0)


@pytest.mark.parametrize("chi_d", [0.66, 0.7, 0.72, 1.0, 5.0, 50.0])
def test_gain_roundtrip_to_effective_noise(chi_d):
    plan = gain_for_target_noise(DET, chi_d)
    assert plan.n_el_target == pytest.approx(0.606 * chi_d - 0.394, rel=1e-14)
    assert DET.with_gain(plan.gain).n_el == pytest.approx(plan.n_el_target, rel=1e-12)


def test_improvement_threshold():
    losses = [0, 1, 2, 3, 4]
    assert improvement_threshold(losses, [1, 1, 2, 2, 2], [1, 1, 1, 1, 1]) == 2.0
    assert improvement_threshold(losses, [2, 1, 2, 2, 2], [1, 1, 1, 1, 1]) == 2.0
    assert improvement_threshold(losses, [1, 1, 1, 1, 1], [1, 1, 1, 1, 1]) is None
