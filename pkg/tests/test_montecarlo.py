import math

import numpy as np
import pytest

from cvqkd_lab.model import ChannelModel, DetectorModel, ProtocolParams
from cvqkd_lab.montecarlo import (
    BATCH_COLUMNS,
    BLOCK_SIZE,
    ConstantLo,
    EstimationError,
    SequenceLo,
    StabilizerConfig,
    StochasticLo,
    analytic_bob_variance,
    default_workers,
    estimate_parameters,
    lo_gains,
    normalize_batch,
    read_batch,
    simulate_batch,
    stabilize_lo,
    write_batch,
)

P40 = ProtocolParams(40.0)
HALF = ChannelModel.from_transmission(0.5, 0.2)
DET = DetectorModel(0.606, 0.041)
ETA_T = 0.606 * 0.5
N = 1_000_000


def _estimate(batch, scheme="instantaneous", trusted=DET, true_t=None, params=P40):
    y = normalize_batch(batch, trusted, scheme)
    return estimate_parameters(batch.matched_alice(), y, params, trusted, true_t=true_t)


def _within(value, expected, se, k=5.0):
    return abs(value - expected) <= k * se


@pytest.fixture(scope="module")
def honest():
    return simulate_batch(P40, HALF, DET, ConstantLo(), N, seed=1)


def test_batch_shapes_and_positivity(honest):
    for arr in (honest.x_a, honest.p_a, honest.theta_bits, honest.lo_intensity, honest.raw_output, honest.saturated):
        assert len(arr) == N
    assert np.all(honest.lo_intensity > 0)
    assert set(np.unique(honest.theta_bits)) == {0, 1}
    assert abs(np.mean(honest.theta_bits) - 0.5) < 5 * 0.5 / math.sqrt(N)
    assert honest.saturated.sum() == 0


def test_moments_match_analytic(honest):
    rep = _estimate(honest, "calibrated")
    se = rep.standard_errors
    assert _within(rep.var_y, analytic_bob_variance(40, 0.5, 0.2, 0.606, 0.041), se["var_y"])
    assert _within(rep.cov_ay, math.sqrt(ETA_T) * 39, se["cov_ay"])
    assert _within(rep.eps_hat, 0.2, se["eps_hat"])
    assert _within(rep.t_hat, 0.5, se["t_hat"])


def test_lossless_noiseless_chain():
    det = DetectorModel(1.0, 0.0)
    batch = simulate_batch(P40, ChannelModel.from_loss(0), det, ConstantLo(), N, seed=2)
    rep = _estimate(batch, trusted=det)
    assert _within(rep.var_y, 40.0, rep.standard_errors["var_y"])


def test_ideal_detector_matches_direct_channel_model():
    det = DetectorModel(1.0, 0.0)
    batch = simulate_batch(P40, HALF, det, ConstantLo(), N, seed=3)
    y = normalize_batch(batch, det)
    # direct sampling of sqrt(T) q + channel noise, independent stream
    rng = np.random.default_rng(12345)
    q = rng.normal(0, math.sqrt(39), N) + rng.standard_normal(N)
    z = math.sqrt(0.5) * q + math.sqrt(1 - 0.5 + 0.5 * 0.2) * rng.standard_normal(N)
    for stat in (np.var, lambda v: np.mean(v**4)):
        parts_y = [stat(c) for c in np.array_split(y, 20)]
        parts_z = [stat(c) for c in np.array_split(z, 20)]
        se = math.hypot(np.std(parts_y, ddof=1), np.std(parts_z, ddof=1)) / math.sqrt(20)
        assert abs(stat(y) - stat(z)) <= 5 * se
    assert abs(np.mean(y) - np.mean(z)) <= 5 * math.sqrt(2 * np.var(z) / N)


def test_no_modulation_no_correlation():
    batch = simulate_batch(ProtocolParams(1.0), HALF, DET, ConstantLo(), 200_000, seed=4)
    y = normalize_batch(batch, DET)
    a = batch.matched_alice()
    assert np.all(a == 0.0)
    assert float(np.mean(a * y)) == 0.0
    with pytest.raises(EstimationError):
        estimate_parameters(a, y, ProtocolParams(1.0), DET)


def test_constant_lo_schemes_identical(honest):
    assert np.array_equal(normalize_batch(honest, DET, "instantaneous"), normalize_batch(honest, DET, "calibrated"))
    with pytest.raises(ValueError):
        normalize_batch(honest, DET, "nope")


def test_gain_four_normalization_schemes():
    batch = simulate_batch(P40, HALF, DET, ConstantLo(4.0), N, seed=5)
    optical = ETA_T * 39 + 1 + ETA_T * 0.2
    inst = _estimate(batch, "instantaneous")
    assert _within(inst.var_y - optical, 0.041 / 4, inst.standard_errors["var_y"])
    cal = _estimate(batch, "calibrated")
    assert _within(cal.var_y, 4 * optical + 0.041, cal.standard_errors["var_y"])
    assert _within(cal.cov_ay, 2 * math.sqrt(ETA_T) * 39, cal.standard_errors["cov_ay"])


@pytest.mark.parametrize("gain", [1.0, 2.0, 4.0])
def test_bias_law(gain):
    batch = simulate_batch(P40, HALF, DET, ConstantLo(gain), N, seed=6)
    rep = _estimate(batch, "instantaneous")
    predicted = -0.041 * (1 - 1 / gain) / ETA_T
    assert _within(rep.eps_hat - 0.2, predicted, rep.standard_errors["eps_hat"])


def test_stabilizer_removes_bias():
    incoming = 1e9 * lo_gains(ConstantLo(2.0), N)
    stab = stabilize_lo(incoming, StabilizerConfig())
    batch = simulate_batch(P40, HALF, DET, SequenceLo(stab.stabilized / 1e9), N, seed=6)
    rep = _estimate(batch, "instantaneous")
    assert _within(rep.eps_hat, 0.2, rep.standard_errors["eps_hat"])


def test_standard_error_scales():
    small = _estimate(simulate_batch(P40, HALF, DET, ConstantLo(), 100_000, seed=8))
    large = _estimate(simulate_batch(P40, HALF, DET, ConstantLo(), 1_600_000, seed=8))
    for key in ("var_y", "cov_ay", "eps_hat"):
        ratio = small.standard_errors[key] / large.standard_errors[key]
        # ideal ratio 4; 20-split SE estimates carry ~16% relative noise each
        assert 2.4 < ratio < 6.5, (key, ratio)


def test_deterministic_across_workers_and_blocks():
    n = 3 * BLOCK_SIZE + 17
    a = simulate_batch(P40, HALF, DET, StochasticLo(0.05, seed=3), n, seed=9, workers=1)
    b = simulate_batch(P40, HALF, DET, StochasticLo(0.05, seed=3), n, seed=9, workers=4)
    for name in ("x_a", "p_a", "theta_bits", "lo_intensity", "raw_output", "saturated"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    prefix = simulate_batch(P40, HALF, DET, ConstantLo(), BLOCK_SIZE, seed=9, workers=1)
    full = simulate_batch(P40, HALF, DET, ConstantLo(), n, seed=9, workers=2)
    assert np.array_equal(prefix.raw_output, full.raw_output[:BLOCK_SIZE])
    other = simulate_batch(P40, HALF, DET, ConstantLo(), BLOCK_SIZE, seed=10, workers=1)
    assert not np.array_equal(prefix.raw_output, other.raw_output)


def test_thread_env(monkeypatch):
    monkeypatch.setenv("CVQKD_LAB_THREADS", "3")
    assert default_workers() == 3
    monkeypatch.delenv("CVQKD_LAB_THREADS")
    assert 1 <= default_workers() <= 8


def test_lo_profiles():
    g = lo_gains(StochasticLo(0.1, seed=1, mean_gain=2.0), 400_000)
    assert np.all(g > 0)
    assert abs(g.mean() - 2.0) < 5 * 0.2 / math.sqrt(g.size)
    assert abs(g.std() / g.mean() - 0.1) < 0.002
    assert np.array_equal(lo_gains(ConstantLo(3.0), 4), np.full(4, 3.0))
    with pytest.raises(ValueError):
        lo_gains(SequenceLo(np.ones(3)), 4)
    with pytest.raises(ValueError):
        lo_gains(SequenceLo(np.array([1.0, 0.0])), 2)


def test_saturation_rail_flags():
    batch = simulate_batch(P40, HALF, DET, ConstantLo(100.0), 10_000, seed=11)
    assert batch.saturated.mean() > 0.1
    assert np.array_equal(batch.saturated, np.abs(batch.raw_output) > batch.rail)


def test_stabilizer_fixed_point():
    cfg = StabilizerConfig(tap_fraction=0.01, target_intensity=1e9)
    res = stabilize_lo(np.full(100, 1e9), cfg)
    assert np.allclose(res.gains, 1 / 0.99, rtol=1e-15, atol=0)
    assert np.all(res.residuals <= 1e-15)
    assert res.clipped == 0


def test_stabilizer_exact_inversion():
    rng = np.random.default_rng(0)
    incoming = 1e9 * rng.uniform(0.9, 1.1, 100_000)
    res = stabilize_lo(incoming, StabilizerConfig())
    assert res.residuals.max() <= 1e-12
    assert res.stabilized.std() / res.stabilized.mean() <= 1e-12


def test_stabilizer_monitor_noise():
    rng = np.random.default_rng(1)
    incoming = 1e9 * rng.uniform(0.9, 1.1, 100_000)
    res = stabilize_lo(incoming, StabilizerConfig(monitor_noise_rel=1e-3), seed=4)
    sq = res.residuals**2
    rms = math.sqrt(sq.mean())
    se = sq.std(ddof=1) / math.sqrt(sq.size) / (2 * rms)
    assert abs(rms - 1e-3) <= 5 * se


def test_stabilizer_clips():
    res = stabilize_lo(np.array([1e6, 1e9, 1e12]), StabilizerConfig(gain_min=0.5, gain_max=2.0))
    assert res.clipped == 2
    assert res.gains[0] == 2.0 and res.gains[2] == 0.5


def test_stabilizer_config_validation():
    with pytest.raises(ValueError):
        StabilizerConfig(tap_fraction=1.0)
    with pytest.raises(ValueError):
        StabilizerConfig(gain_min=1.5)


def test_export_roundtrip(tmp_path):
    batch = simulate_batch(P40, HALF, DET, StochasticLo(0.02), 1000, seed=12)
    path = tmp_path / "batch.csv"
    write_batch(batch, path)
    assert path.read_text().splitlines()[0] == ",".join(BATCH_COLUMNS)
    cols = read_batch(path)
    assert np.array_equal(cols["pulse_index"], np.arange(1000))
    assert np.allclose(cols["raw_output"], batch.raw_output, rtol=1e-11, atol=0)
    assert np.array_equal(cols["theta"], batch.theta_bits)
    assert np.allclose(cols["lo_intensity"], batch.lo_intensity, rtol=1e-11)


def test_estimation_with_known_transmittance(honest):
    rep = _estimate(honest, "calibrated", true_t=0.5)
    assert rep.t_hat == 0.5
    assert _within(rep.eps_hat, 0.2, rep.standard_errors["eps_hat"])
    assert rep.n_used == N


def test_estimation_rejects_mismatch():
    with pytest.raises(ValueError):
        estimate_parameters(np.ones(3), np.ones(4), P40, DET)
    with pytest.raises(ValueError):
        estimate_parameters(np.ones(3), np.ones(3), P40, DET, modulation_variance="x")
