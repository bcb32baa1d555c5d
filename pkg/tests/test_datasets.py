import numpy as np
import pytest

from signovel.datasets import (
    SPIKE_EPS_GRID,
    SpikeConfig,
    donsker_embed,
    simulate_bm,
    simulate_fbm,
    simulate_spiked_bm,
    spike_envelope,
)
from signovel.scores import tamsd
from signovel.signatures import signature


# -- Brownian motion -----------------------------------------------------------


def test_bm_deterministic_replay():
    a = simulate_bm(5, 20, d=2, seed=123)
    b = simulate_bm(5, 20, d=2, seed=123)
    for x, y in zip(a, b):
        assert np.array_equal(x.points, y.points)
        assert np.array_equal(x.times, y.times)
    c = simulate_bm(5, 20, d=2, seed=124)
    assert not np.array_equal(a[0].points, c[0].points)


def test_bm_zero_covariance_constant_paths():
    paths = simulate_bm(3, 10, d=2, cov=np.zeros((2, 2)), seed=0)
    for p in paths:
        assert np.allclose(p.points, 0.0)


def test_bm_endpoint_variance():
    paths = simulate_bm(10_000, 200, d=1, horizon=2.0, seed=1)
    endpoints = np.array([p.points[-1, 0] for p in paths])
    assert endpoints.var() == pytest.approx(2.0, abs=0.1)


def test_bm_endpoint_covariance_matrix():
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    paths = simulate_bm(8000, 50, d=2, cov=cov, horizon=1.5, seed=2)
    ends = np.array([p.points[-1] for p in paths])
    assert np.allclose(np.cov(ends.T), 1.5 * cov, atol=0.15)


def test_bm_rejects_non_psd():
    with pytest.raises(ValueError):
        simulate_bm(1, 5, d=2, cov=np.array([[1.0, 2.0], [2.0, 1.0]]), seed=0)


# -- spiked Brownian motion -------------------------------------------------------


def test_spike_eps_zero_identical_to_bm():
    cfg = SpikeConfig(eps=0.0, n_steps=64, horizon=2.0)
    spiked = simulate_spiked_bm(cfg, 10, seed=9)
    plain = simulate_bm(10, 64, d=1, horizon=2.0, seed=9)
    for s, b in zip(spiked, plain):
        assert np.array_equal(s.points, b.points)


def test_spike_envelope_closed_form_debug_mode():
    cfg = SpikeConfig(eps=6.0, n_steps=100, horizon=2.0)
    [p] = simulate_spiked_bm(cfg, 1, seed=0, zero_noise=True, fixed_theta=0.0)
    expected = 6.0 * np.minimum(np.sqrt(p.times), 1.0)
    assert np.allclose(p.points[:, 0], expected)


def test_spike_minus_bm_equals_envelope_exactly():
    cfg = SpikeConfig(eps=3.0, n_steps=50, horizon=2.0)
    spiked = simulate_spiked_bm(cfg, 5, seed=11)
    plain = simulate_bm(5, 50, d=1, horizon=2.0, seed=11)
    for s, b in zip(spiked, plain):
        bump = s.points[:, 0] - b.points[:, 0]
        # recover theta from the first strictly positive bump value
        rising = np.flatnonzero(bump > 0)
        assert rising.size > 0
        lo = s.times[rising[0] - 1] if rising[0] > 0 else 0.0
        hi = s.times[rising[0]]
        theta = hi - (bump[rising[0]] / 3.0) ** 2
        assert lo <= theta <= hi
        assert np.allclose(bump, spike_envelope(s.times, theta, 3.0), atol=1e-9)


def test_spike_grid_contains_critical_eps():
    assert any(abs(e - np.sqrt(8.0)) < 1e-12 for e in SPIKE_EPS_GRID)
    assert SPIKE_EPS_GRID[0] == 0.0 and SPIKE_EPS_GRID[-1] == 6.0


def test_spike_config_validation():
    with pytest.raises(ValueError):
        SpikeConfig(eps=-1.0)
    with pytest.raises(ValueError):
        simulate_spiked_bm(SpikeConfig(eps=1.0), 1, fixed_theta=2.0)


# -- fractional Brownian motion ----------------------------------------------------


def test_fbm_covariance_entrywise_formula():
    h, L, T = 0.3, 32, 1.0
    paths = simulate_fbm(h, 4000, L, horizon=T, seed=3)
    t = paths[0].times[1:]
    vals = np.array([p.points[1:, 0] for p in paths])
    emp = (vals.T @ vals) / len(vals)
    theory = 0.5 * (
        t[:, None] ** (2 * h) + t[None, :] ** (2 * h) - np.abs(t[:, None] - t[None, :]) ** (2 * h)
    )
    assert np.abs(emp - theory).max() < 0.08
    # the generator's own covariance construction matches the formula exactly
    two_h = 2 * h
    cov = 0.5 * (t[:, None] ** two_h + t[None, :] ** two_h - np.abs(t[:, None] - t[None, :]) ** two_h)
    chol = np.linalg.cholesky(cov)
    assert np.abs(chol @ chol.T - cov).max() < 1e-12


def test_fbm_half_is_bm():
    paths = simulate_fbm(0.5, 10_000, 64, seed=4)
    incs = np.array([np.diff(p.points[:, 0]) for p in paths])
    corr = np.corrcoef(incs[:, 0], incs[:, 1])[0, 1]
    assert abs(corr) < 0.05
    assert incs[:, 0].var() == pytest.approx(1.0 / 64, rel=0.1)


def test_fbm_tamsd_scaling():
    paths = simulate_fbm(0.25, 300, 512, seed=5)
    taus = np.array([1, 2, 4, 16])
    means = [np.mean([tamsd(p, int(t)) for p in paths]) for t in taus]
    slope = np.polyfit(np.log(taus), np.log(means), 1)[0]
    assert slope == pytest.approx(0.5, abs=0.15)


def test_fbm_validation():
    with pytest.raises(ValueError):
        simulate_fbm(0.0, 1, 10)
    with pytest.raises(ValueError):
        simulate_fbm(1.0, 1, 10)


# -- Donsker embedding ----------------------------------------------------------------


def test_donsker_two_point_stream():
    p = donsker_embed(np.array([[1.0], [2.0]]))
    assert np.allclose(p.times, [0.0, 0.5, 1.0])
    assert np.allclose(p.points[:, 0], [0.0, 1.0 / np.sqrt(2), 3.0 / np.sqrt(2)])


def test_donsker_zero_stream():
    p = donsker_embed(np.zeros((7, 2)))
    assert np.allclose(p.points, 0.0)


def test_donsker_padding_preserves_signature():
    rng = np.random.default_rng(6)
    stream = rng.normal(size=(5, 2))
    short = donsker_embed(stream, pad_to=5)
    padded = donsker_embed(stream, pad_to=9)
    # the padded tail holds the final partial sum: zero increments only
    assert np.allclose(np.diff(padded.points[6:], axis=0), 0.0)
    s_padded = signature(padded, 3)
    # identical signature up to the 1/sqrt(L) normalization difference:
    # undo it by scaling the unpadded path level-by-level
    rescaled = donsker_embed(np.sqrt(5.0 / 9.0) * stream, pad_to=5)
    s_short = signature(rescaled, 3)
    assert s_padded.tensor.allclose(s_short.tensor, atol=1e-12, rtol=1e-10)
    assert short.points.shape == (6, 2)


def test_donsker_clt_endpoint_variance():
    rng = np.random.default_rng(7)
    ends = []
    for _ in range(4000):
        stream = rng.standard_normal(256)
        ends.append(donsker_embed(stream).points[-1, 0])
    assert np.var(ends) == pytest.approx(1.0, abs=0.07)


def test_donsker_validation():
    with pytest.raises(ValueError):
        donsker_embed(np.empty((0, 1)))
    with pytest.raises(ValueError):
        donsker_embed(np.ones((5, 1)), pad_to=3)
