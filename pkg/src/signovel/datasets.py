"""Synthetic path generators and stream embeddings.

All generators are deterministic under a fixed seed: each path draws from
its own substream (spawned from the master seed and the path index), so
batches replay bit-exactly regardless of generation order or chunking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signatures import PathStream

__all__ = [
    "SpikeConfig",
    "simulate_bm",
    "simulate_spiked_bm",
    "simulate_fbm",
    "donsker_embed",
    "spike_envelope",
    "SPIKE_EPS_GRID",
]

# spike magnitudes used by the benchmark sweep; sqrt(8) separates the
# absolutely-continuous regime from the singular one
SPIKE_EPS_GRID = (0.0, 1.0, 2.0, float(np.sqrt(8.0)), 4.0, 6.0)


def _path_rngs(seed, n_paths: int) -> list[np.random.Generator]:
    # one substream per path: replay is bit-exact regardless of batch order
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [np.random.default_rng(c) for c in seed.spawn(n_paths)]


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    sym = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(sym)
    scale = max(1.0, float(np.abs(evals).max(initial=0.0)))
    if evals.min(initial=0.0) < -1e-10 * scale:
        raise ValueError("covariance must be positive semidefinite")
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


def simulate_bm(
    n_paths: int,
    n_steps: int,
    d: int = 1,
    cov: np.ndarray | float | None = None,
    horizon: float = 1.0,
    seed: int = 0,
) -> list[PathStream]:
    """Brownian motion with increment covariance cov * (T / L) on a uniform grid."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    if cov is None:
        cov = np.eye(d)
    factor = _psd_factor(cov if np.ndim(cov) == 2 else np.eye(d) * float(cov))
    if factor.shape[0] != d:
        raise ValueError(f"covariance shape {factor.shape} does not match d={d}")
    times = np.linspace(0.0, horizon, n_steps + 1)
    scale = np.sqrt(horizon / n_steps)
    paths = []
    for i, rng in enumerate(_path_rngs(seed, n_paths)):
        z = rng.standard_normal((n_steps, d))
        increments = scale * z @ factor.T
        points = np.vstack([np.zeros(d), np.cumsum(increments, axis=0)])
        paths.append(PathStream(times, points, f"bm-{i:06d}"))
    return paths


@dataclass(frozen=True)
class SpikeConfig:
    """Brownian motion plus an impulsive spike of magnitude eps.

    The spike envelope eps * min(sqrt((t - theta)^+), 1) switches on at a
    uniform random time theta in [0, 1] and saturates at height eps one time
    unit later; the horizon is 2 so every spike has fully developed by the
    end of the path.
    """

    eps: float
    n_steps: int = 200
    horizon: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.n_steps < 2:
            raise ValueError("need at least two steps")


def spike_envelope(times: np.ndarray, theta: float, eps: float) -> np.ndarray:
    """Deterministic spike term eps * min(sqrt((t - theta)^+), 1) on a grid."""
    return eps * np.minimum(np.sqrt(np.maximum(times - theta, 0.0)), 1.0)


def simulate_spiked_bm(
    cfg: SpikeConfig,
    n_paths: int,
    seed: int | None = None,
    zero_noise: bool = False,
    fixed_theta: float | None = None,
) -> list[PathStream]:
    """Spiked Brownian motion; with eps = 0 and the same seed the paths are
    identical to :func:`simulate_bm`.

    ``zero_noise`` and ``fixed_theta`` are debug hooks that suppress the
    Brownian part and pin the spike time; the spike envelope is evaluated
    exactly at the grid times (theta is not snapped to the grid).
    """
    if fixed_theta is not None and not 0.0 <= fixed_theta <= 1.0:
        raise ValueError("fixed_theta must lie in [0, 1]")
    seed = cfg.seed if seed is None else seed
    times = np.linspace(0.0, cfg.horizon, cfg.n_steps + 1)
    scale = np.sqrt(cfg.horizon / cfg.n_steps)
    paths = []
    for i, rng in enumerate(_path_rngs(seed, n_paths)):
        increments = scale * rng.standard_normal(cfg.n_steps)
        theta = rng.uniform(0.0, 1.0) if fixed_theta is None else fixed_theta
        bm = np.concatenate([[0.0], np.cumsum(increments)])
        if zero_noise:
            bm = np.zeros_like(bm)
        values = bm + spike_envelope(times, theta, cfg.eps)
        paths.append(PathStream(times, values[:, None], f"spike-{i:06d}"))
    return paths


def simulate_fbm(
    hurst: float,
    n_paths: int,
    n_steps: int,
    horizon: float = 1.0,
    seed: int = 0,
) -> list[PathStream]:
    """Fractional Brownian motion by Cholesky factorization of the exact
    covariance 0.5 (t^2H + s^2H - |t-s|^2H) on the grid.

    Dense Cholesky keeps the sampling exact; intended for desk-scale grids
    (n_steps up to a few thousand).
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError("hurst must lie in (0, 1)")
    if n_steps < 1:
        raise ValueError("need at least one step")
    times = np.linspace(0.0, horizon, n_steps + 1)
    t = times[1:]
    two_h = 2.0 * hurst
    cov = 0.5 * (t[:, None] ** two_h + t[None, :] ** two_h - np.abs(t[:, None] - t[None, :]) ** two_h)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"fBM covariance is not positive definite on this grid: {exc}")
    z = np.empty((n_paths, n_steps))
    for i, rng in enumerate(_path_rngs(seed, n_paths)):
        z[i] = rng.standard_normal(n_steps)
    values = z @ chol.T
    return [
        PathStream(times, np.concatenate([[0.0], values[i]])[:, None], f"fbm-{i:06d}")
        for i in range(n_paths)
    ]


def donsker_embed(stream, pad_to: int | None = None) -> PathStream:
    """Scaled partial-sum linear interpolation of an i.i.d. stream on [0, 1].

    Node j sits at time j / L with value (x_1 + ... + x_j) / sqrt(L).
    Streams shorter than ``pad_to`` are padded by holding the final partial
    sum (the path stays at its last observed value), so the padding adds
    zero increments and leaves the signature unchanged.
    """
    stream = np.asarray(stream, dtype=float)
    if stream.ndim == 1:
        stream = stream[:, None]
    if stream.size == 0:
        raise ValueError("empty stream")
    n = stream.shape[0]
    length = n if pad_to is None else int(pad_to)
    if length < n:
        raise ValueError(f"pad_to={length} shorter than the stream ({n})")
    nodes = np.vstack([np.zeros(stream.shape[1]), np.cumsum(stream, axis=0)])
    if length > n:
        nodes = np.vstack([nodes, np.repeat(nodes[-1:], length - n, axis=0)])
    return PathStream(np.linspace(0.0, 1.0, length + 1), nodes / np.sqrt(length))
