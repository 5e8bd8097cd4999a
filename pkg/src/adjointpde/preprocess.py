"""Noise injection, truncated-SVD denoising and temporal subsampling of datasets."""

from __future__ import annotations

import logging
import warnings

import numpy as np

from .core import Dataset

log = logging.getLogger(__name__)


def add_noise(data: Dataset, sigma_noise: float, seed: int) -> Dataset:
    """Multiplicative Gaussian noise ``f * (1 + eps)``, ``eps ~ N(0, sigma^2)`` per value."""
    if sigma_noise < 0:
        raise ValueError("noise level must be non-negative")
    if sigma_noise == 0:
        return data.with_values(data.values.copy(), noise_sigma=0.0, noise_seed=seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    eps = rng.normal(0.0, sigma_noise, size=data.values.shape)
    return data.with_values(data.values * (1.0 + eps), noise_sigma=sigma_noise, noise_seed=seed)


def svd_denoise(data: Dataset, sv_threshold: float, relative: bool = True) -> Dataset:
    """Keep singular triplets with ``s >= sv_threshold`` (times ``s_max`` when relative).

    Each component is reshaped to a ``[time, space]`` matrix and treated on its own.
    """
    if sv_threshold < 0:
        raise ValueError("singular value threshold must be non-negative")
    T = data.values.shape[0]
    if T < 2:
        return data.with_values(data.values.copy())
    if relative and sv_threshold > 1:
        warnings.warn("relative threshold above 1 discards every singular value", RuntimeWarning, stacklevel=2)
    out = np.empty_like(data.values)
    kept = []
    for c in range(data.values.shape[1]):
        mat = data.values[:, c].reshape(T, -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        cut = sv_threshold * (s[0] if relative and s.size else 1.0)
        r = int(np.sum(s >= cut)) if s.size and s[0] > 0 else 0
        kept.append(r)
        if r == s.size:
            # nothing truncated: copy rather than pay the reconstruction round-off
            out[:, c] = data.values[:, c]
        else:
            out[:, c] = ((u[:, :r] * s[:r]) @ vt[:r]).reshape(data.values[:, c].shape)
    log.debug("svd_denoise kept ranks %s", kept)
    return data.with_values(out, svd_threshold=sv_threshold, svd_relative=relative, svd_rank=kept)


def subsample_time(data: Dataset, stride: int) -> Dataset:
    """Every ``stride``-th snapshot, starting with the first."""
    if int(stride) != stride or stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride!r}")
    stride = int(stride)
    idx = np.arange(0, data.values.shape[0], stride)
    if len(idx) < 2:
        raise ValueError(f"stride {stride} leaves fewer than two snapshots")
    return Dataset(data.grid, data.times[idx].copy(), data.values[idx].copy(), {**data.metadata, "stride": stride})
