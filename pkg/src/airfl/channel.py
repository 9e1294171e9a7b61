"""Gaussian multiple-access channel with per-device instantaneous power accounting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import STREAM_NOISE, keyed_rng

POWER_SLACK = 1e-9  # relative tolerance on the per-device power constraint


def sigma2_for_snr(P: float, d: int, snr_db: float) -> float:
    """Per-entry noise variance such that P / (d * sigma^2) equals the given SNR."""
    return P / (d * 10.0 ** (snr_db / 10.0))


def snr_db(P: float, d: int, sigma2: float) -> float:
    return float(10.0 * np.log10(P / (d * sigma2)))


@dataclass(frozen=True)
class ChannelConfig:
    """M channel uses per round, per-entry noise variance sigma2, power budget P."""

    M: int
    sigma2: float
    P: float

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if self.P <= 0:
            raise ValueError("P must be positive")


class NoiseSource:
    """Round-keyed AWGN stream: the same (seed, t) always yields the same vector."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def noise(self, t: int, M: int, sigma2: float) -> np.ndarray:
        if sigma2 == 0.0:
            return np.zeros(M)
        rng = keyed_rng(self.seed, STREAM_NOISE, t)
        return np.sqrt(sigma2) * rng.standard_normal(M)


def mac_transmit(signals: list[np.ndarray], cfg: ChannelConfig, noise: NoiseSource, t: int) -> np.ndarray:
    """Superpose simultaneous transmissions and add AWGN: y = sum_i x_i + n.

    A power-constraint violation is a protocol bug upstream and raises
    immediately, reporting the offending device and the excess.
    """
    for i, x in enumerate(signals):
        if x.shape != (cfg.M,):
            raise ValueError(f"device {i} signal has shape {x.shape}, expected ({cfg.M},)")
        power = float(x @ x)
        if power > cfg.P * (1.0 + POWER_SLACK):
            raise RuntimeError(
                f"device {i} violates the power constraint at round {t}: "
                f"||x||^2 = {power:.6g} > P = {cfg.P:.6g} (excess {power - cfg.P:.3g})"
            )
    y = np.zeros(cfg.M)
    for x in signals:  # fixed order for bit-reproducibility
        y += x
    return y + noise.noise(t, cfg.M, cfg.sigma2)
