"""Frequency-selective Rayleigh channels and their CNR matrices.

Random streams: trial ``t`` and user ``k`` draw from
``SeedSequence(seed, spawn_key=(t, k))`` with a PCG64 bit generator, so any
trial can be regenerated on its own and users never share a stream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigError

DEFAULT_GAP = 6.6  # 8.2 dB, uncoded QAM at BER 1e-5


@dataclass(frozen=True)
class ChannelModel:
    tap_count: int
    sample_period: float
    rms_delay_spread: float
    tap_powers: tuple


@dataclass
class ChannelRealization:
    users: int
    subcarriers: int
    freq_response: np.ndarray
    seed: int


@dataclass
class CnrMatrix:
    alpha: np.ndarray
    snr_gap: np.ndarray
    noise_total: float = 1.0


def build_model(tap_count: int = 8, sample_period: float = 50e-9,
                rms_delay_spread: float = 50e-9) -> ChannelModel:
    """Tapped delay line with an exponential power profile, unit total power."""
    if tap_count < 1 or int(tap_count) != tap_count:
        raise ConfigError(f"tap_count must be a positive integer, got {tap_count!r}")
    if not (sample_period > 0 and rms_delay_spread > 0):
        raise ConfigError("sample_period and rms_delay_spread must be positive")
    p = np.exp(-np.arange(int(tap_count)) * sample_period / rms_delay_spread)
    p /= p.sum()
    return ChannelModel(int(tap_count), float(sample_period), float(rms_delay_spread),
                        tuple(float(x) for x in p))


def _stream(seed: int, trial: int, user: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(int(seed), spawn_key=(int(trial), int(user)))))


def draw_realization(model: ChannelModel, K: int, N: int, seed: int,
                     trial: int = 0) -> ChannelRealization:
    if K < 1:
        raise ConfigError(f"need at least one user, got K={K}")
    if N < model.tap_count:
        raise ConfigError(f"N={N} is smaller than the tap count {model.tap_count}")
    scale = np.sqrt(np.asarray(model.tap_powers) / 2.0)
    taps = np.empty((K, model.tap_count), dtype=complex)
    for k in range(K):
        z = _stream(seed, trial, k).standard_normal((2, model.tap_count))
        taps[k] = (z[0] + 1j * z[1]) * scale
    return ChannelRealization(K, N, np.fft.fft(taps, N, axis=1), int(seed))


def to_cnr(real: ChannelRealization, snr_gap, total_snr_db: float):
    """CNRs with the noise power normalised to one; returns ``(CnrMatrix, P_T)``."""
    gap = np.broadcast_to(np.asarray(snr_gap, dtype=float), (real.users,)).copy()
    if np.any(gap < 1.0):
        raise ConfigError("SNR gap entries must be at least 1")
    g2 = np.abs(real.freq_response) ** 2
    alpha = g2 * real.subcarriers / gap[:, None]
    # a spectral null exactly at zero would break every log; clamp to the tiniest CNR
    alpha = np.maximum(alpha, np.finfo(float).tiny)
    return CnrMatrix(alpha=alpha, snr_gap=gap), 10.0 ** (total_snr_db / 10.0)


def iid_cnr(K: int, N: int, seed: int, trial: int = 0) -> np.ndarray:
    """``N |h|^2`` with independent unit-variance complex Gaussian ``h`` per entry."""
    out = np.empty((K, N))
    for k in range(K):
        z = _stream(seed, trial, k).standard_normal((2, N))
        out[k] = N * 0.5 * (z[0] ** 2 + z[1] ** 2)
    return np.maximum(out, np.finfo(float).tiny)


def realization_cnr(model: ChannelModel, K: int, N: int, seed: int, trial: int,
                    snr_db: float, gap: float = DEFAULT_GAP):
    real = draw_realization(model, K, N, seed, trial)
    cnr, P_T = to_cnr(real, gap, snr_db)
    return cnr.alpha, P_T


HEADER = ["user", "subcarrier", "re", "im"]


def dump_csv(dest, freq_response) -> None:
    """Write ``freq_response`` to a path or an open text stream (17 significant digits)."""
    h = np.asarray(freq_response, dtype=complex)
    if hasattr(dest, "write"):
        _dump(dest, h)
    else:
        with open(dest, "w", newline="") as fh:
            _dump(fh, h)


def _dump(fh, h):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEADER)
    for k in range(h.shape[0]):
        for n in range(h.shape[1]):
            w.writerow([k, n, repr(float(h[k, n].real)), repr(float(h[k, n].imag))])


class ChannelParseError(ConfigError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


def load_csv(path) -> np.ndarray:
    """Read a ``user,subcarrier,re,im`` file back into a K x N complex matrix.

    Every (user, subcarrier) pair must appear exactly once.
    """
    entries = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != HEADER:
            raise ChannelParseError(path, 1, f"expected header {','.join(HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ChannelParseError(path, line, f"expected 4 fields, got {len(row)}")
            try:
                k, n = int(row[0]), int(row[1])
                re, im = float(row[2]), float(row[3])
            except ValueError as exc:
                raise ChannelParseError(path, line, str(exc)) from None
            if k < 0 or n < 0:
                raise ChannelParseError(path, line, "negative index")
            if not (math.isfinite(re) and math.isfinite(im)):
                raise ChannelParseError(path, line, "non-finite value")
            if (k, n) in entries:
                raise ChannelParseError(path, line, f"duplicate entry for user {k}, subcarrier {n}")
            entries[(k, n)] = complex(re, im)
    if not entries:
        raise ChannelParseError(path, 2, "no channel entries")
    K = 1 + max(k for k, _ in entries)
    N = 1 + max(n for _, n in entries)
    if len(entries) != K * N:
        raise ChannelParseError(path, reader.line_num,
                                f"incomplete grid: {len(entries)} entries for {K} x {N}")
    h = np.empty((K, N), dtype=complex)
    for (k, n), v in entries.items():
        h[k, n] = v
    return h
