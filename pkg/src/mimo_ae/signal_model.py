"""Coherence-block signal generation for the massive MIMO-OFDM uplink.

One coherence block is a tile of ``n_cbw`` subcarriers by ``n_slot`` OFDM
symbols over which the channel is constant.  Columns of all per-block grids
are resource elements, ordered symbol by symbol: column ``j`` carries OFDM
symbol ``j // n_cbw``, subcarrier ``j % n_cbw``.  The first ``n_cbw``
columns therefore form the training block of the first OFDM symbol.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError

_SQRT2 = np.sqrt(2.0)

#: Unit-average-power constellations (exact by construction).
CONSTELLATIONS = {
    "QPSK": np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / _SQRT2,
    "QAM16": (
        np.add.outer(np.arange(-3, 4, 2), 1j * np.arange(-3, 4, 2)).ravel()
        / np.sqrt(10.0)
    ),
    "QAM64": (
        np.add.outer(np.arange(-7, 8, 2), 1j * np.arange(-7, 8, 2)).ravel()
        / np.sqrt(42.0)
    ),
}


def substream(master_seed: int, *tags) -> np.random.Generator:
    """Derive an independent, reproducible random stream.

    Each (master_seed, tags...) tuple maps to its own generator, so blocks
    and purposes can be generated in any order, or in parallel, without
    changing the draws.  String tags are hashed with CRC-32 to keep the
    derivation stable across platforms and sessions.
    """
    entropy = [int(master_seed)]
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            entropy.append(int(tag))
        else:
            entropy.append(zlib.crc32(str(tag).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))


@dataclass(frozen=True)
class SystemConfig:
    """Array geometry, OFDM grid and reproducibility seed."""

    m: int
    k: int
    n_sc: int = 1200
    n_cbw: int = 12
    n_slot: int = 7
    constellation: str = "QAM16"
    master_seed: int = 0

    def __post_init__(self):
        problems = []
        if not self.k >= 1:
            problems.append(f"k must be >= 1, got {self.k}")
        if not self.m > self.k:
            problems.append(f"m must exceed k, got m={self.m}, k={self.k}")
        if self.n_cbw < 1 or self.n_sc % self.n_cbw != 0:
            problems.append(
                f"n_cbw ({self.n_cbw}) must divide n_sc ({self.n_sc})"
            )
        if self.n_slot < 2:
            problems.append(f"n_slot must be >= 2, got {self.n_slot}")
        if self.constellation not in CONSTELLATIONS:
            problems.append(
                f"unknown constellation {self.constellation!r}; "
                f"choose from {sorted(CONSTELLATIONS)}"
            )
        if problems:
            raise ConfigurationError("; ".join(problems))

    @property
    def n_re(self) -> int:
        """Resource elements per coherence block."""
        return self.n_cbw * self.n_slot


@dataclass
class SymbolGrid:
    """K x n_re grid of unit-average-power constellation points."""

    entries: np.ndarray
    constellation: str


@dataclass
class ReceivedGrid:
    """M x n_re grid of received samples with its noise variance."""

    entries: np.ndarray
    noise_var: float


@dataclass
class CoherenceBlock:
    """One channel-constant tile: channel, transmitted and received grids."""

    block_id: int
    channel: np.ndarray
    tx: SymbolGrid
    rx: ReceivedGrid


def snr_to_noise_var(snr_db: float, k: int) -> float:
    """Noise variance for a per-receive-antenna SNR.

    With unit-variance channel entries and unit-power symbols the received
    signal power per antenna is ``k``, so ``sigma^2 = k * 10**(-snr/10)``
    makes ``k / sigma^2`` equal the requested linear SNR.
    """
    return k * 10.0 ** (-snr_db / 10.0)


def generate_channel(m: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. circularly-symmetric complex Gaussian channel, unit variance."""
    re = rng.standard_normal((m, k))
    im = rng.standard_normal((m, k))
    return (re + 1j * im) / _SQRT2


def draw_symbols(
    k: int, n_re: int, constellation: str, rng: np.random.Generator
) -> SymbolGrid:
    """Uniform i.i.d. draws from a unit-average-power constellation."""
    if constellation not in CONSTELLATIONS:
        raise ConfigurationError(f"unknown constellation {constellation!r}")
    points = CONSTELLATIONS[constellation]
    idx = rng.integers(0, points.size, size=(k, n_re))
    return SymbolGrid(entries=points[idx], constellation=constellation)


def build_coherence_block(
    cfg: SystemConfig, snr_db: float, block_id: int
) -> CoherenceBlock:
    """Generate one coherence block: rx = H @ tx + noise, columnwise.

    The channel and symbol draws depend only on (master_seed, block_id), and
    the noise is one unit-variance draw scaled by sigma, so the same block_id
    observed at different SNRs shares channel, data and noise shape.  This is
    what makes paired scenario comparisons exact.
    """
    h = generate_channel(cfg.m, cfg.k, substream(cfg.master_seed, block_id, "channel"))
    tx = draw_symbols(
        cfg.k, cfg.n_re, cfg.constellation, substream(cfg.master_seed, block_id, "symbols")
    )
    noise_var = snr_to_noise_var(snr_db, cfg.k)
    noise_rng = substream(cfg.master_seed, block_id, "noise")
    unit = (
        noise_rng.standard_normal((cfg.m, cfg.n_re))
        + 1j * noise_rng.standard_normal((cfg.m, cfg.n_re))
    ) / _SQRT2
    rx = h @ tx.entries + np.sqrt(noise_var) * unit
    return CoherenceBlock(
        block_id=block_id,
        channel=h,
        tx=tx,
        rx=ReceivedGrid(entries=rx, noise_var=noise_var),
    )


def training_columns(block: CoherenceBlock, n_cbw: int) -> np.ndarray:
    """The block's training columns: first OFDM symbol, M x n_cbw."""
    return block.rx.entries[:, :n_cbw]


def complex_to_real_stack(v: np.ndarray) -> np.ndarray:
    """Stack a complex vector/grid as [real parts; imaginary parts]."""
    v = np.asarray(v)
    return np.concatenate([v.real, v.imag], axis=0)


def real_stack_to_complex(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_to_real_stack`."""
    r = np.asarray(r)
    if r.shape[0] % 2 != 0:
        raise DimensionError(
            f"stack length {r.shape[0]} is odd; expected [Re; Im] layout"
        )
    m = r.shape[0] // 2
    return r[:m] + 1j * r[m:]
