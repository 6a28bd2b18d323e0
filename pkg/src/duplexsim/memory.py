"""Hybrid eDRAM / SRAM / off-chip DRAM model.

Covers bank inventories and first-fit allocation, the temperature-dependent
eDRAM retention curve, refresh counting, readout fault injection, and the
relative-unit memory energy account.  All energy constants are ratios, not
joules; results are only ever compared as ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from duplexsim import bfp

EDRAM = "edram"
SRAM = "sram"
DRAM_OFFCHIP = "dram_offchip"

EDRAM_WORD_BITS = 58      # one BFP group per word
EDRAM_BANK_WORDS = 1024


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class BankConfig:
    kind: str
    capacity_bytes: int
    word_bits: int = EDRAM_WORD_BITS

    def __post_init__(self):
        if self.capacity_bytes <= 0:
            raise ConfigurationError("bank capacity must be positive")
        if self.kind not in (EDRAM, SRAM, DRAM_OFFCHIP):
            raise ConfigurationError(f"unknown bank kind {self.kind!r}")


def hybrid_bank_inventory() -> list:
    """Twelve 48KB eDRAM banks plus six 8KB SRAM banks (58b x 1024w arrays)."""
    return [BankConfig(EDRAM, 48 * 1024) for _ in range(12)] + [
        BankConfig(SRAM, 8 * 1024) for _ in range(6)
    ]


def sram_baseline_inventory() -> list:
    """All-SRAM baseline: six 48KB banks for transients, two 24KB for weights."""
    return [BankConfig(SRAM, 48 * 1024) for _ in range(6)] + [
        BankConfig(SRAM, 24 * 1024) for _ in range(2)
    ]


def words_for(size_bytes: int, word_bits: int = EDRAM_WORD_BITS) -> int:
    return -(-size_bytes * 8 // word_bits)


# ---------------------------------------------------------------------------
# retention and refresh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RetentionModel:
    """Log-linear retention(temperature) between two calibration points."""

    hot_c: float = 100.0
    hot_us: float = 3.35
    cold_c: float = -30.0
    cold_us: float = 30.0

    def retention_at(self, temp_c: float) -> float:
        if not (self.cold_c <= temp_c <= self.hot_c):
            raise ConfigurationError(
                f"temperature {temp_c} outside calibrated range "
                f"[{self.cold_c}, {self.hot_c}] C"
            )
        # calibration points reproduce exactly; retention falls off
        # exponentially with temperature in between
        if temp_c == self.hot_c:
            return self.hot_us
        if temp_c == self.cold_c:
            return self.cold_us
        frac = (temp_c - self.cold_c) / (self.hot_c - self.cold_c)
        return float(np.exp(np.log(self.cold_us) + frac * (np.log(self.hot_us) - np.log(self.cold_us))))


def refreshes_required(lifetime_us, retention_us) -> int:
    """Refreshes needed to keep data alive: ceil(lifetime/retention) - 1."""
    if lifetime_us < 0 or retention_us <= 0:
        raise ConfigurationError("lifetime must be >= 0 and retention > 0")
    if lifetime_us == 0:
        return 0
    ratio = Fraction(lifetime_us) / Fraction(retention_us)  # exact, no float ceil issues
    return max(0, math.ceil(ratio) - 1)


@dataclass
class RefreshLedger:
    """Refresh bookkeeping: both the per-buffer maximum and the global total."""

    per_buffer: dict = field(default_factory=dict)   # name -> refresh count
    word_events: int = 0                             # total word refresh events

    @property
    def max_count(self) -> int:
        return max(self.per_buffer.values(), default=0)

    def to_json(self) -> dict:
        return {
            "per_buffer": dict(sorted(self.per_buffer.items())),
            "max_refresh_count": self.max_count,
            "total_word_refresh_events": self.word_events,
        }


def build_refresh_ledger(buffer_lifetimes_us: dict, buffer_words: dict,
                         retention_us: float) -> RefreshLedger:
    ledger = RefreshLedger()
    for name, lt in buffer_lifetimes_us.items():
        n = refreshes_required(lt, retention_us)
        ledger.per_buffer[name] = n
        ledger.word_events += n * buffer_words.get(name, 0)
    return ledger


# ---------------------------------------------------------------------------
# allocation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BufferRequest:
    name: str
    size_bytes: int
    storage: str        # "static" (weights, pooled injections) or "transient"


@dataclass
class Allocation:
    placements: dict = field(default_factory=dict)   # name -> (bank_kind, bank_index)
    sizes: dict = field(default_factory=dict)
    spilled_bytes: int = 0

    def bank_kind(self, name: str) -> str:
        return self.placements[name][0]

    def edram_bytes_of(self, name: str) -> int:
        return self.sizes[name] if self.placements[name][0] == EDRAM else 0

    def to_json(self) -> dict:
        return {
            "placements": {
                n: {"bank_kind": k, "bank_index": i, "size_bytes": self.sizes[n]}
                for n, (k, i) in sorted(self.placements.items())
            },
            "spilled_bytes": self.spilled_bytes,
        }


def allocate(buffers, banks) -> Allocation:
    """Static data to SRAM, transient to eDRAM, first-fit decreasing by size.

    Transient overflow spills to off-chip DRAM (recorded); static data that
    does not fit in SRAM is a configuration error.
    """
    free = [b.capacity_bytes for b in banks]
    alloc = Allocation()

    def place(req, kind):
        for i, bank in enumerate(banks):
            if bank.kind == kind and free[i] >= req.size_bytes:
                free[i] -= req.size_bytes
                alloc.placements[req.name] = (kind, i)
                return True
        return False

    alloc.sizes = {b.name: b.size_bytes for b in buffers}
    for req in sorted(buffers, key=lambda b: -b.size_bytes):
        if req.storage == "static":
            if not place(req, SRAM):
                raise ConfigurationError(
                    f"static buffer {req.name!r} ({req.size_bytes} B) exceeds SRAM capacity"
                )
        elif req.storage == "transient":
            if not place(req, EDRAM):
                alloc.placements[req.name] = (DRAM_OFFCHIP, None)
                alloc.spilled_bytes += req.size_bytes
        else:
            raise ConfigurationError(f"unknown storage class {req.storage!r}")
    return alloc


# ---------------------------------------------------------------------------
# utilization
# ---------------------------------------------------------------------------

def utilization(live_intervals: dict, allocation: Allocation, banks, total_time) -> float:
    """Time-averaged fraction of eDRAM capacity holding live data.

    ``live_intervals`` maps buffer name -> (first_write_t, last_read_t);
    a buffer is live between its first write and its last read.
    """
    capacity = sum(b.capacity_bytes for b in banks if b.kind == EDRAM)
    if total_time <= 0 or capacity <= 0:
        return 0.0
    byte_time = Fraction(0)
    for name, (start, end) in live_intervals.items():
        if allocation.placements.get(name, (None,))[0] != EDRAM:
            continue
        span = Fraction(end) - Fraction(start)
        if span > 0:
            byte_time += span * allocation.sizes[name]
    return float(byte_time / (Fraction(total_time) * capacity))


# ---------------------------------------------------------------------------
# readout faults
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FaultModel:
    read_yield: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.read_yield <= 1.0):
            raise ConfigurationError("read yield must be in (0, 1]")


def noisy_read(values: np.ndarray, read_yield: float, rng: np.random.Generator,
               group_size: int = 9) -> np.ndarray:
    """Single-lane readout upsets.

    Each value survives with probability ``read_yield``.  A failed lane
    re-reads as garbage sign/mantissa bits under its word's shared exponent,
    modeled as uniform noise at the lane's group magnitude scale.
    """
    if read_yield >= 1.0:
        return values
    flat = values.reshape(-1)
    n = flat.size
    hit = rng.random(n) < (1.0 - read_yield)
    if not hit.any():
        return values
    pad = (-n) % group_size
    mags = np.pad(np.abs(flat), (0, pad)).reshape(-1, group_size)
    scale = np.repeat(mags.max(axis=1), group_size)[:n]
    out = flat.copy()
    out[hit] = rng.uniform(-1.0, 1.0, size=int(hit.sum())) * scale[hit]
    return out.reshape(values.shape)


def random_readout(shape, rng: np.random.Generator,
                   cfg: bfp.BfpConfig = bfp.DEFAULT_CONFIG) -> np.ndarray:
    """Fully stale words: every field (exponent, signs, mantissas) reads back
    as random bits.  Returned values are uncorrelated with whatever was
    stored."""
    n = int(np.prod(shape, dtype=np.int64))
    groups = -(-n // cfg.group_size)
    exps = rng.integers(0, cfg.max_exp_code + 1, size=(groups, 1))
    mants = rng.integers(0, cfg.max_mantissa + 1, size=(groups, cfg.group_size))
    signs = rng.integers(0, 2, size=(groups, cfg.group_size))
    vals = np.ldexp(mants.astype(np.float64), exps - cfg.exp_bias - cfg.man_scale)
    vals = np.where(signs == 1, -vals, vals)
    return vals.reshape(-1)[:n].reshape(shape)


def read_with_faults(values, model: FaultModel, lifetime_us, retention_us,
                     refreshed: bool = False, rng: np.random.Generator | None = None):
    """Model one readout: expired unrefreshed data reads back as random bit
    patterns, otherwise each value is independently correct with probability
    equal to the yield."""
    values = np.asarray(values, dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(model.seed)
    if lifetime_us > retention_us and not refreshed:
        return random_readout(values.shape, rng)
    return noisy_read(values, model.read_yield, rng)


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyConstants:
    """Relative per-word access energies and leakage powers."""

    sram_access: float = 1.0
    edram_access: float = 0.7
    dram_access: float = 100.0
    sram_leakage_per_byte: float = 1.0      # power, relative units per byte
    edram_leakage_ratio: float = 3.5        # eDRAM leaks 3.5x less than SRAM

    def access(self, kind: str) -> float:
        return {SRAM: self.sram_access, EDRAM: self.edram_access,
                DRAM_OFFCHIP: self.dram_access}[kind]

    def leakage(self, kind: str) -> float:
        if kind == SRAM:
            return self.sram_leakage_per_byte
        if kind == EDRAM:
            return self.sram_leakage_per_byte / self.edram_leakage_ratio
        return 0.0  # off-chip leakage not attributed to the accelerator


@dataclass
class MemoryEnergyReport:
    access: float = 0.0
    refresh: float = 0.0
    leakage: float = 0.0

    @property
    def total(self) -> float:
        return self.access + self.refresh + self.leakage

    def to_json(self) -> dict:
        return {"access": self.access, "refresh": self.refresh,
                "leakage": self.leakage, "total": self.total}


def memory_energy(access_events, allocation: Allocation, ledger: RefreshLedger | None,
                  constants: EnergyConstants, banks, total_time_s: float) -> MemoryEnergyReport:
    """Sum access, refresh and leakage energy for one trace.

    ``access_events`` is an iterable of (buffer_name, kind) pairs, one per
    read or write; each access touches every word of the buffer.  A refresh
    is costed as one read plus one write of a word (read-then-write cell).
    """
    rep = MemoryEnergyReport()
    for name, _rw in access_events:
        kind = allocation.placements[name][0]
        rep.access += words_for(allocation.sizes[name]) * constants.access(kind)
    if ledger is not None:
        rep.refresh = ledger.word_events * 2.0 * constants.edram_access
    for bank in banks:
        rep.leakage += constants.leakage(bank.kind) * bank.capacity_bytes * total_time_s
    return rep
