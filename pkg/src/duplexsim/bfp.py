"""Block floating point (BFP) encoding, decoding and group arithmetic.

A BFP group stores one shared exponent plus ``group_size`` sign/magnitude
mantissas.  The shared exponent is the largest per-element binary exponent
in the group; smaller elements are right-shifted into alignment and the
aligned mantissas are truncated toward zero.  With the default 4-bit
exponent, 5-bit mantissa and 1-bit sign over groups of nine, one group
occupies 4 + (5 + 1) * 9 = 58 bits.

All arithmetic here is exact: mantissas are small integers and scales are
powers of two, so a group dot product computed on integer mantissas is
bit-identical to the real dot product of the decoded values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BfpConfig",
    "BfpGroup",
    "BfpTensor",
    "EncodingError",
    "encode_group",
    "decode_group",
    "dot_groups",
    "quantize_tensor",
    "dequantize_tensor",
    "group_is_zero",
    "group_mantissas_zero",
    "pack_group",
    "unpack_group",
    "group_to_bytes",
    "group_from_bytes",
]


class EncodingError(ValueError):
    """Raised for non-finite inputs or malformed encode requests."""


@dataclass(frozen=True)
class BfpConfig:
    """Shape of the BFP format: exponent width, mantissa width, group size."""

    exp_bits: int = 4
    man_bits: int = 5          # magnitude bits, sign stored separately
    group_size: int = 9
    exp_bias: int | None = None

    def __post_init__(self):
        if self.exp_bits < 1 or self.man_bits < 1 or self.group_size < 1:
            raise ValueError("exp_bits, man_bits and group_size must be >= 1")
        if self.exp_bias is None:
            # IEEE-style default: half the code range, minus one.
            object.__setattr__(self, "exp_bias", (1 << (self.exp_bits - 1)) - 1)

    @property
    def encoded_size_bits(self) -> int:
        return self.exp_bits + self.group_size * (self.man_bits + 1)

    @property
    def max_exp_code(self) -> int:
        return (1 << self.exp_bits) - 1

    @property
    def max_mantissa(self) -> int:
        return (1 << self.man_bits) - 1

    @property
    def man_scale(self) -> int:
        # Radix point sits after the leading mantissa bit: a normalized
        # mantissa m encodes the magnitude m * 2^(E - (man_bits - 1)).
        return self.man_bits - 1


DEFAULT_CONFIG = BfpConfig()


def representable_magnitude(cfg: BfpConfig = DEFAULT_CONFIG) -> float:
    """Largest magnitude the format can store (saturation value)."""
    return float(
        np.ldexp(float(cfg.max_mantissa), cfg.max_exp_code - cfg.exp_bias - cfg.man_scale)
    )


@dataclass
class BfpGroup:
    """One shared-exponent group: exponent code plus per-lane sign/mantissa."""

    shared_exp: int
    signs: np.ndarray      # (group_size,) uint8, 1 = negative
    mantissas: np.ndarray  # (group_size,) int64, < 2**man_bits

    def copy(self) -> "BfpGroup":
        return BfpGroup(self.shared_exp, self.signs.copy(), self.mantissas.copy())


def _own_exponents(values: np.ndarray) -> np.ndarray:
    """Per-element binary exponent e with |v| in [2^e, 2^(e+1)); zeros get a sentinel."""
    mant, exp = np.frexp(np.abs(values))   # |v| = mant * 2^exp, mant in [0.5, 1)
    own = exp.astype(np.int64) - 1
    own[values == 0.0] = np.iinfo(np.int64).min // 2
    return own


def encode_group(values, cfg: BfpConfig = DEFAULT_CONFIG) -> BfpGroup:
    """Encode ``group_size`` reals into one BFP group (truncation toward zero)."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (cfg.group_size,):
        raise EncodingError(f"expected {cfg.group_size} values, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise EncodingError("non-finite value in BFP encode")

    signs = np.signbit(v).astype(np.uint8)
    if not np.any(v != 0.0):
        return BfpGroup(0, signs, np.zeros(cfg.group_size, dtype=np.int64))

    own = _own_exponents(v)
    code = int(np.clip(own.max() + cfg.exp_bias, 0, cfg.max_exp_code))
    shared = code - cfg.exp_bias
    # Power-of-two scaling is exact in float64; floor truncates toward zero.
    aligned = np.ldexp(np.abs(v), cfg.man_scale - shared)
    mants = np.minimum(np.floor(aligned).astype(np.int64), cfg.max_mantissa)
    return BfpGroup(code, signs, mants)


def decode_group(g: BfpGroup, cfg: BfpConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Decode a group back to float64 values (exact)."""
    shared = g.shared_exp - cfg.exp_bias
    mags = np.ldexp(g.mantissas.astype(np.float64), shared - cfg.man_scale)
    return np.where(g.signs == 1, -mags, mags)


def group_is_zero(g: BfpGroup) -> bool:
    """True when the stored bit pattern is the canonical all-zero group."""
    return g.shared_exp == 0 and not np.any(g.mantissas)


def group_mantissas_zero(g: BfpGroup) -> bool:
    """True when every mantissa is zero (exponent may be nonzero)."""
    return not np.any(g.mantissas)


def dot_groups(a: BfpGroup, b: BfpGroup, cfg: BfpConfig = DEFAULT_CONFIG):
    """Group dot product.

    Returns ``(value, zero_operand)``.  The value is computed on integer
    mantissas with a single exponent addition and equals the exact real dot
    product of the decoded groups.  ``zero_operand`` flags that one operand
    decodes to all zeros (consumed by the PE gating model).
    """
    zero = group_mantissas_zero(a) or group_mantissas_zero(b)
    sa = np.where(a.signs == 1, -1, 1).astype(np.int64)
    sb = np.where(b.signs == 1, -1, 1).astype(np.int64)
    acc = int(np.dot(sa * a.mantissas, sb * b.mantissas))
    scale = (a.shared_exp - cfg.exp_bias) + (b.shared_exp - cfg.exp_bias) - 2 * cfg.man_scale
    return float(np.ldexp(float(acc), scale)), zero


# ---------------------------------------------------------------------------
# Tensor-level quantization
# ---------------------------------------------------------------------------

@dataclass
class BfpTensor:
    """A real tensor tiled into BFP groups along one axis.

    Internally stored as arrays of shape (rows, groups_per_row, group_size)
    where a "row" is one slice of the grouping axis.  Padded lanes in the
    final group of each row decode to exactly zero.
    """

    shape: tuple
    grouping_axis: int
    cfg: BfpConfig
    exps: np.ndarray   # (rows, gpr) int64 exponent codes
    signs: np.ndarray  # (rows, gpr, group_size) uint8
    mants: np.ndarray  # (rows, gpr, group_size) int64
    pad_count: int = 0

    @property
    def num_groups(self) -> int:
        return int(self.exps.size)

    def groups(self):
        """Iterate over the flat list of BfpGroup values (row-major)."""
        e = self.exps.reshape(-1)
        s = self.signs.reshape(-1, self.cfg.group_size)
        m = self.mants.reshape(-1, self.cfg.group_size)
        for i in range(e.size):
            yield BfpGroup(int(e[i]), s[i], m[i])


def _to_grouped(x: np.ndarray, axis: int, group_size: int):
    """Move the grouping axis last and pad it to a multiple of group_size."""
    moved = np.moveaxis(x, axis, -1)
    rows = int(np.prod(moved.shape[:-1], dtype=np.int64)) if moved.ndim > 1 else 1
    n = moved.shape[-1]
    pad = (-n) % group_size
    flat = moved.reshape(rows, n)
    if pad:
        flat = np.concatenate([flat, np.zeros((rows, pad))], axis=1)
    return flat.reshape(rows, (n + pad) // group_size, group_size), moved.shape, pad


def quantize_tensor(x, axis: int = -1, cfg: BfpConfig = DEFAULT_CONFIG) -> BfpTensor:
    """Quantize a real tensor to BFP groups tiled along ``axis``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        raise EncodingError("cannot quantize an empty tensor")
    if not np.all(np.isfinite(arr)):
        raise EncodingError("non-finite value in BFP quantize")
    axis = axis % arr.ndim

    grouped, moved_shape, pad = _to_grouped(arr, axis, cfg.group_size)
    signs = np.signbit(grouped).astype(np.uint8)

    own = _own_exponents(grouped)
    raw_max = own.max(axis=-1)
    nonzero = np.any(grouped != 0.0, axis=-1)
    codes = np.clip(raw_max + cfg.exp_bias, 0, cfg.max_exp_code)
    codes = np.where(nonzero, codes, 0).astype(np.int64)

    shared = codes - cfg.exp_bias
    aligned = np.ldexp(np.abs(grouped), (cfg.man_scale - shared)[..., None])
    mants = np.minimum(np.floor(aligned).astype(np.int64), cfg.max_mantissa)
    mants[~nonzero] = 0

    return BfpTensor(
        shape=arr.shape,
        grouping_axis=axis,
        cfg=cfg,
        exps=codes,
        signs=signs,
        mants=mants,
        pad_count=pad,
    )


def dequantize_tensor(bt: BfpTensor) -> np.ndarray:
    """Decode a BfpTensor back to a float64 tensor of the original shape."""
    cfg = bt.cfg
    shared = bt.exps - cfg.exp_bias
    mags = np.ldexp(bt.mants.astype(np.float64), (shared - cfg.man_scale)[..., None])
    vals = np.where(bt.signs == 1, -mags, mags)

    rows, gpr, gs = vals.shape
    flat = vals.reshape(rows, gpr * gs)
    n = gpr * gs - bt.pad_count
    flat = flat[:, :n]
    moved_shape = list(bt.shape)
    moved_shape.append(moved_shape.pop(bt.grouping_axis))
    return np.moveaxis(flat.reshape(moved_shape), -1, bt.grouping_axis)


# ---------------------------------------------------------------------------
# Bit-level serialization
# ---------------------------------------------------------------------------
# Layout, most significant bits first:
#   [shared_exp : exp_bits] then group_size lanes of [sign : 1][mantissa : man_bits],
#   lane 0 in the most significant lane position.

def pack_group(g: BfpGroup, cfg: BfpConfig = DEFAULT_CONFIG) -> int:
    word = int(g.shared_exp) & cfg.max_exp_code
    for i in range(cfg.group_size):
        word = (word << (cfg.man_bits + 1)) | (int(g.signs[i]) << cfg.man_bits) | int(g.mantissas[i])
    return word


def unpack_group(word: int, cfg: BfpConfig = DEFAULT_CONFIG) -> BfpGroup:
    signs = np.zeros(cfg.group_size, dtype=np.uint8)
    mants = np.zeros(cfg.group_size, dtype=np.int64)
    lane = cfg.man_bits + 1
    for i in range(cfg.group_size - 1, -1, -1):
        mants[i] = word & cfg.max_mantissa
        signs[i] = (word >> cfg.man_bits) & 1
        word >>= lane
    return BfpGroup(word & cfg.max_exp_code, signs, mants)


def group_to_bytes(g: BfpGroup, cfg: BfpConfig = DEFAULT_CONFIG) -> bytes:
    nbytes = (cfg.encoded_size_bits + 7) // 8
    return pack_group(g, cfg).to_bytes(nbytes, "big")


def group_from_bytes(raw: bytes, cfg: BfpConfig = DEFAULT_CONFIG) -> BfpGroup:
    return unpack_group(int.from_bytes(raw, "big"), cfg)
