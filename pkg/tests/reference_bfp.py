"""Reference BFP encoder used as the test oracle.

Works entirely in exact rational arithmetic (floats are dyadic rationals, so
Fraction conversion is lossless): find each element's binary exponent by
comparison, align every magnitude to the group maximum, truncate toward zero.
Deliberately structured nothing like the production encoder.
"""

import math
from fractions import Fraction


def exact_exponent(f: Fraction):
    """Largest e with 2^e <= |f|, by exact doubling/halving; None for zero."""
    if f == 0:
        return None
    f = abs(f)
    e = 0
    while f >= 2:
        f /= 2
        e += 1
    while f < 1:
        f *= 2
        e -= 1
    return e


def ref_encode(values, exp_bits=4, man_bits=5, group_size=9, exp_bias=None):
    """Returns (exp_code, signs, mantissas) as plain python ints."""
    if exp_bias is None:
        exp_bias = (1 << (exp_bits - 1)) - 1
    max_code = (1 << exp_bits) - 1
    max_mant = (1 << man_bits) - 1

    assert len(values) == group_size
    fracs = [Fraction(float(v)) for v in values]
    signs = [1 if math.copysign(1.0, float(v)) < 0 else 0 for v in values]

    exps = [exact_exponent(f) for f in fracs]
    present = [e for e in exps if e is not None]
    if not present:
        return 0, signs, [0] * group_size

    code = max(present) + exp_bias
    code = min(max(code, 0), max_code)
    shared = code - exp_bias

    mants = []
    for f in fracs:
        scaled = abs(f) * Fraction(2) ** ((man_bits - 1) - shared)
        m = int(scaled)  # truncation toward zero for non-negative
        mants.append(min(m, max_mant))
    return code, signs, mants


def ref_decode(code, signs, mantissas, exp_bits=4, man_bits=5, exp_bias=None):
    if exp_bias is None:
        exp_bias = (1 << (exp_bits - 1)) - 1
    shared = code - exp_bias
    out = []
    for s, m in zip(signs, mantissas):
        val = Fraction(m) * Fraction(2) ** (shared - (man_bits - 1))
        out.append(-val if s else val)
    return out
