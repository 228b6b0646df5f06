"""Vectorised double-double arithmetic for the indicator pairing.

A value is a pair (hi, lo) of float64 arrays with value hi + lo. Products of
doubles are split exactly (Dekker), and sums use error-free two-sum in a
pairwise cascade, so heavy cancellation costs about eps^2 instead of eps.
"""
from __future__ import annotations

import numpy as np

_SPLIT = 134217729.0  # 2^27 + 1


def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def dd(a):
    a = np.asarray(a, dtype=float)
    return a, np.zeros_like(a)


def add(x, y):
    s, e = two_sum(x[0], y[0])
    return s, e + (x[1] + y[1])


def neg(x):
    return -x[0], -x[1]


def mul(x, y):
    p, e = two_prod(x[0], y[0])
    return p, e + (x[0] * y[1] + x[1] * y[0])


def total(x, axis=None):
    """Compensated sum of a double-double array along an axis (all axes if None)."""
    hi, lo = np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float)
    if axis is None:
        hi, lo, axis = hi.ravel(), lo.ravel(), 0
    hi = np.moveaxis(hi, axis, 0)
    err = np.moveaxis(lo, axis, 0).sum(axis=0)
    while hi.shape[0] > 1:
        if hi.shape[0] % 2:
            hi = np.concatenate([hi, np.zeros((1,) + hi.shape[1:])])
        hi, e = two_sum(hi[0::2], hi[1::2])
        err = err + e.sum(axis=0)
    if hi.shape[0] == 0:
        return np.zeros(hi.shape[1:]), np.zeros(hi.shape[1:])
    return two_sum(hi[0], err)


# complex values are pairs (re, im) of double-doubles

def cdd(z):
    z = np.asarray(z)
    return dd(z.real), dd(z.imag)


def cmul(x, y):
    (ar, ai), (br, bi) = x, y
    return add(mul(ar, br), neg(mul(ai, bi))), add(mul(ar, bi), mul(ai, br))


def cadd(x, y):
    return add(x[0], y[0]), add(x[1], y[1])


def cscale(x, s):
    """Complex double-double times real double-double."""
    return mul(x[0], s), mul(x[1], s)


def ctotal(x, axis=None):
    return total(x[0], axis), total(x[1], axis)


def to_complex(x) -> complex:
    (rh, rl), (ih, il) = x
    return complex(float(rh) + float(rl), float(ih) + float(il))
