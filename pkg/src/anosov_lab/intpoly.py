"""Exact polynomial arithmetic over the integers and rationals.

Polynomials are coefficient lists, lowest degree first: ``[c0, c1, ..., cd]``.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import gcd


def trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def degree(p):
    p = trim(p)
    if len(p) == 1 and p[0] == 0:
        return -1
    return len(p) - 1


def mul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return trim(out)


def divmod_poly(p, q):
    """Quotient and remainder of ``p / q`` over the rationals."""
    p = [Fraction(c) for c in trim(p)]
    q = [Fraction(c) for c in trim(q)]
    dq = degree(q)
    if dq < 0:
        raise ZeroDivisionError("polynomial division by zero")
    if degree(p) < dq:
        return [Fraction(0)], p
    quot = [Fraction(0)] * (len(p) - dq)
    rem = p[:]
    lead = q[-1]
    for shift in range(len(p) - 1 - dq, -1, -1):
        coef = rem[shift + dq] / lead
        quot[shift] = coef
        if coef:
            for i, c in enumerate(q):
                rem[shift + i] -= coef * c
    return trim(quot), trim(rem[:dq] or [Fraction(0)])


def divides(q, p):
    """True iff ``q`` divides ``p`` exactly."""
    _, rem = divmod_poly(p, q)
    return all(c == 0 for c in rem)


def derivative(p):
    if len(p) == 1:
        return [0]
    return trim([i * c for i, c in enumerate(p)][1:])


def primitive(p):
    """Scale a rational polynomial to a primitive integer polynomial with positive lead."""
    p = [Fraction(c) for c in trim(p)]
    den = 1
    for c in p:
        den = den * c.denominator // gcd(den, c.denominator)
    ints = [int(c * den) for c in p]
    g = 0
    for c in ints:
        g = gcd(g, c)
    g = g or 1
    if ints[-1] < 0:
        g = -g
    return [c // g for c in ints]


def gcd_poly(p, q):
    """Monic-normalised (then primitive) gcd of two polynomials."""
    a, b = trim(p), trim(q)
    while degree(b) >= 0:
        _, r = divmod_poly(a, b)
        a, b = b, r
    return primitive(a)


def squarefree_part(p):
    g = gcd_poly(p, derivative(p))
    quot, _ = divmod_poly(p, g)
    return primitive(quot)


def evaluate(p, x):
    acc = 0
    for c in reversed(p):
        acc = acc * x + c
    return acc


def euler_phi(d):
    result, m, f = d, d, 2
    while f * f <= m:
        if m % f == 0:
            while m % f == 0:
                m //= f
            result -= result // f
        f += 1
    if m > 1:
        result -= result // m
    return result


@lru_cache(maxsize=None)
def cyclotomic(d):
    """Integer coefficients of the d-th cyclotomic polynomial."""
    p = [-1] + [0] * (d - 1) + [1]
    for e in range(1, d):
        if d % e == 0:
            quot, rem = divmod_poly(p, cyclotomic(e))
            assert all(c == 0 for c in rem)
            p = [int(c) for c in quot]
    return tuple(p)


def cyclotomic_orders(n):
    """All d with phi(d) <= n. phi(d) >= sqrt(d/2) bounds the search."""
    return [d for d in range(1, 2 * n * n + 3) if euler_phi(d) <= n]
