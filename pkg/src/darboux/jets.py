"""Truncated bivariate Taylor polynomials (jets) with exact arithmetic.

A jet of degree cap ``m`` stores coefficients c[a, b] for monomials
``y1**a * y2**b`` with ``a + b <= m``.  Products are truncated at the cap, so
degree-by-degree recursions see exact low-order coefficients.
"""

from __future__ import annotations

import math

import numpy as np


class PolyJet:
    """Bivariate polynomial truncated at total degree ``cap``."""

    __slots__ = ("cap", "coef")

    def __init__(self, cap, coef=None):
        self.cap = int(cap)
        if coef is None:
            self.coef = np.zeros((self.cap + 1, self.cap + 1))
        else:
            c = np.asarray(coef, dtype=float)
            if c.shape != (self.cap + 1, self.cap + 1):
                raise ValueError("coefficient array shape mismatch")
            self.coef = c.copy()
            self._truncate()

    def _truncate(self):
        n = self.cap + 1
        a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        self.coef[a + b > self.cap] = 0.0

    # -- constructors ------------------------------------------------------
    @classmethod
    def constant(cls, value, cap):
        j = cls(cap)
        j.coef[0, 0] = value
        return j

    @classmethod
    def variable(cls, which, cap, base=0.0):
        """Jet of the coordinate function y1 (which=0) or y2 (which=1)."""
        j = cls(cap)
        j.coef[0, 0] = base
        if which == 0:
            j.coef[1, 0] = 1.0
        else:
            j.coef[0, 1] = 1.0
        return j

    def copy(self):
        return PolyJet(self.cap, self.coef)

    # -- ring operations ---------------------------------------------------
    def __add__(self, other):
        if isinstance(other, PolyJet):
            out = PolyJet(self.cap)
            out.coef = self.coef + other.coef
            return out
        out = self.copy()
        out.coef[0, 0] += other
        return out

    __radd__ = __add__

    def __neg__(self):
        out = PolyJet(self.cap)
        out.coef = -self.coef
        return out

    def __sub__(self, other):
        return self + (-other if isinstance(other, PolyJet) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, PolyJet):
            out = PolyJet(self.cap)
            out.coef = self.coef * other
            return out
        n = self.cap + 1
        # direct truncated convolution; caps are small so this is cheap
        out = PolyJet(self.cap)
        conv = np.zeros((n, n))
        A, B = self.coef, other.coef
        for a in range(n):
            for b in range(n - a):
                if A[a, b] == 0.0:
                    continue
                conv[a:, b:][: n - a, : n - b] += A[a, b] * B[: n - a, : n - b]
        out.coef = conv
        out._truncate()
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, PolyJet):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, int) or (isinstance(p, float) and p.is_integer()):
            p = int(p)
            if p < 0:
                return self.reciprocal() ** (-p)
            out = PolyJet.constant(1.0, self.cap)
            base = self.copy()
            while p:
                if p & 1:
                    out = out * base
                base = base * base
                p >>= 1
            return out
        return (self.log() * float(p)).exp()

    # -- analytic functions via series in the nilpotent part ----------------
    def _series(self, coeffs):
        """sum coeffs[k] * (self - const)**k, truncated."""
        tail = self.copy()
        tail.coef[0, 0] = 0.0
        out = PolyJet.constant(coeffs[0], self.cap)
        power = PolyJet.constant(1.0, self.cap)
        for k in range(1, self.cap + 1):
            power = power * tail
            if k < len(coeffs) and coeffs[k] != 0.0:
                out = out + power * coeffs[k]
        return out

    def reciprocal(self):
        a0 = self.coef[0, 0]
        if a0 == 0.0:
            raise ZeroDivisionError("jet has zero constant term")
        c = [(-1.0) ** k / a0 ** (k + 1) for k in range(self.cap + 1)]
        return self._series(c)

    def sqrt(self):
        a0 = self.coef[0, 0]
        if a0 <= 0.0:
            raise ValueError("jet sqrt requires positive constant term")
        c = [math.sqrt(a0)]
        for k in range(1, self.cap + 1):
            c.append(c[-1] * (0.5 - (k - 1)) / (k * a0))
        return self._series(c)

    def exp(self):
        e0 = math.exp(self.coef[0, 0])
        c = [e0 / math.factorial(k) for k in range(self.cap + 1)]
        return self._series(c)

    def log(self):
        a0 = self.coef[0, 0]
        if a0 <= 0.0:
            raise ValueError("jet log requires positive constant term")
        c = [math.log(a0)]
        for k in range(1, self.cap + 1):
            c.append((-1.0) ** (k + 1) / (k * a0**k))
        return self._series(c)

    def sin(self):
        a0 = self.coef[0, 0]
        cyc = [math.sin(a0), math.cos(a0), -math.sin(a0), -math.cos(a0)]
        c = [cyc[k % 4] / math.factorial(k) for k in range(self.cap + 1)]
        return self._series(c)

    def cos(self):
        a0 = self.coef[0, 0]
        cyc = [math.cos(a0), -math.sin(a0), -math.cos(a0), math.sin(a0)]
        c = [cyc[k % 4] / math.factorial(k) for k in range(self.cap + 1)]
        return self._series(c)

    # -- calculus ------------------------------------------------------------
    def diff(self, axis, order=1):
        out = self.copy()
        for _ in range(order):
            n = out.cap + 1
            c = np.zeros_like(out.coef)
            if axis == 0:
                mult = np.arange(1, n)[:, None]
                c[: n - 1, :] = out.coef[1:, :] * mult
            else:
                mult = np.arange(1, n)[None, :]
                c[:, : n - 1] = out.coef[:, 1:] * mult
            res = PolyJet(out.cap)
            res.coef = c
            out = res
        return out

    def homogeneous_part(self, degree):
        """Coefficients {(a, b): c} with a + b == degree."""
        out = {}
        for a in range(degree + 1):
            b = degree - a
            if b <= self.cap and a <= self.cap:
                out[(a, b)] = self.coef[a, b]
        return out

    def max_degree_used(self, tol=0.0):
        deg = -1
        for a in range(self.cap + 1):
            for b in range(self.cap + 1 - a):
                if abs(self.coef[a, b]) > tol:
                    deg = max(deg, a + b)
        return deg

    # -- evaluation ----------------------------------------------------------
    def __call__(self, y1, y2):
        return self.eval(y1, y2)

    def eval(self, y1, y2, d1=0, d2=0):
        """Evaluate the (d1, d2) partial derivative at points (arrays ok)."""
        j = self
        if d1 or d2:
            j = self.diff(0, d1).diff(1, d2)
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        n = j.cap + 1
        # Horner in y1 with inner Horner in y2
        out = np.zeros(np.broadcast(y1, y2).shape)
        for a in range(n - 1, -1, -1):
            row = np.zeros_like(out)
            for b in range(n - 1 - a, -1, -1):
                row = row * y2 + j.coef[a, b]
            out = out * y1 + row
        if out.ndim == 0:
            return float(out)
        return out

    def compose_linear(self, mat, shift_scale=1.0):
        """Jet of p(M @ x) * shift_scale where M is a 2x2 matrix.

        Exact for polynomials (degree is preserved by linear maps).
        """
        m = np.asarray(mat, dtype=float)
        x1 = PolyJet(self.cap)
        x1.coef[1, 0] = m[0, 0]
        x1.coef[0, 1] = m[0, 1]
        x2 = PolyJet(self.cap)
        x2.coef[1, 0] = m[1, 0]
        x2.coef[0, 1] = m[1, 1]
        out = PolyJet.constant(0.0, self.cap)
        # iterate monomials, building powers incrementally
        pow1 = [PolyJet.constant(1.0, self.cap)]
        pow2 = [PolyJet.constant(1.0, self.cap)]
        for _ in range(self.cap):
            pow1.append(pow1[-1] * x1)
            pow2.append(pow2[-1] * x2)
        for a in range(self.cap + 1):
            for b in range(self.cap + 1 - a):
                c = self.coef[a, b]
                if c != 0.0:
                    out = out + pow1[a] * pow2[b] * c
        return out * shift_scale

    # -- serialization ---------------------------------------------------------
    def to_table(self):
        """Plain text rows: degree, a, b, coefficient."""
        lines = []
        for d in range(self.cap + 1):
            for a in range(d + 1):
                b = d - a
                c = float(self.coef[a, b])
                if c != 0.0:
                    lines.append(f"{d} {a} {b} {c!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_table(cls, text, cap=None):
        rows = []
        maxdeg = 0
        for line in text.strip().splitlines():
            d, a, b, c = line.split()
            rows.append((int(a), int(b), float(c)))
            maxdeg = max(maxdeg, int(d))
        j = cls(maxdeg if cap is None else cap)
        for a, b, c in rows:
            j.coef[a, b] = c
        return j
