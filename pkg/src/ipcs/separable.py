"""Sums of products of one-dimensional factors.

A term is ``c * g_x(x) * g_y(y) [* g_z(z)]``.  Sums and products of such
fields stay separable, so the manufactured solutions (built from shifted
sines and cosines) can be integrated against tensor-product Q1 bases with
one-dimensional quadrature only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Factor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Term:
    coef: float
    factors: tuple  # per axis (x first): tuple of 1D callables, multiplied


class SeparableField:
    def __init__(self, terms: Sequence[Term], dim: int):
        self.terms = tuple(t for t in terms if t.coef != 0.0)
        self.dim = dim

    @classmethod
    def constant(cls, c: float, dim: int) -> "SeparableField":
        return cls([Term(float(c), ((),) * dim)], dim)

    @classmethod
    def factor(cls, axis: int, g: Factor, dim: int, coef: float = 1.0) -> "SeparableField":
        factors = [()] * dim
        factors[axis] = (g,)
        return cls([Term(float(coef), tuple(factors))], dim)

    def __len__(self) -> int:
        return len(self.terms)

    def _coerce(self, other) -> "SeparableField":
        if isinstance(other, SeparableField):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch")
            return other
        return SeparableField.constant(other, self.dim)

    def __add__(self, other):
        return SeparableField(self.terms + self._coerce(other).terms, self.dim)

    __radd__ = __add__

    def __neg__(self):
        return -1.0 * self

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, SeparableField):
            c = float(other)
            return SeparableField([Term(c * t.coef, t.factors) for t in self.terms], self.dim)
        other = self._coerce(other)
        terms = [
            Term(a.coef * b.coef, tuple(fa + fb for fa, fb in zip(a.factors, b.factors)))
            for a in self.terms
            for b in other.terms
        ]
        return SeparableField(terms, self.dim)

    __rmul__ = __mul__

    @property
    def coefs(self) -> np.ndarray:
        return np.array([t.coef for t in self.terms])

    def axis_values(self, axis: int, s: np.ndarray) -> np.ndarray:
        """``(n_terms, len(s))`` values of each term's factor along ``axis``."""
        s = np.asarray(s, dtype=float)
        out = np.ones((len(self.terms), s.size))
        cache: dict = {}
        for i, t in enumerate(self.terms):
            for g in t.factors[axis]:
                if id(g) not in cache:
                    cache[id(g)] = g(s)
                out[i] *= cache[id(g)]
        return out

    def evaluate(self, xs) -> np.ndarray:
        """Values at broadcastable coordinates ``(x, y[, z])``."""
        shape = np.broadcast_shapes(*(np.shape(x) for x in xs))
        total = np.zeros(shape)
        for t in self.terms:
            val = t.coef
            for x, fs in zip(xs, t.factors):
                for g in fs:
                    val = val * g(np.asarray(x, dtype=float))
            total = total + val
        return total


def sin_factor(axis: int, dim: int, scale: float = 1.0, shift: float = 0.0, coef: float = 1.0) -> SeparableField:
    """``coef * sin(scale * s + shift)`` along ``axis``."""
    return SeparableField.factor(axis, lambda s: np.sin(scale * s + shift), dim, coef)


def cos_factor(axis: int, dim: int, scale: float = 1.0, shift: float = 0.0, coef: float = 1.0) -> SeparableField:
    """``coef * cos(scale * s + shift)`` along ``axis``."""
    return SeparableField.factor(axis, lambda s: np.cos(scale * s + shift), dim, coef)
