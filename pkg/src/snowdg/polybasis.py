"""Bivariate polynomials in the graded-lex monomial basis.

Coefficients are stored as a flat vector ordered
``[1, x, y, x^2, xy, y^2, x^3, x^2 y, ...]``, so the first
``(p+1)(p+2)/2`` entries are the local DG basis of degree ``p``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .geometry import Similarity


def ndofs(degree: int) -> int:
    """Dimension of the space of bivariate polynomials of total degree <= ``degree``."""
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def exponents(degree: int) -> tuple[tuple[int, int], ...]:
    """Exponent pairs ``(a, b)`` of ``x^a y^b`` in graded-lex order."""
    return tuple((n - b, b) for n in range(degree + 1) for b in range(n + 1))


def index(a: int, b: int) -> int:
    n = a + b
    return n * (n + 1) // 2 + b


def degree_for(ncoef: int) -> int:
    d = 0
    while ndofs(d) < ncoef:
        d += 1
    if ndofs(d) != ncoef:
        raise ValueError(f"{ncoef} is not a graded-lex coefficient count")
    return d


def _to_grid(coeffs: np.ndarray, degree: int) -> np.ndarray:
    grid = np.zeros((degree + 1, degree + 1))
    for k, (a, b) in enumerate(exponents(degree)):
        grid[a, b] = coeffs[k]
    return grid


def _from_grid(grid: np.ndarray, degree: int) -> np.ndarray:
    out = np.zeros(ndofs(degree))
    for k, (a, b) in enumerate(exponents(degree)):
        if a < grid.shape[0] and b < grid.shape[1]:
            out[k] = grid[a, b]
    return out


class Poly2:
    """A bivariate polynomial of total degree at most ``degree``."""

    __slots__ = ("coeffs", "degree")

    def __init__(self, coeffs, degree: int | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        if degree is None:
            degree = degree_for(coeffs.size)
        if coeffs.size < ndofs(degree):
            coeffs = np.concatenate([coeffs, np.zeros(ndofs(degree) - coeffs.size)])
        elif coeffs.size > ndofs(degree):
            if np.any(coeffs[ndofs(degree):]):
                raise ValueError("coefficients exceed the requested degree")
            coeffs = coeffs[:ndofs(degree)]
        self.coeffs = coeffs
        self.degree = degree

    @classmethod
    def monomial(cls, a: int, b: int, degree: int | None = None) -> "Poly2":
        degree = a + b if degree is None else degree
        c = np.zeros(ndofs(degree))
        c[index(a, b)] = 1.0
        return cls(c, degree)

    @classmethod
    def constant(cls, value: float = 1.0, degree: int = 0) -> "Poly2":
        c = np.zeros(ndofs(degree))
        c[0] = value
        return cls(c, degree)

    @classmethod
    def zero(cls, degree: int = 0) -> "Poly2":
        return cls(np.zeros(ndofs(degree)), degree)

    def with_degree(self, degree: int) -> "Poly2":
        return Poly2(self.coeffs, degree)

    @property
    def effective_degree(self) -> int:
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            return 0
        a, b = exponents(self.degree)[nz[-1]]
        return a + b

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return evaluate(self, pts)

    def __add__(self, other):
        if np.isscalar(other):
            other = Poly2.constant(other)
        d = max(self.degree, other.degree)
        return Poly2(self.with_degree(d).coeffs + other.with_degree(d).coeffs, d)

    __radd__ = __add__

    def __neg__(self):
        return Poly2(-self.coeffs, self.degree)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            return Poly2(self.coeffs * other, self.degree)
        d = self.degree + other.degree
        g1 = _to_grid(self.coeffs, self.degree)
        g2 = _to_grid(other.coeffs, other.degree)
        out = np.zeros((d + 1, d + 1))
        for a, b in zip(*np.nonzero(g1)):
            out[a:a + g2.shape[0], b:b + g2.shape[1]] += g1[a, b] * g2
        return Poly2(_from_grid(out, d), d)

    __rmul__ = __mul__

    def __repr__(self):
        terms = [f"{c:+.6g}*x^{a}y^{b}" for c, (a, b) in zip(self.coeffs, exponents(self.degree)) if c]
        return f"Poly2({' '.join(terms) or '0'})"


def evaluate(poly: Poly2, pts: np.ndarray) -> np.ndarray:
    """Evaluate at points of shape ``(..., 2)`` by nested Horner in x then y."""
    x, y = pts[..., 0], pts[..., 1]
    grid = _to_grid(poly.coeffs, poly.degree)
    out = np.zeros(np.shape(x))
    for a in range(poly.degree, -1, -1):
        row = np.zeros(np.shape(x))
        for b in range(poly.degree - a, -1, -1):
            row = row * y + grid[a, b]
        out = out * x + row
    return out


def monomial_values(pts, degree: int) -> np.ndarray:
    """Values of all monomials up to ``degree``; shape ``(..., ndofs(degree))``."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0, None], pts[..., 1, None]
    ab = np.array(exponents(degree))
    return x ** ab[:, 0] * y ** ab[:, 1]


def monomial_gradients(pts, degree: int) -> np.ndarray:
    """Gradients of all monomials; shape ``(..., ndofs(degree), 2)``."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0, None], pts[..., 1, None]
    ab = np.array(exponents(degree))
    a, b = ab[:, 0], ab[:, 1]
    gx = a * x ** np.maximum(a - 1, 0) * y ** b
    gy = b * x ** a * y ** np.maximum(b - 1, 0)
    return np.stack([gx, gy], axis=-1)


@lru_cache(maxsize=None)
def _derivative_matrices(degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = ndofs(degree)
    dx, dy = np.zeros((n, n)), np.zeros((n, n))
    for k, (a, b) in enumerate(exponents(degree)):
        if a:
            dx[index(a - 1, b), k] = a
        if b:
            dy[index(a, b - 1), k] = b
    return dx, dy


def derivative_matrices(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrices mapping coefficients of p to those of dp/dx, dp/dy (same basis)."""
    dx, dy = _derivative_matrices(degree)
    return dx.copy(), dy.copy()


def gradient(poly: Poly2) -> tuple[Poly2, Poly2]:
    dx, dy = _derivative_matrices(poly.degree)
    return Poly2(dx @ poly.coeffs, poly.degree), Poly2(dy @ poly.coeffs, poly.degree)


def laplacian(poly: Poly2) -> Poly2:
    dx, dy = _derivative_matrices(poly.degree)
    return Poly2((dx @ dx + dy @ dy) @ poly.coeffs, poly.degree)


def _affine_pullback_grid(m: np.ndarray, t: np.ndarray, degree: int) -> np.ndarray:
    """Q with ``coeffs(p o S) = Q @ coeffs(p)`` for ``S(x) = m x + t``."""
    n = ndofs(degree)
    lx = np.zeros((2, 2))
    lx[0, 0], lx[1, 0], lx[0, 1] = t[0], m[0, 0], m[0, 1]
    ly = np.zeros((2, 2))
    ly[0, 0], ly[1, 0], ly[0, 1] = t[1], m[1, 0], m[1, 1]

    def mul(g1, g2):
        out = np.zeros((g1.shape[0] + g2.shape[0] - 1, g1.shape[1] + g2.shape[1] - 1))
        for a, b in zip(*np.nonzero(g1)):
            out[a:a + g2.shape[0], b:b + g2.shape[1]] += g1[a, b] * g2
        return out

    xpow = [np.ones((1, 1))]
    ypow = [np.ones((1, 1))]
    for _ in range(degree):
        xpow.append(mul(xpow[-1], lx))
        ypow.append(mul(ypow[-1], ly))
    q = np.zeros((n, n))
    for k, (a, b) in enumerate(exponents(degree)):
        q[:, k] = _from_grid(mul(xpow[a], ypow[b]), degree)
    return q


@lru_cache(maxsize=4096)
def _pullback_cached(scale: float, rot: int, shift: tuple[float, float], degree: int) -> np.ndarray:
    s = Similarity(scale, rot, shift)
    q = _affine_pullback_grid(s.matrix, s.offset, degree)
    q.setflags(write=False)
    return q


def pullback_matrix(sim: Similarity, degree: int, cache: bool = True) -> np.ndarray:
    """Matrix ``Q`` such that ``coeffs(p o sim) = Q @ coeffs(p)``.

    Pass ``cache=False`` for one-off maps (e.g. per-element charts).
    """
    if not cache:
        return _affine_pullback_grid(sim.matrix, sim.offset, degree)
    return _pullback_cached(sim.scale, sim.rot, sim.shift, degree)


def pullback(poly: Poly2, sim: Similarity) -> Poly2:
    """The polynomial ``x -> poly(sim(x))``, expanded exactly."""
    return Poly2(pullback_matrix(sim, poly.degree) @ poly.coeffs, poly.degree)
