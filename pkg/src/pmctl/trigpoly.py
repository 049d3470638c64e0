"""Real trigonometric polynomials.

A ``TrigPoly`` of degree M represents

    p(theta) = p_0 + sum_{k=1..M} p_k cos(k theta) + q_k sin(k theta)

and is the common currency for torque functions, back-emf functions and
per-coil current waveforms.  Coefficients are kept in real (p, q) form; the
complex view r_k = (p_k - i q_k) / 2 is available through ``to_complex``.

Products use the exact product-to-sum identities rather than an FFT, so
results are deterministic to the last bit for a given input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class InsufficientCoverageError(ValueError):
    """Raised when sample angles cannot determine the requested harmonics."""


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Immutable real trigonometric polynomial.

    ``cos`` holds p_0..p_M (p_0 is the constant term), ``sin`` holds q_1..q_M.
    """

    cos: np.ndarray
    sin: np.ndarray

    def __post_init__(self):
        c = np.array(self.cos, dtype=float).ravel()
        s = np.array(self.sin, dtype=float).ravel()
        if c.size == 0:
            c = np.zeros(1)
        if s.size != c.size - 1:
            raise ValueError(
                f"sin coefficients must have length degree={c.size - 1}, got {s.size}")
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "cos", c)
        object.__setattr__(self, "sin", s)

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(cls, value: float, degree: int = 0) -> "TrigPoly":
        c = np.zeros(degree + 1)
        c[0] = value
        return cls(c, np.zeros(degree))

    @classmethod
    def zero(cls, degree: int = 0) -> "TrigPoly":
        return cls.constant(0.0, degree)

    @classmethod
    def harmonic(cls, k: int, kind: str = "sin", amplitude: float = 1.0) -> "TrigPoly":
        """Single harmonic ``amplitude * cos(k theta)`` or ``... sin(k theta)``."""
        c = np.zeros(k + 1)
        s = np.zeros(k)
        if kind == "cos":
            c[k] = amplitude
        elif kind == "sin":
            if k == 0:
                raise ValueError("sin(0 theta) is identically zero")
            s[k - 1] = amplitude
        else:
            raise ValueError(f"kind must be 'cos' or 'sin', not {kind!r}")
        return cls(c, s)

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "TrigPoly":
        """Inverse of ``to_vector``: layout [p_0..p_M, q_1..q_M]."""
        v = np.asarray(v, dtype=float).ravel()
        if v.size % 2 != 1:
            raise ValueError("coefficient vector must have odd length 2M+1")
        m = v.size // 2
        return cls(v[: m + 1], v[m + 1:])

    @classmethod
    def from_complex(cls, r: Sequence[complex]) -> "TrigPoly":
        r = np.asarray(r, dtype=complex).ravel()
        c = np.concatenate([[r[0].real], 2.0 * r[1:].real])
        s = -2.0 * r[1:].imag
        return cls(c, s)

    @classmethod
    def from_json(cls, obj: dict) -> "TrigPoly":
        try:
            degree = int(obj["degree"])
            c, s = obj["cos"], obj["sin"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"TrigPoly JSON needs 'degree', 'cos', 'sin': {exc}") from None
        if len(c) != degree + 1 or len(s) != degree:
            raise ValueError(
                f"TrigPoly JSON degree {degree} inconsistent with "
                f"{len(c)} cos / {len(s)} sin coefficients")
        return cls(c, s)

    # -- views ------------------------------------------------------------

    @property
    def degree(self) -> int:
        return self.cos.size - 1

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.cos, self.sin])

    def to_complex(self) -> np.ndarray:
        r = np.empty(self.degree + 1, dtype=complex)
        r[0] = self.cos[0]
        r[1:] = 0.5 * (self.cos[1:] - 1j * self.sin)
        return r

    def to_json(self) -> dict:
        return {"degree": self.degree,
                "cos": [float(x) for x in self.cos],
                "sin": [float(x) for x in self.sin]}

    def padded(self, degree: int) -> "TrigPoly":
        if degree < self.degree:
            raise ValueError("padding cannot lower the degree; use trimmed()")
        c = np.zeros(degree + 1)
        s = np.zeros(degree)
        c[: self.degree + 1] = self.cos
        s[: self.degree] = self.sin
        return TrigPoly(c, s)

    def trimmed(self, tol: float = 0.0) -> "TrigPoly":
        """Drop trailing harmonics whose coefficients are all within ``tol``."""
        m = self.degree
        while m > 0 and abs(self.cos[m]) <= tol and abs(self.sin[m - 1]) <= tol:
            m -= 1
        return TrigPoly(self.cos[: m + 1], self.sin[:m])

    def allclose(self, other: "TrigPoly", atol: float = 1e-9) -> bool:
        m = max(self.degree, other.degree)
        a, b = self.padded(m), other.padded(m)
        return bool(np.allclose(a.cos, b.cos, rtol=0, atol=atol)
                    and np.allclose(a.sin, b.sin, rtol=0, atol=atol))

    # -- arithmetic ---------------------------------------------------------

    def __call__(self, theta):
        return evaluate(self, theta)

    def __add__(self, other):
        if np.isscalar(other):
            c = self.cos.copy()
            c[0] += other
            return TrigPoly(c, self.sin)
        m = max(self.degree, other.degree)
        a, b = self.padded(m), other.padded(m)
        return TrigPoly(a.cos + b.cos, a.sin + b.sin)

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly(-self.cos, -self.sin)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return mul(self, other)
        return TrigPoly(self.cos * other, self.sin * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return TrigPoly(self.cos / scalar, self.sin / scalar)

    def __repr__(self):
        return f"TrigPoly(cos={self.cos.tolist()}, sin={self.sin.tolist()})"


def basis(theta, degree: int):
    """Return ``(cos(k theta), sin(k theta))`` stacked along a leading axis.

    Shapes are ``(degree + 1, *theta.shape)`` and ``(degree, *theta.shape)``.
    """
    theta = np.asarray(theta, dtype=float)
    k = np.arange(degree + 1).reshape((-1,) + (1,) * theta.ndim)
    arg = k * theta
    return np.cos(arg), np.sin(arg[1:])


def evaluate(p: TrigPoly, theta):
    """Evaluate ``p`` at ``theta`` (scalar or array)."""
    cb, sb = basis(theta, p.degree)
    val = np.tensordot(p.cos, cb, axes=1) + np.tensordot(p.sin, sb, axes=1)
    if np.ndim(val) == 0:
        return float(val)
    return val


def mul(a: TrigPoly, b: TrigPoly) -> TrigPoly:
    """Exact product via product-to-sum identities; degree is deg(a)+deg(b)."""
    ma, mb = a.degree, b.degree
    n = ma + mb
    ac, bc = a.cos, b.cos
    as_ = np.concatenate([[0.0], a.sin])
    bs = np.concatenate([[0.0], b.sin])
    j = np.arange(ma + 1)[:, None]
    k = np.arange(mb + 1)[None, :]
    plus = np.broadcast_to(j + k, (ma + 1, mb + 1))
    minus = np.abs(j - k) + np.zeros_like(plus)
    sgn = np.sign(j - k)
    cc = np.outer(ac, bc)
    ss = np.outer(as_, bs)
    sc = np.outer(as_, bc)
    cs = np.outer(ac, bs)
    out_c = np.zeros(n + 1)
    out_s = np.zeros(n + 1)
    # cos j cos k = [cos(j+k) + cos(j-k)]/2, sin j sin k = [cos(j-k) - cos(j+k)]/2
    np.add.at(out_c, plus, 0.5 * (cc - ss))
    np.add.at(out_c, minus, 0.5 * (cc + ss))
    # sin j cos k = [sin(j+k) + sin(j-k)]/2, cos j sin k = [sin(j+k) - sin(j-k)]/2
    np.add.at(out_s, plus, 0.5 * (sc + cs))
    np.add.at(out_s, minus, 0.5 * sgn * (sc - cs))
    return TrigPoly(out_c, out_s[1:])


def shift(p: TrigPoly, phi: float) -> TrigPoly:
    """Return q with q(theta) = p(theta + phi)."""
    k = np.arange(1, p.degree + 1)
    ck, sk = np.cos(k * phi), np.sin(k * phi)
    pk, qk = p.cos[1:], p.sin
    c = np.concatenate([[p.cos[0]], pk * ck + qk * sk])
    s = qk * ck - pk * sk
    return TrigPoly(c, s)


def derivative(p: TrigPoly) -> TrigPoly:
    k = np.arange(1, p.degree + 1)
    c = np.concatenate([[0.0], k * p.sin])
    s = -k * p.cos[1:]
    return TrigPoly(c, s)


def sup_bound(p: TrigPoly) -> float:
    """Upper bound on max |p(theta)|: |p_0| + sum_k hypot(p_k, q_k)."""
    return float(abs(p.cos[0]) + np.sum(np.hypot(p.cos[1:], p.sin)))


def grid_max(p: TrigPoly, n_points: int = 10_000):
    """Maximum of ``p`` over ``n_points`` uniform angles in [0, 2 pi).

    Returns ``(theta, value)``; ties resolve to the smallest angle.
    """
    if n_points < 4 * p.degree + 1:
        raise ValueError(f"n_points must be >= 4M+1 = {4 * p.degree + 1}")
    theta = TWO_PI * np.arange(n_points) / n_points
    vals = evaluate(p, theta)
    i = int(np.argmax(vals))
    return float(theta[i]), float(vals[i])


def abs_max(p: TrigPoly, n_points: int = 10_000) -> float:
    """Grid maximum of |p|."""
    return max(grid_max(p, n_points)[1], grid_max(-p, n_points)[1])


def design_matrix(theta, degree: int) -> np.ndarray:
    """Rows [1, cos(k t).., sin(k t)..] matching ``TrigPoly.to_vector`` layout."""
    cb, sb = basis(np.asarray(theta, dtype=float).ravel(), degree)
    return np.vstack([cb, sb]).T


def fit_fourier(theta, values, degree: int) -> TrigPoly:
    """Least-squares trigonometric fit of the given degree.

    Raises
    ------
    InsufficientCoverageError
        If there are fewer than 2M+1 samples or the sample angles do not span
        enough distinct positions on the circle to fix every harmonic.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if theta.shape != values.shape:
        raise ValueError("theta and values must have the same length")
    n_coef = 2 * degree + 1
    if theta.size < n_coef:
        raise InsufficientCoverageError(
            f"need at least {n_coef} samples for degree {degree}, got {theta.size}")
    A = design_matrix(theta, degree)
    rank = np.linalg.matrix_rank(A)
    if rank < n_coef:
        n_distinct = np.unique(np.round(np.mod(theta, TWO_PI), 12)).size
        raise InsufficientCoverageError(
            f"insufficient angular coverage: {n_distinct} distinct angles give rank "
            f"{rank} < {n_coef} needed for degree {degree}")
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    return TrigPoly.from_vector(coef)


class PolyBank:
    """A stack of TrigPolys evaluated together; used in simulation inner loops."""

    def __init__(self, polys: Iterable[TrigPoly]):
        polys = list(polys)
        m = max(p.degree for p in polys)
        self.degree = m
        self.n = len(polys)
        self.C = np.array([p.padded(m).cos for p in polys])
        self.S = np.array([p.padded(m).sin for p in polys]).reshape(self.n, m)
        self._k = np.arange(m + 1, dtype=float)[:, None]

    def __call__(self, theta):
        """Evaluate every poly at a shared ``theta``; result ``(n, *theta.shape)``."""
        theta = np.asarray(theta, dtype=float)
        arg = self._k * theta.reshape(1, -1)
        out = self.C @ np.cos(arg) + self.S @ np.sin(arg[1:])
        return out.reshape((self.n,) + theta.shape)

    def per_poly(self, theta):
        """Evaluate poly j at ``theta[j]``; ``theta`` has leading axis ``n``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[:1] != (self.n,):
            raise ValueError(f"leading axis must have length {self.n}")
        arg = self._k[:, :, None] * theta.reshape(1, self.n, -1)
        out = (np.einsum("nk,knb->nb", self.C, np.cos(arg))
               + np.einsum("nk,knb->nb", self.S, np.sin(arg[1:])))
        return out.reshape(theta.shape)
