"""Separable groupoid kernels k(gamma) = phi(r(gamma)) * psi(shift).

phi is a real trigonometric polynomial on the torus; psi is the standard
radial bump on the leaf space, scaled to unit mass, with its Fourier
transform evaluated by certified Gauss-Legendre quadrature.  General
kernels are finite sums of such separable terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import jv

from .errors import KernelValidationError, QuadratureError
from .model import FlatFoliatedModel

_DEFAULT_NODES = 1600


@lru_cache(maxsize=32)
def _gl_nodes(count):
    x, w = np.polynomial.legendre.leggauss(count)
    return x, w


def bump(u):
    """Standard bump exp(1/(u^2 - 1)) on (-1, 1), zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 / (ui * ui - 1.0))
    return out if out.ndim else float(out)


class BumpProfile:
    """Unit-mass radial bump on R^p with support radius S and its transform.

    The transform uses the radial Fourier kernel
        psi_hat(theta) = (2 pi)^{p/2} |theta|^{1 - p/2}
                         int_0^S psi(r) J_{p/2-1}(|theta| r) r^{p/2} dr
    evaluated on a fixed Gauss-Legendre grid; node doubling certifies the
    relative error (see :meth:`quadrature_error`).
    """

    def __init__(self, dim, support, nodes=_DEFAULT_NODES):
        if support <= 0:
            raise KernelValidationError("support radius must be positive")
        self.dim = int(dim)
        self.support = float(support)
        self.nodes = int(nodes)
        x, w = _gl_nodes(self.nodes)
        # map [-1, 1] -> [0, S]
        self._r = 0.5 * self.support * (x + 1.0)
        self._w = 0.5 * self.support * w
        sphere = 2.0 * np.pi ** (self.dim / 2.0) / gamma_fn(self.dim / 2.0)
        raw_mass = sphere * np.sum(self._w * bump(self._r / self.support) * self._r ** (self.dim - 1))
        self._norm = 1.0 / raw_mass
        self._vals = self._norm * bump(self._r / self.support)
        # second moment for the small-theta series of the transform
        self._sigma2 = sphere * np.sum(
            self._w * self._vals * self._r ** (self.dim + 1)
        ) / self.dim

    def value(self, radius):
        """psi at distance ``radius`` from the origin."""
        return self._norm * bump(np.asarray(radius, dtype=float) / self.support)

    def peak(self):
        return float(self.value(0.0))

    def fourier(self, theta):
        """Transform at frequency magnitude(s) ``theta`` (even, real).

        Repeated frequencies are evaluated once; dimension one uses the
        cosine kernel directly, higher dimensions the Bessel kernel.
        """
        theta = np.atleast_1d(np.abs(np.asarray(theta, dtype=float)))
        uniq, inverse = np.unique(theta, return_inverse=True)
        vals = np.empty_like(uniq)
        small = uniq < 1e-6
        vals[small] = 1.0 - 0.5 * self._sigma2 * uniq[small] ** 2
        big = np.nonzero(~small)[0]
        if self.dim == 1:
            moments = self._w * self._vals
            for start in range(0, big.size, 8192):
                idx = big[start : start + 8192]
                vals[idx] = 2.0 * (np.cos(np.outer(uniq[idx], self._r)) @ moments)
        else:
            order = self.dim / 2.0 - 1.0
            moments = self._w * self._vals * self._r ** (self.dim / 2.0)
            for start in range(0, big.size, 8192):
                idx = big[start : start + 8192]
                tb = uniq[idx]
                integ = jv(order, np.outer(tb, self._r)) @ moments
                vals[idx] = (
                    (2.0 * np.pi) ** (self.dim / 2.0)
                    * tb ** (1.0 - self.dim / 2.0)
                    * integ
                )
        out = vals[inverse]
        return out if out.size > 1 else float(out[0])

    def envelope_beyond(self, theta, hard_cap=None):
        """Upper envelope of |psi_hat| on [theta, infinity), from a dense grid."""
        if hard_cap is None:
            hard_cap = max(4.0 * theta, 400.0 / self.support + 50.0)
        grid = np.linspace(theta, hard_cap, 4000)
        return float(np.max(np.abs(np.atleast_1d(self.fourier(grid)))))

    def quadrature_error(self, theta):
        """Max abs difference against a node-doubled evaluation."""
        fine = BumpProfile(self.dim, self.support, nodes=2 * self.nodes)
        a = np.atleast_1d(self.fourier(theta))
        b = np.atleast_1d(fine.fourier(theta))
        return float(np.max(np.abs(a - b)))

    def fourier_cutoff(self, rel_tol=1e-9, hard_cap=None):
        """Frequency beyond which |psi_hat| stays below rel_tol.

        Uses the running envelope from the right on a dense grid, so the
        oscillatory zeros of the transform do not produce a premature cut.
        """
        if hard_cap is None:
            hard_cap = 16.0 * (np.log(1.0 / rel_tol) / 2.0) ** 2 / self.support + 10.0
        grid = np.linspace(0.0, hard_cap, 6000)
        vals = np.abs(np.atleast_1d(self.fourier(grid)))
        envelope = np.maximum.accumulate(vals[::-1])[::-1]
        below = np.nonzero(envelope < rel_tol)[0]
        if below.size == 0:
            raise QuadratureError(
                f"transform does not decay below {rel_tol} before {hard_cap}"
            )
        return float(grid[below[0]])


class TrigPolynomial:
    """Real trigonometric polynomial sum_m c_m exp(2 pi i m.x)."""

    def __init__(self, coeffs):
        cleaned = {}
        for key, val in coeffs.items():
            key = tuple(int(k) for k in key)
            cleaned[key] = complex(val)
        for m, c in cleaned.items():
            neg = tuple(-k for k in m)
            other = cleaned.get(neg)
            if other is None or abs(np.conj(c) - other) > 1e-12 * max(1.0, abs(c)):
                raise KernelValidationError(
                    f"coefficients not Hermitian-symmetric at {m}; phi must be real"
                )
        self.coeffs = cleaned

    def coeff0(self):
        if not self.coeffs:
            return 0.0
        dim = len(next(iter(self.coeffs)))
        return float(np.real(self.coeffs.get((0,) * dim, 0.0)))

    def max_frequency(self):
        if not self.coeffs:
            return 0
        return max(max(abs(k) for k in m) for m in self.coeffs)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        total = 0.0 + 0.0j
        for m, c in self.coeffs.items():
            total += c * np.exp(2j * np.pi * (x @ np.asarray(m, dtype=float)))
        return float(np.real(total))

    def translated(self, shift):
        shift = np.asarray(shift, dtype=float)
        return TrigPolynomial(
            {
                m: c * np.exp(2j * np.pi * (np.asarray(m, float) @ shift))
                for m, c in self.coeffs.items()
            }
        )


@dataclass(frozen=True, eq=False)
class GroupoidKernel:
    """One separable term phi (x) psi bound to a model."""

    model: FlatFoliatedModel
    phi: TrigPolynomial
    profile: BumpProfile
    scale: float = 1.0

    @property
    def support(self):
        return self.profile.support

    @property
    def terms(self):
        return (self,)

    def is_null(self):
        return self.scale == 0.0 or all(
            abs(c) == 0.0 for c in self.phi.coeffs.values()
        ) or not self.phi.coeffs

    def __add__(self, other):
        return KernelSum(self.terms + other.terms)


@dataclass(frozen=True, eq=False)
class KernelSum:
    """Finite sum of separable kernel terms on one model."""

    _terms: tuple

    @property
    def terms(self):
        return self._terms

    @property
    def model(self):
        return self._terms[0].model

    @property
    def support(self):
        return max(t.support for t in self._terms)

    def is_null(self):
        return all(t.is_null() for t in self._terms)

    def __add__(self, other):
        return KernelSum(self.terms + other.terms)


def build_kernel(model, phi_coeffs=None, support=1.0, scale=1.0) -> GroupoidKernel:
    """Separable kernel with trig-poly weight and unit-mass bump profile.

    ``phi_coeffs`` maps integer frequency tuples to coefficients; the
    default is the constant weight 1.
    """
    if phi_coeffs is None:
        phi_coeffs = {(0,) * model.n: 1.0}
    phi = TrigPolynomial(phi_coeffs)
    for m in phi.coeffs:
        if len(m) != model.n:
            raise KernelValidationError(
                f"phi frequency {m} does not match torus dimension {model.n}"
            )
    return GroupoidKernel(
        model=model,
        phi=phi,
        profile=BumpProfile(model.p, support),
        scale=float(scale),
    )


def kernel_eval(kernel, gamma):
    """k(gamma) = phi(r(gamma)) psi(shift); zero outside the support."""
    total = 0.0
    for term in kernel.terms:
        model = term.model
        radius = model.g_norm(gamma.shift)
        if radius >= term.support:
            continue
        total += term.scale * term.phi(gamma.target) * float(term.profile.value(radius))
    return total
