"""Flat foliated torus models.

A model is a torus R^n/Z^n carrying a linear foliation: the leaves are
translates of a fixed p-dimensional subspace V.  The metric is a constant
SPD matrix, which makes it bundle-like automatically, and the operator of
interest is A = I + Delta_H + c.D_H with c a g-orthogonal drift vector.

Fourier convention used throughout the package: plane waves e_m(x) =
exp(2*pi*i m.x) with m in Z^n, so the covector of e_m is xi = 2*pi*m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BasePointMismatchError,
    ConormalValidationError,
    DriftNotTransverseError,
    DriftTooStrongError,
    LeafBasisRankError,
    MetricNotSPDError,
    ShiftNotLeafwiseError,
)

GEOM_TOL = 1e-10
DRIFT_TOL = 1e-12


def torus_wrap(x):
    """Map coordinates to the fundamental domain [0, 1)^n."""
    return np.asarray(x, dtype=float) % 1.0


def torus_dist(a, b):
    """Max-norm distance on the torus."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d -= np.round(d)
    return float(np.max(np.abs(d))) if d.size else 0.0


def _g_orthonormalize(columns, g, tol=1e-12):
    """Gram-Schmidt in the g inner product; drops dependent columns."""
    basis = []
    for v in columns.T:
        w = np.array(v, dtype=float)
        for u in basis:
            w = w - (u @ g @ w) * u
        nrm = float(np.sqrt(w @ g @ w))
        if nrm > tol * max(1.0, float(np.sqrt(v @ g @ v))):
            basis.append(w / nrm)
    if not basis:
        return np.zeros((columns.shape[0], 0))
    return np.column_stack(basis)


@dataclass(frozen=True, eq=False)
class FlatFoliatedModel:
    """Validated flat model with precomputed frames and projectors.

    Attributes
    ----------
    n, p, q : int
        Torus dimension, leaf dimension, codimension q = n - p.
    leaf_basis : (n, p) array
        The user-supplied spanning set of the leaf subspace V.
    metric : (n, n) array
        Constant SPD metric g; ``metric_inv`` is the dual metric g*.
    drift : (n,) array
        Coefficient c of the first-order term, g-orthogonal to V.
    leaf_frame, trans_frame : arrays
        g-orthonormal frames U of V and E of H = V-perp (columns).
    proj_v, proj_h : (n, n) arrays
        g-orthogonal projectors of vectors onto V and H.  Covectors are
        projected onto the conormal space by ``proj_h.T``.
    """

    n: int
    p: int
    q: int
    leaf_basis: np.ndarray
    metric: np.ndarray
    drift: np.ndarray
    metric_inv: np.ndarray
    sqrt_det_g: float
    leaf_frame: np.ndarray
    trans_frame: np.ndarray
    proj_v: np.ndarray
    proj_h: np.ndarray
    drift_frame: np.ndarray

    def leaf_coords(self, w):
        """Coordinates of a leafwise vector in the g-orthonormal leaf frame."""
        return self.leaf_frame.T @ self.metric @ np.asarray(w, dtype=float)

    def trans_coords_vec(self, h):
        """Coordinates of a transverse vector in the g-orthonormal frame E."""
        return self.trans_frame.T @ self.metric @ np.asarray(h, dtype=float)

    def cov_frame_coords(self, xi):
        """Frame coordinates (xi . e_j) of a conormal covector."""
        return np.asarray(xi, dtype=float) @ self.trans_frame

    def cov_from_frame(self, beta):
        """Conormal covector with the given frame coordinates."""
        return self.metric @ self.trans_frame @ np.asarray(beta, dtype=float)

    def g_norm(self, v):
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ self.metric @ v))

    def dual_norm(self, xi):
        xi = np.asarray(xi, dtype=float)
        return float(np.sqrt(xi @ self.metric_inv @ xi))


@dataclass(frozen=True)
class ConormalVector:
    """Point (x, xi) with x on the torus and xi annihilating the leaves."""

    x: np.ndarray
    xi: np.ndarray


@dataclass(frozen=True)
class HolonomyElement:
    """Leafwise arrow: target point x = r(gamma) and shift w with
    s(gamma) = x - w mod Z^n.  For linear foliations the shift is a
    complete invariant of the arrow."""

    target: np.ndarray
    shift: np.ndarray


def build_model(n, p, leaf_basis, metric=None, drift=None) -> FlatFoliatedModel:
    """Validate and assemble a flat foliated model.

    Raises a distinct error for each violated invariant: rank-deficient
    leaf basis, non-SPD metric, non-transverse drift, drift too strong
    for positivity of the operator.
    """
    n = int(n)
    p = int(p)
    if n < 2 or not (1 <= p < n):
        raise LeafBasisRankError(f"need n >= 2 and 1 <= p < n, got n={n}, p={p}")
    leaf_basis = np.asarray(leaf_basis, dtype=float).reshape(n, p)
    metric = np.eye(n) if metric is None else np.asarray(metric, dtype=float)
    drift = np.zeros(n) if drift is None else np.asarray(drift, dtype=float)

    if metric.shape != (n, n):
        raise MetricNotSPDError(f"metric shape {metric.shape} != ({n}, {n})")
    if not np.allclose(metric, metric.T, atol=1e-12 * max(1.0, np.abs(metric).max())):
        raise MetricNotSPDError("metric is not symmetric to machine precision")
    eigvals = np.linalg.eigvalsh(metric)
    if eigvals.min() <= 0:
        raise MetricNotSPDError(f"metric eigenvalues not all positive: {eigvals}")

    svals = np.linalg.svd(leaf_basis, compute_uv=False)
    if svals.size < p or svals[p - 1] <= 1e-10 * svals[0]:
        raise LeafBasisRankError("leaf basis does not have full rank p")

    leaf_frame = _g_orthonormalize(leaf_basis, metric)
    if leaf_frame.shape[1] != p:
        raise LeafBasisRankError("leaf basis does not have full rank p")

    # Complete the frame: g-orthonormalize the standard basis against U,
    # keeping the q most independent directions (deterministic pivoting).
    proj_v = leaf_frame @ leaf_frame.T @ metric
    resid = np.eye(n) - proj_v
    order = np.argsort(-np.einsum("ij,ij->j", resid, metric @ resid))
    trans_frame = _g_orthonormalize(
        np.column_stack([resid[:, j] for j in order]), metric
    )[:, : n - p]

    drift_norm = float(np.sqrt(drift @ metric @ drift))
    leafward = leaf_frame.T @ metric @ drift
    if np.any(np.abs(leafward) > DRIFT_TOL * max(1.0, drift_norm)):
        raise DriftNotTransverseError(
            f"drift has leafwise component {leafward} above tolerance"
        )
    if drift_norm >= 1.0:
        raise DriftTooStrongError(
            f"|c|_g = {drift_norm} >= 1; positivity margin requires |c|_g < 1"
        )

    return FlatFoliatedModel(
        n=n,
        p=p,
        q=n - p,
        leaf_basis=leaf_basis,
        metric=metric,
        drift=drift,
        metric_inv=np.linalg.inv(metric),
        sqrt_det_g=float(np.sqrt(np.linalg.det(metric))),
        leaf_frame=leaf_frame,
        trans_frame=trans_frame,
        proj_v=proj_v,
        proj_h=np.eye(n) - proj_v,
        drift_frame=trans_frame.T @ metric @ drift,
    )


def conormal(model, x, xi) -> ConormalVector:
    """Validated conormal vector; x is wrapped into [0, 1)^n."""
    x = torus_wrap(np.asarray(x, dtype=float).reshape(model.n))
    xi = np.asarray(xi, dtype=float).reshape(model.n)
    scale = float(np.linalg.norm(xi))
    if scale == 0.0:
        raise ConormalValidationError("covector must be nonzero")
    pairings = xi @ model.leaf_basis
    bad = np.abs(pairings) >= GEOM_TOL * scale
    if np.any(bad):
        raise ConormalValidationError(
            f"covector pairs with leaf directions: {pairings}"
        )
    return ConormalVector(x=x, xi=xi)


def holonomy_element(model, target, shift) -> HolonomyElement:
    """Validated leafwise arrow with target r(gamma) and shift in V."""
    target = torus_wrap(np.asarray(target, dtype=float).reshape(model.n))
    shift = np.asarray(shift, dtype=float).reshape(model.n)
    off = model.proj_h @ shift
    if np.linalg.norm(off) > GEOM_TOL * max(1.0, np.linalg.norm(shift)):
        raise ShiftNotLeafwiseError(f"shift leaves V by {off}")
    return HolonomyElement(target=target, shift=shift)


def holonomy_transport(model, gamma: HolonomyElement, nu: ConormalVector) -> ConormalVector:
    """Transport of a conormal vector along a leafwise arrow.

    The linear foliation has trivial holonomy, so the covector is carried
    unchanged while the base point slides to the arrow's source.
    """
    if torus_dist(nu.x, gamma.target) > GEOM_TOL:
        raise BasePointMismatchError(
            f"covector based at {nu.x}, arrow targets {gamma.target}"
        )
    return ConormalVector(x=torus_wrap(nu.x - gamma.shift), xi=nu.xi)


def compose(model, first: HolonomyElement, second: HolonomyElement) -> HolonomyElement:
    """Arrow composition: follow ``first`` then ``second``."""
    if torus_dist(first.target - first.shift, second.target) > GEOM_TOL:
        raise BasePointMismatchError("arrows do not compose")
    return HolonomyElement(
        target=first.target, shift=first.shift + second.shift
    )


def transverse_symbol(model, nu: ConormalVector) -> float:
    """Principal symbol of P = sqrt(A) on the conormal bundle: |xi|_{g*}."""
    return model.dual_norm(nu.xi)


def subprincipal_p(model, nu: ConormalVector) -> float:
    """Subprincipal symbol of P at nu: (c . xi) / (2 |xi|_{g*}).

    Degree-zero homogeneous; on the unit cosphere it is (c . xi)/2.
    """
    return float(model.drift @ nu.xi) / (2.0 * transverse_symbol(model, nu))


def random_conormal(model, rng, unit=True) -> ConormalVector:
    """Random conormal vector; covector drawn from the frame sphere."""
    x = rng.random(model.n)
    beta = rng.normal(size=model.q)
    beta /= np.linalg.norm(beta)
    if not unit:
        beta *= float(rng.uniform(0.2, 5.0))
    return conormal(model, x, model.cov_from_frame(beta))


def verify_holonomy_invariance(model, sample_count, seed=0, symbol=None, step=1e-5):
    """Max directional derivative of the symbol along leafwise directions.

    Samples random conormal points and leafwise directions X (lifted with
    zero covector variation) and differentiates the extended symbol by
    central differences.  For any x-independent symbol the result is zero
    to rounding; an injected x-dependent symbol serves as negative control.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if symbol is None:
        def symbol(x, xi):
            return model.dual_norm(xi)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(sample_count):
        nu = random_conormal(model, rng, unit=False)
        direction = model.leaf_basis @ rng.normal(size=model.p)
        direction /= np.linalg.norm(direction)
        hi = symbol(nu.x + step * direction, nu.xi)
        lo = symbol(nu.x - step * direction, nu.xi)
        worst = max(worst, abs(hi - lo) / (2.0 * step))
    return worst
