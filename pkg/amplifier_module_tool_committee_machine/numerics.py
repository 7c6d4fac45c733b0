"""
Deterministic numerical kernels shared by every module.

Gaussian tail functions, quadrature rules, multivariate normal orthant
probabilities with their truncated moments, small symmetric-matrix helpers and
the seeded random stream used by all Monte Carlo paths.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, log_ndtr, ndtr, ndtri, owens_t, roots_genlaguerre

from .config import DEFAULT_NUMERICS, NumericsConfig
from .errors import DomainError, NonPsd, SingularCovariance, ZeroMass

logger = logging.getLogger(__name__)

SQRT_2PI = np.sqrt(2.0 * np.pi)

# Orthant probabilities below this are recomputed by conditional quadrature
_TAIL_REFINE = 1e-6
# Correlations are kept strictly inside (-1, 1)
_RHO_CLIP = 1.0 - 1e-12


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------


class Rng:
    """
    Seeded source of independent numpy generators.

    Every call to generator() hands out the next stream of the seed, so the
    sequence of draws depends only on the seed and on the order of calls, never
    on threads or process layout.

    Example:
        rng = Rng(7)
        X = rng.generator().standard_normal((m, n))
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.stream = 0

    def generator(self) -> np.random.Generator:
        """Return the generator of the next stream."""
        gen = self.spawn(self.stream)
        self.stream += 1
        return gen

    def spawn(self, stream: int) -> np.random.Generator:
        """Generator of a given stream, without advancing the counter."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(int(stream),)))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------


def h_function(x):
    """Gaussian upper tail H(x) = P(Z > x)."""
    out = ndtr(-np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def log_h(x):
    """log H(x), accurate in both tails."""
    out = log_ndtr(-np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / SQRT_2PI


# ---------------------------------------------------------------------------
# Symmetric matrices
# ---------------------------------------------------------------------------


def symmetrize(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def spd_sqrt(M: np.ndarray, tol: float = DEFAULT_NUMERICS.psd_tol) -> np.ndarray:
    """
    Symmetric PSD square root.

    Raises:
        NonPsd: If an eigenvalue is below -tol
    """
    w, U = np.linalg.eigh(symmetrize(M))
    if w.min() < -tol:
        raise NonPsd(f"matrix has eigenvalue {w.min():.3e} < -{tol:g}")
    S = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
    return symmetrize(S)


def clip_psd(M: np.ndarray, floor: float = 0.0) -> tuple[np.ndarray, int]:
    """
    Clip eigenvalues of one or a stack of symmetric matrices from below.

    Returns:
        The repaired matrices and the number of eigenvalues that were raised
    """
    w, U = np.linalg.eigh(symmetrize(M))
    low = w < floor
    n_clipped = int(np.count_nonzero(low))
    if n_clipped == 0:
        return symmetrize(M), 0
    w = np.where(low, floor, w)
    out = np.einsum("...ij,...j,...kj->...ik", U, w, U)
    return out, n_clipped


def min_eigenvalue(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(M)).min())


def is_psd(M: np.ndarray, tol: float = DEFAULT_NUMERICS.psd_tol) -> bool:
    return min_eigenvalue(M) >= -tol


def symmetric_gradient(func: Callable[[np.ndarray], float], q: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """
    Central finite-difference gradient of a function of a symmetric matrix.

    Off-diagonal entries are perturbed symmetrically, so the result G satisfies
    d func = Tr(G dq) for symmetric dq.
    """
    q = np.asarray(q, dtype=float)
    K = q.shape[0]
    grad = np.zeros((K, K))
    for i in range(K):
        for j in range(i, K):
            E = np.zeros((K, K))
            E[i, j] = E[j, i] = 1.0
            d = (func(q + step * E) - func(q - step * E)) / (2.0 * step)
            grad[i, j] = grad[j, i] = d if i == j else 0.5 * d
    return grad


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Quadrature against the standard normal measure.

    Attributes:
        nodes: Node positions
        weights: Positive weights summing to one
    """
    nodes: np.ndarray
    weights: np.ndarray

    def expect(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        """Approximate E[func(Z)] for Z ~ N(0, 1)."""
        return float(np.dot(self.weights, func(self.nodes)))

    def tensor(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Tensor-product rule in dim dimensions: points (N, dim) and weights (N,)."""
        grids = np.meshgrid(*([self.nodes] * dim), indexing="ij")
        points = np.stack([g.ravel() for g in grids], axis=-1)
        wgrids = np.meshgrid(*([self.weights] * dim), indexing="ij")
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
        return points, weights


@lru_cache(maxsize=64)
def gauss_hermite(n_nodes: int) -> QuadratureRule:
    """
    Gauss-Hermite rule for the standard normal measure.

    Exact for polynomials of degree <= 2 n_nodes - 1.
    """
    if not 2 <= n_nodes <= 200:
        raise DomainError(f"n_nodes must lie in [2, 200], got {n_nodes}")
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    weights = weights / weights.sum()
    # enforce exact symmetry of the nodes
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights)


@lru_cache(maxsize=16)
def _laguerre(n_nodes: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_genlaguerre(n_nodes, alpha)
    return nodes, weights


@lru_cache(maxsize=8)
def _legendre_unit(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def tanh_sinh(a: float, b: float, step: float = 0.125, span: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    """Double-exponential rule on [a, b]; nodes cluster at both endpoints."""
    t = np.arange(-span, span + 0.5 * step, step)
    v = 0.5 * np.pi * np.sinh(t)
    x = a + (b - a) * expit(2.0 * v)
    w = 0.5 * (b - a) * step * 0.5 * np.pi * np.cosh(t) / np.cosh(v) ** 2
    return x, w


def half_line_rule(numerics: NumericsConfig = DEFAULT_NUMERICS) -> tuple[np.ndarray, np.ndarray]:
    """
    One-dimensional Gaussian rule split at the origin.

    Generalized Gauss-Laguerre in s = xi^2 / 2 on each half line, so integrands
    with a jump at xi = 0 are integrated without loss of order.
    """
    s, w = _laguerre(numerics.radial_nodes, -0.5)
    r = np.sqrt(2.0 * s)
    points = np.concatenate([r, -r])[:, None]
    weights = np.concatenate([w, w]) / (2.0 * np.sqrt(np.pi))
    return points, weights


def polar_rule(boundary_normals: np.ndarray, numerics: NumericsConfig = DEFAULT_NUMERICS) -> tuple[np.ndarray, np.ndarray]:
    """
    Two-dimensional Gaussian rule adapted to lines through the origin.

    The angle is split at every line {xi : n . xi = 0} and integrated with
    tanh-sinh on each piece; the radius uses Gauss-Laguerre in r^2 / 2 with
    both signs of r. Integrands that jump or peak sharply across the given
    lines keep spectral accuracy.

    Args:
        boundary_normals: (L, 2) normal vectors of the lines; zero rows are ignored
        numerics: Node counts

    Returns:
        Points (N, 2) and weights (N,) summing to one
    """
    angles = []
    for normal in np.atleast_2d(np.asarray(boundary_normals, dtype=float)):
        if np.hypot(normal[0], normal[1]) < 1e-14:
            continue
        angles.append(np.arctan2(normal[0], -normal[1]) % np.pi)
    angles = np.unique(np.round(np.sort(np.asarray(angles, dtype=float)), 14))
    if angles.size == 0:
        angles = np.array([0.0])
    cuts = np.append(angles, angles[0] + np.pi)

    thetas, theta_weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo < 1e-14:
            continue
        x, w = tanh_sinh(lo, hi, numerics.angular_step, numerics.angular_span)
        thetas.append(x)
        theta_weights.append(w)
    theta = np.concatenate(thetas)
    w_theta = np.concatenate(theta_weights)

    s, w_s = _laguerre(numerics.radial_nodes, 0.0)
    r = np.sqrt(2.0 * s)
    direction = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    pos = r[None, :, None] * direction[:, None, :]
    points = np.concatenate([pos, -pos], axis=1).reshape(-1, 2)
    w = (w_theta[:, None] * w_s[None, :]) / (2.0 * np.pi)
    weights = np.concatenate([w, w], axis=1).reshape(-1)
    return points, weights


# ---------------------------------------------------------------------------
# Bivariate normal
# ---------------------------------------------------------------------------


def bvn_cdf(h, k, r):
    """
    P(X < h, Y < k) for standard normals with correlation r.

    Owen's T representation; vectorized over broadcastable inputs.
    """
    h, k, r = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (h, k, r)))
    r = np.clip(r, -_RHO_CLIP, _RHO_CLIP)
    s = np.sqrt((1.0 - r) * (1.0 + r))
    h_zero = h == 0
    k_zero = k == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        a_h = np.where(h_zero, 0.0, (k - r * h) / np.where(h_zero, 1.0, h * s))
        a_k = np.where(k_zero, 0.0, (h - r * k) / np.where(k_zero, 1.0, k * s))
    t_h = np.where(h_zero, 0.25 * np.sign(k), owens_t(h, a_h))
    t_k = np.where(k_zero, 0.25 * np.sign(h), owens_t(k, a_k))
    hk = h * k
    beta = np.where((hk < 0) | ((hk == 0) & (h + k < 0)), 0.5, 0.0)
    out = 0.5 * ndtr(h) + 0.5 * ndtr(k) - t_h - t_k - beta
    out = np.where(h_zero & k_zero, 0.25 + np.arcsin(r) / (2.0 * np.pi), out)
    return np.clip(out, 0.0, 1.0)


def _upper_tail_by_quadrature(a1, a2, r, n_nodes: int = 64):
    # integrate over the coordinate with the smaller marginal tail
    swap = ndtr(-a1) > ndtr(-a2)
    lo = np.where(swap, a2, a1)
    hi = np.where(swap, a1, a2)
    p_lo = ndtr(-lo)
    s = np.sqrt((1.0 - r) * (1.0 + r))
    u, w = _legendre_unit(n_nodes)
    with np.errstate(divide="ignore"):
        # H(40) underflows, so nothing beyond it carries mass
        x = np.minimum(-ndtri(u[None, :] * p_lo[:, None]), 40.0)
    inner = ndtr(-(hi[:, None] - r[:, None] * x) / s[:, None])
    return p_lo * (inner @ w)


def bvn_upper(a1, a2, r):
    """
    P(X > a1, Y > a2) for standard normals with correlation r.

    Small probabilities are recomputed by a one-dimensional conditional
    integral so that they keep relative accuracy.
    """
    a1, a2, r = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a1, a2, r)))
    shape = a1.shape
    a1, a2 = a1.ravel(), a2.ravel()
    r = np.clip(r.ravel(), -_RHO_CLIP, _RHO_CLIP)
    out = np.array(bvn_cdf(-a1, -a2, r), dtype=float)
    small = out < _TAIL_REFINE
    if np.any(small):
        out[small] = _upper_tail_by_quadrature(a1[small], a2[small], r[small])
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# Orthants of multivariate normals
# ---------------------------------------------------------------------------


def orthant_moments_1d(mean, var, sign: float):
    """
    Unnormalized moments of z - mean on {sign * z > 0}, z ~ N(mean, var).

    Returns:
        mass, E[(z - mean) 1], E[(z - mean)^2 1], broadcast over the inputs
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    sig = np.sqrt(var)
    a = -sign * mean / sig
    mass = ndtr(-a)
    pdf = normal_pdf(a)
    first = sign * sig * pdf
    second = var * (mass + a * pdf)
    return mass, first, second


def orthant_moments_2d(mean: np.ndarray, cov: np.ndarray, signs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Unnormalized moments of z - mean on the orthant {signs_l z_l > 0}.

    Uses Stein's identity on the standardized orthant: first moments reduce to
    univariate densities times conditional tails, second moments add the
    bivariate density at the corner.

    Args:
        mean: (..., 2) means
        cov: (..., 2, 2) covariances
        signs: Length-2 orthant signs

    Returns:
        mass (...), first (..., 2), second (..., 2, 2)
    """
    d = np.asarray(signs, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    R = cov * np.outer(d, d)
    sig = np.sqrt(np.stack([R[..., 0, 0], R[..., 1, 1]], axis=-1))
    a = -(d * mean) / sig
    r = np.clip(R[..., 0, 1] / (sig[..., 0] * sig[..., 1]), -_RHO_CLIP, _RHO_CLIP)
    s = np.sqrt((1.0 - r) * (1.0 + r))
    a0, a1 = a[..., 0], a[..., 1]

    mass = bvn_upper(a0, a1, r)
    pdf0, pdf1 = normal_pdf(a0), normal_pdf(a1)
    tail0 = ndtr((r * a0 - a1) / s)
    tail1 = ndtr((r * a1 - a0) / s)
    g0 = pdf0 * tail0
    g1 = pdf1 * tail1
    corner = pdf0 * normal_pdf((a1 - r * a0) / s) / s

    ones = np.ones_like(r)
    Rt = np.stack([np.stack([ones, r], -1), np.stack([r, ones], -1)], -2)
    Hm = np.stack(
        [
            np.stack([a0 * g0 - r * corner, corner], -1),
            np.stack([corner, a1 * g1 - r * corner], -1),
        ],
        -2,
    )
    first_t = np.stack([g0 + r * g1, r * g0 + g1], axis=-1)
    second_t = Rt * mass[..., None, None] + Rt @ Hm @ Rt

    scale = d * sig
    first = scale * first_t
    second = second_t * scale[..., :, None] * scale[..., None, :]
    return mass, first, second


def orthant_moments_mc(mean: np.ndarray, cov: np.ndarray, signs, rng: Optional[Rng] = None, samples: Optional[int] = None, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """
    Monte Carlo moments of z - mean on an orthant of any dimension.

    Common random numbers are used when no rng is passed, so repeated calls are
    deterministic and smooth in (mean, cov).
    """
    mean = np.asarray(mean, dtype=float)
    K = mean.shape[-1]
    L = _cholesky(cov)
    samples = int(samples or numerics.mc_samples)
    gen = (rng or Rng(numerics.mc_seed)).generator()
    y = gen.standard_normal((samples, K)) @ L.T
    inside = np.all(np.asarray(signs, dtype=float) * (mean + y) > 0, axis=1)
    yi = y[inside]
    mass = inside.mean()
    first = yi.sum(axis=0) / samples
    second = yi.T @ yi / samples
    return float(mass), first, second


def _cholesky(cov: np.ndarray) -> np.ndarray:
    cov = symmetrize(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance("covariance is not positive definite") from None


def _check_orthant_args(mean, cov, signs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    signs = np.atleast_1d(np.asarray(signs, dtype=float))
    K = mean.shape[0]
    if cov.shape != (K, K) or signs.shape != (K,):
        raise DomainError(f"shape mismatch: mean {mean.shape}, cov {cov.shape}, signs {signs.shape}")
    if not np.all(np.abs(signs) == 1):
        raise DomainError("signs must be +1 or -1")
    L = _cholesky(cov)
    if np.min(np.diag(L)) < 1e-150:
        raise SingularCovariance("covariance is numerically singular")
    return mean, cov, signs


def mvn_orthant_prob(mean, cov, signs, rng: Optional[Rng] = None, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """
    Probability that z ~ N(mean, cov) lies in the orthant {signs_l z_l > 0}.

    Exact for K <= 2, seeded Monte Carlo otherwise.

    Raises:
        SingularCovariance: If cov is not invertible
    """
    mean, cov, signs = _check_orthant_args(mean, cov, signs)
    K = mean.shape[0]
    if K == 1:
        return float(orthant_moments_1d(mean[0], cov[0, 0], signs[0])[0])
    if K == 2:
        return float(orthant_moments_2d(mean, cov, signs)[0])
    logger.debug(f"Orthant probability for K={K} uses Monte Carlo")
    return orthant_moments_mc(mean, cov, signs, rng=rng, numerics=numerics)[0]


def mvn_truncated_moments(mean, cov, signs, rng: Optional[Rng] = None, numerics: NumericsConfig = DEFAULT_NUMERICS) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Orthant mass with the conditional first and second moments of z - mean.

    Returns:
        (mass, E[z - mean | orthant], E[(z - mean)(z - mean)^T | orthant])

    Raises:
        SingularCovariance: If cov is not invertible
        ZeroMass: If the mass underflows
    """
    mean, cov, signs = _check_orthant_args(mean, cov, signs)
    K = mean.shape[0]
    if K == 1:
        mass, first, second = orthant_moments_1d(mean[0], cov[0, 0], signs[0])
        mass, first, second = float(mass), np.array([first]), np.array([[second]])
    elif K == 2:
        mass, first, second = orthant_moments_2d(mean, cov, signs)
        mass = float(mass)
    else:
        mass, first, second = orthant_moments_mc(mean, cov, signs, rng=rng, numerics=numerics)
    if mass < numerics.zero_mass:
        raise ZeroMass(f"orthant mass {mass:.3e} underflows")
    return mass, first / mass, symmetrize(second / mass)
