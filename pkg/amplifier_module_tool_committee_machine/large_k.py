"""
Committee machine with many hidden units.

Under the committee-symmetric ansatz q = q_d I + (q_a / K) 1 1^T with a
Gaussian prior, the channel side reduces to one scalar integral

    I_C(gamma) = 2 E_x[H(c x) log H(c x)],   c = sqrt(gamma / (1 - gamma)),

of the effective correlation gamma = (2/pi)(q_a + arcsin q_d). Two regimes
are analyzed: alpha of order one (only the non-specialized solution exists)
and alpha = alpha_tilde K, where a specialized branch appears at a spinodal
and takes over at a free-entropy crossing.
"""

import logging
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfcx

from .config import DEFAULT_NUMERICS, NumericsConfig
from .errors import DomainError
from .models import Branch, LargeKBranch, LargeKPoint, TransitionKind
from .numerics import SQRT_2PI, gauss_hermite, log_h, normal_pdf
from .state_evolution import bisect_indicator

logger = logging.getLogger(__name__)

TWO_OVER_PI = 2.0 / np.pi

# gamma this close to one is treated as the saturated limit I_C = 0
_GAMMA_SATURATION = 1e-12
# below this c, dI_C/dgamma is replaced by its limit 1/pi
_SMALL_C = 1e-8


def _nodes(numerics: NumericsConfig):
    rule = gauss_hermite(max(2 * numerics.gh_nodes, 60))
    return rule.nodes, rule.weights


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 <= gamma < 1.0:
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")
    return gamma


def _h_over_pdf(t: np.ndarray) -> np.ndarray:
    """H(t) / phi(t) without overflow for moderate t."""
    return 0.5 * SQRT_2PI * erfcx(t / np.sqrt(2.0))


def i_c_large_k(gamma: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """
    Channel integral I_C(gamma), a value in [-log 2, 0].

    Raises:
        DomainError: If gamma is negative or at least one
    """
    gamma = _check_gamma(gamma)
    if gamma >= 1.0 - _GAMMA_SATURATION:
        return 0.0
    c = np.sqrt(gamma / (1.0 - gamma))
    x, w = _nodes(numerics)
    if c <= 1.0:
        h = np.exp(log_h(c * x))
        return float(2.0 * w @ (h * log_h(c * x)))
    # t = c x keeps the nodes where H log H varies
    t = x
    integrand = normal_pdf(t / c) * _h_over_pdf(t) * log_h(t)
    return float(2.0 / c * w @ integrand)


def i_c_derivative(gamma: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """dI_C / dgamma, positive on [0, 1) with limit 1/pi at gamma = 0."""
    gamma = _check_gamma(gamma)
    gamma = min(gamma, 1.0 - _GAMMA_SATURATION)
    c = np.sqrt(gamma / (1.0 - gamma))
    if c < _SMALL_C:
        return 1.0 / np.pi
    x, w = _nodes(numerics)
    if c <= 1.0:
        di_dc = -2.0 * w @ (x * normal_pdf(c * x) * log_h(c * x))
    else:
        t = x
        di_dc = -2.0 / c**2 * w @ (normal_pdf(t / c) * t * log_h(t))
    dc_dgamma = 1.0 / (2.0 * c * (1.0 - gamma) ** 2)
    return float(di_dc * dc_dgamma)


def i_c_gradient(q_d: float, q_a: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> tuple[float, float]:
    """(dI_C/dq_d, dI_C/dq_a) through gamma = (2/pi)(q_a + arcsin q_d)."""
    gamma = TWO_OVER_PI * (q_a + np.arcsin(q_d))
    d = TWO_OVER_PI * i_c_derivative(gamma, numerics)
    return d / np.sqrt(1.0 - q_d * q_d), d


def gen_error_large_k(q_d: float, q_a: float) -> float:
    """
    Generalization error arccos(gamma) / pi of the committee output.

    Raises:
        DomainError: If gamma falls outside [0, 1]
    """
    if not -1.0 <= q_d <= 1.0:
        raise DomainError(f"q_d must lie in [-1, 1], got {q_d}")
    gamma = TWO_OVER_PI * (q_a + np.arcsin(q_d))
    if not -1e-12 <= gamma <= 1.0 + 1e-12:
        raise DomainError(f"gamma = {gamma} is outside [0, 1]")
    return float(np.arccos(np.clip(gamma, 0.0, 1.0)) / np.pi)


def plateau_error() -> float:
    """Error of the non-specialized scaled branch, arccos(2/pi)/pi."""
    return gen_error_large_k(0.0, 1.0)


# ---------------------------------------------------------------------------
# alpha of order one
# ---------------------------------------------------------------------------


def _unscaled_residual(q_a: float, alpha: float, numerics: NumericsConfig) -> float:
    return q_a - 2.0 * alpha * (1.0 - q_a) * TWO_OVER_PI * i_c_derivative(TWO_OVER_PI * q_a, numerics)


def solve_unscaled(alpha: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> LargeKBranch:
    """
    Non-specialized fixed point q_a = 2 alpha (1 - q_a) dI_C/dq_a at q_d = 0.

    Raises:
        DomainError: If alpha is negative
    """
    if alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    converged = True
    if alpha == 0:
        q_a = 0.0
    else:
        try:
            q_a = brentq(_unscaled_residual, 0.0, 1.0 - 1e-15, args=(alpha, numerics), xtol=1e-14, maxiter=200)
        except (ValueError, RuntimeError) as e:
            logger.warning(f"Unscaled large-K solve failed at alpha={alpha}: {e}")
            q_a, converged = float("nan"), False

    free_entropy = 0.5 * q_a + 0.5 * np.log1p(-q_a) + alpha * i_c_large_k(TWO_OVER_PI * q_a, numerics) if converged else float("nan")
    return LargeKBranch(
        alpha_tilde=float(alpha),
        point=LargeKPoint(q_d=0.0, q_a=float(q_a)),
        free_entropy=float(free_entropy),
        gen_error=gen_error_large_k(0.0, q_a) if converged else float("nan"),
        label=Branch.NON_SPECIALIZED,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# alpha = alpha_tilde K
# ---------------------------------------------------------------------------


def _gamma0(q_d: float) -> float:
    # q_a = 1 - q_d to leading order in 1/K
    return float(TWO_OVER_PI * (1.0 - q_d + np.arcsin(q_d)))


def specialization_drive(q_d: float, alpha_tilde: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """F(q_d) = 2 alpha_tilde (2/pi) I_C'(gamma0) (1 / sqrt(1 - q_d^2) - 1)."""
    slope = TWO_OVER_PI * i_c_derivative(_gamma0(q_d), numerics)
    return float(2.0 * alpha_tilde * slope * (1.0 / np.sqrt(1.0 - q_d * q_d) - 1.0))


def scaled_residual(q_d: float, alpha_tilde: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """q_d - (1 - q_d) F(q_d); its zeros are the fixed points of the scaled regime."""
    return float(q_d - (1.0 - q_d) * specialization_drive(q_d, alpha_tilde, numerics))


def scaled_free_entropy(q_d: float, alpha_tilde: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """Free entropy per hidden unit, (q_d + log(1 - q_d)) / 2 + alpha_tilde I_C(gamma0)."""
    return float(0.5 * (q_d + np.log1p(-q_d)) + alpha_tilde * i_c_large_k(_gamma0(q_d), numerics))


def _scan_grid(numerics: NumericsConfig) -> np.ndarray:
    """
    Points at which the sign of scaled_residual is sampled.

    The multi-start grid {grid_step, 2 grid_step, ...} is refined tenfold, so
    it still contains every multi-start point, and extended with logarithmic
    points towards q_d = 0 and q_d = 1. Two roots closer than grid_step / 10
    away from the ends can share one interval and be missed; specialized roots
    crowd towards q_d = 1, where the log points separate them.
    """
    step = numerics.grid_step / 10.0
    uniform = np.arange(step, 1.0, step)
    near_zero = np.logspace(-5, np.log10(step), 9)
    near_one = 1.0 - np.logspace(np.log10(step), -11, 40)
    return np.unique(np.concatenate([uniform, near_zero, near_one]))


def _scaled_branch(q_d: float, alpha_tilde: float, numerics: NumericsConfig) -> LargeKBranch:
    h = 1e-3 * min(q_d, 1.0 - q_d)
    if q_d == 0.0:
        slope = 1.0
    else:
        slope = (scaled_residual(q_d + h, alpha_tilde, numerics) - scaled_residual(q_d - h, alpha_tilde, numerics)) / (2 * h)
    drive = 2.0 * alpha_tilde * TWO_OVER_PI * i_c_derivative(_gamma0(q_d), numerics)
    point = LargeKPoint(q_d=float(q_d), q_a=float(1.0 - q_d), chi=float(1.0 / drive) if drive > 0 else float("inf"))
    return LargeKBranch(
        alpha_tilde=float(alpha_tilde),
        point=point,
        free_entropy=scaled_free_entropy(q_d, alpha_tilde, numerics),
        gen_error=gen_error_large_k(point.q_d, point.q_a),
        label=Branch.NON_SPECIALIZED if q_d == 0.0 else Branch.SPECIALIZED,
        stable=bool(slope > 0),
    )


def solve_scaled(alpha_tilde: float, numerics: NumericsConfig = DEFAULT_NUMERICS, stable_only: bool = False) -> list[LargeKBranch]:
    """
    Every fixed point of the scaled regime, sorted by q_d.

    The q_d = 0 solution is always present. Other roots are bracketed on a
    deterministic grid refined near both ends of [0, 1] and polished with
    Brent's method; roots closer than merge_tol are merged. The branch with the
    largest free entropy is marked dominant.

    Args:
        alpha_tilde: alpha / K
        stable_only: Drop locally unstable roots

    Raises:
        DomainError: If alpha_tilde is not positive
    """
    if alpha_tilde <= 0:
        raise DomainError(f"alpha_tilde must be positive, got {alpha_tilde}")

    grid = _scan_grid(numerics)
    values = np.array([scaled_residual(q, alpha_tilde, numerics) for q in grid])
    roots = [0.0]
    for i in np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0):
        root = brentq(scaled_residual, grid[i], grid[i + 1], args=(alpha_tilde, numerics), xtol=1e-15, rtol=1e-14)
        if all(abs(root - r) > numerics.merge_tol for r in roots):
            roots.append(float(root))

    branches = [_scaled_branch(q, alpha_tilde, numerics) for q in sorted(roots)]
    if stable_only:
        branches = [b for b in branches if b.stable]
    candidates = [b for b in branches if b.stable] or branches
    best = max(candidates, key=lambda b: b.free_entropy)
    ties = [b for b in candidates if abs(b.free_entropy - best.free_entropy) <= numerics.tie_tol]
    if len(ties) == 1:
        best.dominant = True
    logger.debug(f"alpha_tilde={alpha_tilde:.4f}: roots {[round(b.point.q_d, 6) for b in branches]}")
    return branches


def dominant_branch(alpha_tilde: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> Optional[LargeKBranch]:
    """Globally dominant stable branch, None on an exact tie."""
    for branch in solve_scaled(alpha_tilde, numerics, stable_only=True):
        if branch.dominant:
            return branch
    return None


def iterate_scaled(
    alpha_tilde: float,
    q_d0: float = 1e-3,
    tol: float = 1e-12,
    max_iters: int = 10_000,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> LargeKBranch:
    """
    Iterate q_d <- F / (1 + F) from q_d0.

    From a small q_d0 the iteration falls back to the plateau q_d = 0 at any
    alpha_tilde, which is why message passing from an uninformed start stays
    on the non-specialized branch.
    """
    if not 0.0 <= q_d0 < 1.0:
        raise DomainError(f"q_d0 must lie in [0, 1), got {q_d0}")
    q_d = float(q_d0)
    converged = False
    for it in range(1, max_iters + 1):
        drive = specialization_drive(q_d, alpha_tilde, numerics)
        q_next = drive / (1.0 + drive)
        step = abs(q_next - q_d)
        q_d = q_next
        if step < tol:
            converged = True
            break
    if not converged:
        logger.warning(f"Scaled iteration at alpha_tilde={alpha_tilde} stopped after {max_iters} steps")
    if q_d < tol:
        q_d = 0.0
    branch = _scaled_branch(q_d, alpha_tilde, numerics)
    branch.converged = converged
    return branch


def stability_nonspecialized(alpha_tilde: float, step: float = 1e-4, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """
    dF/dq_d at q_d = 0 by central differences.

    It vanishes at leading order in 1/K, so the non-specialized solution never
    loses linear stability and the specialized branch can only be found by
    scanning.
    """
    return (specialization_drive(step, alpha_tilde, numerics) - specialization_drive(-step, alpha_tilde, numerics)) / (2.0 * step)


def _has_specialized(alpha_tilde: float, numerics: NumericsConfig) -> bool:
    return any(b.label is Branch.SPECIALIZED for b in solve_scaled(alpha_tilde, numerics, stable_only=True))


def _specialized_dominant(alpha_tilde: float, numerics: NumericsConfig) -> bool:
    best = dominant_branch(alpha_tilde, numerics)
    return best is not None and best.label is Branch.SPECIALIZED


def large_k_transition(
    kind: TransitionKind,
    lo: float = 5.0,
    hi: float = 12.0,
    tol: Optional[float] = None,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> float:
    """
    Locate the spinodal (first stable specialized root) or the free-entropy
    crossing (kind spec) in alpha_tilde.

    Raises:
        DomainError: For kinds without a large-K counterpart
        BracketError: If the indicator agrees at both ends
    """
    tol = numerics.alpha_tol if tol is None else tol
    if kind is TransitionKind.SPINODAL:
        indicator = lambda a: _has_specialized(a, numerics)  # noqa: E731
    elif kind is TransitionKind.SPEC:
        indicator = lambda a: _specialized_dominant(a, numerics)  # noqa: E731
    else:
        raise DomainError(f"no large-K {kind.value} transition; use spinodal or spec")
    alpha_tilde = bisect_indicator(indicator, lo, hi, tol, label=f"large-K {kind.value}")
    logger.info(f"Large-K {kind.value} transition at alpha_tilde={alpha_tilde:.4f}")
    return alpha_tilde
