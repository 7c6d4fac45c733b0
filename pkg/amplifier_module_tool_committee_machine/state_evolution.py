"""
Asymptotic analysis of Bayes-optimal learning in the committee machine.

The state evolution maps an overlap q to the conjugate q_hat = 2 alpha grad
Psi_out(q) and back to q = 2 grad psi_P0(q_hat). Its fixed points are the
critical points of the replica symmetric free entropy

    f_RS(q, q_hat) = psi_P0(q_hat) + alpha Psi_out(q; rho) - Tr(q_hat q) / 2,

and the branch with the largest f_RS is the Bayes-optimal one. Transitions
between branches are located by bisection on alpha.
"""

import logging
from typing import Callable, Iterable, Optional

import numpy as np

from .channels import channel_integrals, phi_out, posterior_mean_label, prior_overlap, psi_p0
from .config import DEFAULT_NUMERICS, NumericsConfig
from .errors import BracketError, DomainError
from .models import (
    Branch,
    ChannelModel,
    InitKind,
    OverlapPair,
    PriorKind,
    PriorModel,
    SeFixedPoint,
    TransitionKind,
    diagonal_offdiagonal,
)
from .numerics import Rng, clip_psd, spd_sqrt, symmetrize

logger = logging.getLogger(__name__)


def _rho(prior: PriorModel, rho: Optional[np.ndarray]) -> np.ndarray:
    return np.array(prior.rho if rho is None else rho, dtype=float)


def _check_overlap(q: np.ndarray, rho: np.ndarray, numerics: NumericsConfig) -> np.ndarray:
    q = symmetrize(np.atleast_2d(np.asarray(q, dtype=float)))
    if q.shape != rho.shape:
        raise DomainError(f"q has shape {q.shape}, expected {rho.shape}")
    if np.linalg.eigvalsh(q).min() < -numerics.psd_tol:
        raise DomainError("q must be positive semidefinite")
    if np.linalg.eigvalsh(rho - q).min() < -numerics.psd_tol:
        raise DomainError("rho - q must be positive semidefinite")
    return q


def project_onto_overlaps(q: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Clip q back into {q : q >= 0, rho - q >= 0}."""
    q, _ = clip_psd(q, 0.0)
    V, _ = clip_psd(rho - q, 0.0)
    return symmetrize(rho - V)


def _is_infinite(q_hat: np.ndarray) -> bool:
    return not np.all(np.isfinite(np.diag(q_hat)))


# ---------------------------------------------------------------------------
# One step and the free entropy
# ---------------------------------------------------------------------------


def se_step(
    q,
    alpha: float,
    prior: PriorModel,
    ch: ChannelModel,
    rho: Optional[np.ndarray] = None,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
    rng: Optional[Rng] = None,
) -> OverlapPair:
    """
    One Bayes-optimal state evolution step.

    Returns:
        The next overlap and its conjugate; at the perfect point of a noiseless
        channel q = rho and q_hat has an infinite diagonal

    Raises:
        DomainError: If q is not in S_K^+(rho)
    """
    rho = _rho(prior, rho)
    q = _check_overlap(q, rho, numerics)
    K = prior.K
    if alpha == 0:
        q_hat = np.zeros((K, K))
        return OverlapPair(q=project_onto_overlaps(prior_overlap(q_hat, prior, numerics), rho), q_hat=q_hat)

    integrals = channel_integrals(q, rho, ch, numerics, rng)
    if integrals.deterministic:
        return OverlapPair(q=rho.copy(), q_hat=integrals.gain)
    q_hat, _ = clip_psd(alpha * integrals.gain, 0.0)
    q_next = prior_overlap(q_hat, prior, numerics)
    return OverlapPair(q=project_onto_overlaps(q_next, rho), q_hat=q_hat)


def perfect_point_free_entropy(prior: PriorModel, ch: ChannelModel) -> float:
    """
    Free entropy of the perfect-learning point q = rho, q_hat = infinity.

    Only noiseless channels have one. With a Rademacher prior it is the
    entropy cost -K log 2 of the teacher weights; a continuous prior sends it
    to minus infinity.
    """
    if not ch.is_discrete:
        raise DomainError("the linear channel has no perfect-learning point")
    if prior.kind is PriorKind.RADEMACHER:
        return -prior.K * np.log(2.0)
    return -np.inf


def free_entropy(
    q,
    q_hat,
    alpha: float,
    prior: PriorModel,
    ch: ChannelModel,
    rho: Optional[np.ndarray] = None,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> float:
    """Replica symmetric potential psi_P0(q_hat) + alpha Psi_out(q) - Tr(q_hat q) / 2."""
    rho = _rho(prior, rho)
    q_hat = np.atleast_2d(np.asarray(q_hat, dtype=float))
    if _is_infinite(q_hat):
        return perfect_point_free_entropy(prior, ch)
    q = _check_overlap(q, rho, numerics)
    channel = channel_integrals(q, rho, ch, numerics).psi if alpha != 0 else 0.0
    return float(psi_p0(q_hat, prior, numerics) + alpha * channel - 0.5 * np.trace(q_hat @ q))


def generalization_error(
    q,
    prior: PriorModel,
    ch: ChannelModel,
    rho: Optional[np.ndarray] = None,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> float:
    """
    Bayes-optimal generalization error at overlap q.

    E[Y^2] / 2 - E[y_hat^2] / 2 with y_hat the posterior-mean label, evaluated
    with the same deterministic quadrature as the state evolution.
    """
    rho = _rho(prior, rho)
    q = _check_overlap(q, rho, numerics)
    return channel_integrals(q, rho, ch, numerics).gen_error


# ---------------------------------------------------------------------------
# Running to a fixed point
# ---------------------------------------------------------------------------


def initial_overlap(init: InitKind, prior: PriorModel, rho: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Canonical starting overlaps.

    Uninformed: 1e-6 I plus a 1e-4 push on the first unit to let the hidden
    units specialize. Informed: (1 - 1e-6) rho. Symmetric: 1e-6 11^T / K, kept
    on the non-specialized subspace by se_run.
    """
    rho = _rho(prior, rho)
    K = prior.K
    if init is InitKind.UNINFORMED:
        q0 = 1e-6 * np.eye(K)
        q0[0, 0] += 1e-4
        return q0
    if init is InitKind.INFORMED:
        return (1.0 - 1e-6) * rho
    return 1e-6 * np.ones((K, K)) / K


def project_symmetric(q: np.ndarray) -> np.ndarray:
    """Closest matrix of the form c 1 1^T (q00 = q01)."""
    K = q.shape[0]
    return np.full((K, K), float(np.mean(q)))


def classify_branch(q: np.ndarray, rho: np.ndarray, ch: ChannelModel, tol: float, numerics: NumericsConfig = DEFAULT_NUMERICS) -> Branch:
    """Label a fixed point as perfect, specialized or non-specialized."""
    scale = float(np.max(np.diag(rho)))
    gap = float(np.linalg.eigvalsh(symmetrize(rho - q)).max())
    if ch.is_discrete and gap <= numerics.perfect_tol * scale:
        return Branch.PERFECT
    q00, q01 = diagonal_offdiagonal(q)
    if abs(q00 - q01) > max(10.0 * tol, numerics.specialization_floor):
        return Branch.SPECIALIZED
    return Branch.NON_SPECIALIZED


def se_run(
    q0,
    alpha: float,
    prior: PriorModel,
    ch: ChannelModel,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    rho: Optional[np.ndarray] = None,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
    init: InitKind = InitKind.UNINFORMED,
    symmetric: Optional[bool] = None,
) -> SeFixedPoint:
    """
    Iterate the state evolution from q0 until ||q^{t+1} - q^t||_F < tol.

    Args:
        q0: Starting overlap in S_K^+(rho)
        alpha: Sample ratio
        tol: Frobenius tolerance (numerics.se_tol by default)
        max_iters: Iteration cap (numerics.se_max_iters by default)
        init: Recorded on the result; SYMMETRIC also turns on the projection
        symmetric: Project every iterate on c 1 1^T (defaults to init is SYMMETRIC)

    Returns:
        The fixed point with free entropy, generalization error and branch;
        converged is False if max_iters was hit
    """
    rho = _rho(prior, rho)
    tol = numerics.se_tol if tol is None else tol
    max_iters = numerics.se_max_iters if max_iters is None else max_iters
    if symmetric is None:
        symmetric = init is InitKind.SYMMETRIC

    q = _check_overlap(q0, rho, numerics)
    if symmetric:
        q = project_symmetric(q)
    q_hat = np.zeros_like(q)
    residual = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        step = se_step(q, alpha, prior, ch, rho, numerics)
        q_next, q_hat = step.q, step.q_hat
        if symmetric:
            q_next = project_symmetric(q_next)
        residual = float(np.linalg.norm(q_next - q))
        q = q_next
        if iterations % 500 == 0:
            logger.debug(f"SE alpha={alpha:.4f} t={iterations} residual={residual:.3e}")
        if residual < tol:
            converged = True
            break

    if not converged:
        logger.warning(f"SE at alpha={alpha:.4f} ({init.value}) did not converge: residual {residual:.3e} after {iterations} steps")

    # conjugate at the final overlap, so that (q, q_hat) is a critical pair
    if alpha != 0:
        q_hat = se_step(q, alpha, prior, ch, rho, numerics).q_hat
    f_rs = free_entropy(q, q_hat, alpha, prior, ch, rho, numerics)
    branch = classify_branch(q, rho, ch, tol, numerics)
    gen_error = 0.0 if branch is Branch.PERFECT and _is_infinite(q_hat) else generalization_error(q, prior, ch, rho, numerics)
    return SeFixedPoint(
        alpha=float(alpha),
        q=q,
        q_hat=q_hat,
        f_rs=float(f_rs),
        gen_error=float(gen_error),
        branch=branch,
        init=init,
        iterations=iterations,
        converged=converged,
        residual=residual,
    )


def run_from(init: InitKind, alpha: float, prior: PriorModel, ch: ChannelModel, numerics: NumericsConfig = DEFAULT_NUMERICS, rho: Optional[np.ndarray] = None) -> SeFixedPoint:
    """se_run from one of the canonical initializations."""
    return se_run(initial_overlap(init, prior, rho), alpha, prior, ch, rho=rho, numerics=numerics, init=init)


def dominant_fixed_point(points: list[SeFixedPoint], tie_tol: float = DEFAULT_NUMERICS.tie_tol) -> Optional[SeFixedPoint]:
    """
    The fixed point with the largest free entropy.

    Returns None when two different branches tie within tie_tol.
    """
    if not points:
        return None
    ranked = sorted(points, key=lambda p: p.f_rs, reverse=True)
    best = ranked[0]
    for other in ranked[1:]:
        if best.f_rs - other.f_rs > tie_tol:
            break
        if other.branch is not best.branch:
            return None
    return best


def se_sweep(
    alphas: Iterable[float],
    prior: PriorModel,
    ch: ChannelModel,
    inits: Iterable[InitKind] = (InitKind.UNINFORMED, InitKind.INFORMED),
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> list[list[SeFixedPoint]]:
    """
    Fixed points of every initialization at every alpha.

    The globally dominant point of each alpha has dominant=True; on a tie the
    points of that alpha are relabelled as degenerate.
    """
    inits = list(inits)
    results = []
    for alpha in alphas:
        points = [run_from(init, float(alpha), prior, ch, numerics) for init in inits]
        mark_dominant(points, numerics.tie_tol)
        results.append(points)
    return results


def mark_dominant(points: list[SeFixedPoint], tie_tol: float) -> None:
    best = dominant_fixed_point(points, tie_tol)
    if best is None:
        top = max(p.f_rs for p in points)
        for p in points:
            if top - p.f_rs <= tie_tol:
                p.branch = Branch.DEGENERATE
        return
    for p in points:
        p.dominant = p is best or (abs(p.f_rs - best.f_rs) <= tie_tol and p.branch is best.branch)


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------


def transition_indicator(kind: TransitionKind, alpha: float, prior: PriorModel, ch: ChannelModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> bool:
    """
    Whether alpha lies above the transition of the given kind.

    spec: the uninformed run leaves the non-specialized branch without losing
    free entropy against it. spinodal: the informed run ends specialized or
    perfect. it: the non-specialized free entropy drops below the perfect
    point. perf: the uninformed run reaches q00 > 1 - perfect_tol.
    """
    if kind is TransitionKind.SPEC:
        uninformed = run_from(InitKind.UNINFORMED, alpha, prior, ch, numerics)
        if uninformed.branch is Branch.NON_SPECIALIZED:
            return False
        symmetric = run_from(InitKind.SYMMETRIC, alpha, prior, ch, numerics)
        return uninformed.f_rs >= symmetric.f_rs - numerics.tie_tol
    if kind is TransitionKind.SPINODAL:
        informed = run_from(InitKind.INFORMED, alpha, prior, ch, numerics)
        return informed.branch in (Branch.SPECIALIZED, Branch.PERFECT)
    if kind is TransitionKind.IT:
        symmetric = run_from(InitKind.SYMMETRIC, alpha, prior, ch, numerics)
        return symmetric.f_rs < perfect_point_free_entropy(prior, ch)
    uninformed = run_from(InitKind.UNINFORMED, alpha, prior, ch, numerics)
    scale = float(np.mean(np.diag(prior.rho)))
    return uninformed.q00 > (1.0 - numerics.perfect_tol) * scale


def bisect_indicator(indicator: Callable[[float], bool], lo: float, hi: float, tol: float, label: str = "indicator") -> float:
    """Bisection on a monotone boolean indicator; returns the midpoint of the final bracket."""
    at_lo, at_hi = indicator(lo), indicator(hi)
    if at_lo == at_hi:
        raise BracketError(f"{label} is {at_lo} at both alpha={lo:g} and alpha={hi:g}", lo=lo, hi=hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if indicator(mid) == at_lo:
            lo = mid
        else:
            hi = mid
        logger.debug(f"{label}: bracket [{lo:.5f}, {hi:.5f}]")
    return 0.5 * (lo + hi)


def find_transition(
    kind: TransitionKind,
    alpha_lo: float,
    alpha_hi: float,
    prior: PriorModel,
    ch: ChannelModel,
    tol_alpha: Optional[float] = None,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> float:
    """
    Locate a transition by bisection on alpha.

    Raises:
        BracketError: If the indicator agrees at both ends of [alpha_lo, alpha_hi]
    """
    if not 0 <= alpha_lo < alpha_hi:
        raise DomainError(f"invalid bracket [{alpha_lo}, {alpha_hi}]")
    tol_alpha = numerics.alpha_tol if tol_alpha is None else tol_alpha
    logger.info(f"Locating {kind.value} transition in [{alpha_lo}, {alpha_hi}] ({prior.kind.value} prior, {ch.kind.value} channel)")
    alpha = bisect_indicator(
        lambda a: transition_indicator(kind, a, prior, ch, numerics),
        alpha_lo,
        alpha_hi,
        tol_alpha,
        label=f"{kind.value} indicator",
    )
    logger.info(f"{kind.value} transition at alpha={alpha:.4f}")
    return alpha


# ---------------------------------------------------------------------------
# Generalization error by Monte Carlo
# ---------------------------------------------------------------------------


def gen_error_k2(q_d: float, q_a: float, samples: int = 1_000_000, seed: int = 0) -> float:
    """
    Bayes generalization error of the K = 2 committee at a committee-symmetric overlap.

    Samples the four-dimensional Gaussian of a teacher and an independent
    posterior student, both seeing pre-activations with covariance I and
    cross-covariance q; then eps = E[(Y - Y')^2] / 4.
    """
    if not (-1e-12 <= q_d <= 1 + 1e-12 and -1e-12 <= q_a + q_d <= 1 + 1e-12):
        raise DomainError(f"(q_d, q_a) = ({q_d}, {q_a}) is not a valid committee overlap")
    q = q_d * np.eye(2) + 0.5 * q_a * np.ones((2, 2))
    joint = np.block([[np.eye(2), q], [q, np.eye(2)]])
    root = spd_sqrt(joint)
    gen = Rng(seed).generator()
    z = gen.standard_normal((int(samples), 4)) @ root
    ch = ChannelModel.committee(2)
    y_teacher = phi_out(ch, z[:, :2])
    y_student = phi_out(ch, z[:, 2:])
    return float(0.25 * np.mean((y_teacher - y_student) ** 2))


def gibbs_vs_bayes_check(
    q,
    prior: PriorModel,
    ch: ChannelModel,
    samples: int = 200_000,
    seed: int = 0,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> tuple[float, float]:
    """
    Monte Carlo Gibbs and Bayes generalization errors at overlap q.

    The Gibbs student is one independent posterior sample; the Bayes student
    predicts the posterior-mean label. Their errors differ by a factor two.

    Returns:
        (eps_gibbs, eps_bayes)
    """
    rho = np.array(prior.rho, dtype=float)
    q = _check_overlap(q, rho, numerics)
    K = prior.K
    V, _ = clip_psd(rho - q, 0.0)
    sqrt_q = spd_sqrt(q)
    sqrt_v = spd_sqrt(V)
    gen = Rng(seed).generator()
    xi = gen.standard_normal((samples, K))
    u_teacher = gen.standard_normal((samples, K))
    u_student = gen.standard_normal((samples, K))
    omega = xi @ sqrt_q
    y_teacher = phi_out(ch, omega + u_teacher @ sqrt_v)
    y_student = phi_out(ch, omega + u_student @ sqrt_v)
    if not ch.is_discrete:
        noise = np.sqrt(ch.noise)
        y_teacher = y_teacher + noise * gen.standard_normal(samples)
        y_student = y_student + noise * gen.standard_normal(samples)
    y_hat = posterior_mean_label(ch, omega, V, numerics)
    eps_gibbs = 0.5 * float(np.mean((y_student - y_teacher) ** 2))
    eps_bayes = 0.5 * float(np.mean((y_hat - y_teacher) ** 2))
    return eps_gibbs, eps_bayes
