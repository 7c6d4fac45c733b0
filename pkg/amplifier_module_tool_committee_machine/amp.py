"""
Approximate message passing for a finite committee machine.

generate_instance draws a teacher and its training set; amp_run iterates the
AMP equations with Onsager corrections and reports the overlap with the
teacher and the generalization error, both from the overlap and on fresh test
samples.
"""

import logging
import time
from typing import Any, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channels import label_posterior, output_scores, phi_out, posterior_mean_label, prior_moments
from .config import DEFAULT_NUMERICS, NumericsConfig
from .errors import ChannelUnderflow, DomainError, NonPdCovariance
from .models import (
    AmpInit,
    AmpState,
    ChannelKind,
    ChannelModel,
    InstanceSpec,
    LabelPosterior,
    PriorKind,
    PriorModel,
    RunReport,
    TeacherInstance,
    diagonal_offdiagonal,
)
from .numerics import Rng, clip_psd, spd_sqrt, symmetrize
from .state_evolution import generalization_error, project_onto_overlaps

logger = logging.getLogger(__name__)

# rows of X per block in one AMP step
_ROW_BLOCK = 1024
# scale of the random initialization of W_hat
_INIT_SCALE = 0.1
# posterior covariance of the informed initialization, in units of rho
_INFORMED_C = 1e-6

INSTANCE_STREAM = 0
INIT_STREAM = 1
TEST_STREAM = 2


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


def instance_spec(n: int, alpha: float, prior: PriorModel, ch: ChannelModel, seed: int) -> InstanceSpec:
    """
    Descriptor of the instance drawn for (n, alpha, seed).

    Args:
        n: Input dimension (at least 10)
        alpha: Sample ratio; m = round(alpha n)
        prior: Teacher weight prior
        ch: Teacher output channel
        seed: Instance seed

    Raises:
        DomainError: On n < 10 or a negative alpha
    """
    if n < 10:
        raise DomainError(f"n must be at least 10, got {n}")
    if alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    if prior.K != ch.K:
        raise DomainError(f"prior has K={prior.K} but channel has K={ch.K}")
    return InstanceSpec(n=int(n), m=int(round(alpha * n)), seed=int(seed), prior=prior, channel=ch)


def generate_instance(n: int, alpha: float, prior: PriorModel, ch: ChannelModel, seed: int) -> TeacherInstance:
    """Draw X, W* and Y from one seeded stream."""
    return instance_from_spec(instance_spec(n, alpha, prior, ch, seed))


def instance_from_spec(spec: InstanceSpec) -> TeacherInstance:
    """Regenerate an instance from its descriptor; identical specs give identical arrays."""
    n, m, K = spec.n, spec.m, spec.K
    gen = Rng(spec.seed).spawn(INSTANCE_STREAM)
    X = gen.standard_normal((m, n))
    if spec.prior.kind is PriorKind.GAUSSIAN:
        W_star = gen.standard_normal((n, K)) @ np.linalg.cholesky(spec.prior.rho).T
    else:
        W_star = 2.0 * gen.integers(0, 2, size=(n, K)) - 1.0
    Y = phi_out(spec.channel, X @ W_star / np.sqrt(n))
    if spec.channel.kind is ChannelKind.LINEAR:
        Y = Y + np.sqrt(spec.channel.noise) * gen.standard_normal(m)
    logger.debug(f"Generated instance n={n} m={m} K={K} seed={spec.seed}")
    return TeacherInstance(X=X, W_star=W_star, Y=Y, spec=spec)


class InputBlocks:
    """
    Row blocks of X together with their elementwise squares.

    X**2 is computed once and kept when X takes at most
    numerics.amp_cache_bytes; larger inputs are squared block by block into a
    single reused buffer, so each yielded square is only valid until the next
    one is drawn.
    """

    def __init__(self, X: np.ndarray, numerics: NumericsConfig = DEFAULT_NUMERICS, rows: int = _ROW_BLOCK):
        self.X = X
        self.rows = max(1, int(rows))
        m, n = X.shape
        self.cached = X.nbytes <= numerics.amp_cache_bytes
        if self.cached:
            self._squares = np.square(X)
        else:
            self._squares = np.empty((min(self.rows, m), n))
            logger.debug(f"X takes {X.nbytes} bytes; squaring {self.rows} rows at a time")

    def __iter__(self):
        m = self.X.shape[0]
        for start in range(0, m, self.rows):
            stop = min(start + self.rows, m)
            block = self.X[start:stop]
            if self.cached:
                yield start, block, self._squares[start:stop]
            else:
                squares = self._squares[: stop - start]
                np.multiply(block, block, out=squares)
                yield start, block, squares


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


def init_state(inst: TeacherInstance, init: AmpInit = AmpInit.RANDOM) -> AmpState:
    """
    Starting point of the iteration.

    Random: W_hat ~ N(0, 1e-2) from the instance seed, C_hat = rho. Informed:
    W_hat = W*, C_hat = 1e-6 rho. In both cases g = 0 and Sigma = I.
    """
    n, m, K = inst.n, inst.m, inst.K
    rho = inst.prior.rho
    if init is AmpInit.INFORMED:
        W_hat = inst.W_star.copy()
        C_hat = np.broadcast_to(_INFORMED_C * rho, (n, K, K)).copy()
    else:
        W_hat = _INIT_SCALE * Rng(inst.seed).spawn(INIT_STREAM).standard_normal((n, K))
        C_hat = np.broadcast_to(rho, (n, K, K)).copy()
    return AmpState(
        W_hat=W_hat,
        C_hat=C_hat,
        omega=np.zeros((m, K)),
        V=np.broadcast_to(rho, (m, K, K)).copy(),
        g=np.zeros((m, K)),
        dg=np.zeros((m, K, K)),
        Sigma=np.broadcast_to(np.eye(K), (n, K, K)).copy(),
        T=np.zeros((n, K)),
        t=0,
    )


def amp_step(
    state: AmpState,
    inst: TeacherInstance,
    damping: float = 0.0,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
    onsager: bool = True,
    diagnostics: Optional[dict[str, Any]] = None,
    blocks: Optional[InputBlocks] = None,
) -> AmpState:
    """
    One AMP iteration.

    Updates run in the order (omega, V), (g, dg), (T, Sigma), (W_hat, C_hat);
    the new estimates are then blended as (1 - damping) new + damping old.
    The training set is read once: each row block feeds the forward products,
    the output scores and the accumulation of the transposed products.

    Args:
        state: Current iterate (left untouched)
        inst: Training data
        damping: Blend factor in [0, 1)
        onsager: Keep the memory term of the omega update
        diagnostics: Optional dict that receives the eigenvalue clipping counts
        blocks: Row blocks of inst.X, reused across steps (built here if None)

    Raises:
        ChannelUnderflow: If some training label has vanishing likelihood
        NonPdCovariance: If Sigma cannot be repaired
    """
    if not 0.0 <= damping < 1.0:
        raise DomainError(f"damping must lie in [0, 1), got {damping}")
    X, Y = inst.X, inst.Y
    m, n = X.shape
    K = inst.K
    KK = K * K
    floor = numerics.eig_floor
    sqrt_n = np.sqrt(n)
    if blocks is None:
        blocks = InputBlocks(X, numerics)

    # C_hat and the memory kernel Sigma^-1 C_hat Sigma share one product with X**2
    right = state.C_hat.reshape(n, KK)
    memory = onsager and m > 0
    if memory:
        kernel = np.linalg.inv(state.Sigma) @ state.C_hat @ state.Sigma
        right = np.hstack([right, kernel.reshape(n, KK)])

    omega = np.empty((m, K))
    V = np.empty((m, K, K))
    g = np.empty((m, K))
    dg = np.empty((m, K, K))
    B = np.zeros((n, KK))
    Xg = np.zeros((n, K))
    v_clipped = 0
    for start, block, squares in blocks:
        stop = start + block.shape[0]
        rows = slice(start, stop)
        product = squares @ right / n
        V_b, clipped = clip_psd(product[:, :KK].reshape(-1, K, K), floor)
        v_clipped += clipped
        omega_b = block @ state.W_hat / sqrt_n
        if memory:
            omega_b -= np.einsum("mkl,ml->mk", product[:, KK:].reshape(-1, K, K), state.g[rows])
        try:
            _, g_b, dg_b = output_scores(inst.channel, Y[rows], omega_b, V_b, numerics)
        except ChannelUnderflow as e:
            raise ChannelUnderflow(f"AMP step {state.t + 1}, rows {start}-{stop}: {e}") from e
        omega[rows], V[rows], g[rows], dg[rows] = omega_b, V_b, g_b, dg_b
        B += squares.T @ dg_b.reshape(-1, KK)
        Xg += block.T @ g_b

    B = (B / n).reshape(n, K, K)
    A, s_clipped = clip_psd(-B, floor)
    try:
        Sigma = np.linalg.inv(A)
    except np.linalg.LinAlgError as e:
        raise NonPdCovariance(f"AMP step {state.t + 1}: Sigma is singular after repair") from e
    b = Xg / sqrt_n - np.einsum("nkl,nl->nk", B, state.W_hat)
    T = np.einsum("nkl,nl->nk", Sigma, b)

    W_new, C_new, _ = prior_moments(A, b, inst.prior, numerics)
    if damping > 0:
        W_new = (1.0 - damping) * W_new + damping * state.W_hat
        C_new = (1.0 - damping) * C_new + damping * state.C_hat

    if diagnostics is not None:
        diagnostics["v_clipped"] = v_clipped
        diagnostics["sigma_clipped"] = s_clipped
    if v_clipped or s_clipped:
        logger.debug(f"AMP step {state.t + 1}: clipped {v_clipped} eigenvalues of V and {s_clipped} of Sigma^-1")

    return AmpState(W_hat=W_new, C_hat=symmetrize(C_new), omega=omega, V=V, g=g, dg=dg, Sigma=Sigma, T=T, t=state.t + 1)


def stopping_reason(deltas: Sequence[float], tol: float, n: int, numerics: NumericsConfig = DEFAULT_NUMERICS) -> Optional[str]:
    """
    Whether AMP may stop after the last recorded update size.

    Returns "tol" once the last delta is below tol. Returns "noise-floor" when
    the last amp_stall_window deltas all lie below amp_floor_scale / sqrt(n)
    and the means of the window's two halves differ by at most a fraction
    amp_stall_rtol, so the update neither shrinks nor grows. Otherwise None.
    """
    if not deltas:
        return None
    if deltas[-1] < tol:
        return "tol"
    window = numerics.amp_stall_window
    if window < 2 or len(deltas) < window:
        return None
    recent = np.asarray(deltas[-window:], dtype=float)
    if recent.max() >= numerics.amp_floor_scale / np.sqrt(n):
        return None
    half = window // 2
    first, second = recent[:half].mean(), recent[half:].mean()
    if abs(second - first) <= numerics.amp_stall_rtol * first:
        return "noise-floor"
    return None


def amp_run(
    inst: TeacherInstance,
    init: AmpInit = AmpInit.RANDOM,
    damping: Optional[float] = None,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
    onsager: bool = True,
    n_test: int = 0,
) -> tuple[AmpState, RunReport]:
    """
    Iterate amp_step until the mean displacement of the rows of W_hat drops
    below tol, or until it stalls at the finite-n noise floor.

    Args:
        inst: Training data
        init: Random or informed start
        damping: Blend factor (numerics.damping by default)
        tol: Convergence threshold (numerics.amp_tol by default)
        max_iters: Iteration cap (numerics.amp_max_iters by default)
        onsager: Keep the memory term
        n_test: Fresh test samples for the empirical error (0 skips it)

    Returns:
        Final state and its report; converged=False if max_iters was hit
    """
    damping = numerics.damping if damping is None else damping
    tol = numerics.amp_tol if tol is None else tol
    max_iters = numerics.amp_max_iters if max_iters is None else max_iters
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")

    started = time.perf_counter()
    state = init_state(inst, init)
    blocks = InputBlocks(inst.X, numerics)
    trace: list[dict[str, Any]] = []
    deltas: list[float] = []
    reason: Optional[str] = None
    while reason is None and state.t < max_iters:
        info: dict[str, Any] = {}
        new = amp_step(state, inst, damping, numerics, onsager, info, blocks)
        delta = float(np.mean(np.linalg.norm(new.W_hat - state.W_hat, axis=1)))
        _, q00, q01 = measure_overlap(new.W_hat, inst.W_star)
        trace.append({"t": new.t, "delta": delta, "q00": q00, "q01": q01, **info})
        deltas.append(delta)
        state = new
        if new.t % 50 == 0:
            logger.debug(f"AMP t={new.t} delta={delta:.3e} q00={q00:.4f} q01={q01:.4f}")
        reason = "tol" if inst.m == 0 else stopping_reason(deltas, tol, inst.n, numerics)

    converged = reason is not None
    if reason == "noise-floor":
        logger.info(f"AMP (n={inst.n}, alpha={inst.alpha:.3f}, seed={inst.seed}) stalled at delta={deltas[-1]:.3e} after {state.t} steps")
    if not converged:
        reason = "max-iters"
        logger.warning(f"AMP (n={inst.n}, alpha={inst.alpha:.3f}, seed={inst.seed}) did not converge in {max_iters} iterations")

    q_emp, q00, q01 = measure_overlap(state.W_hat, inst.W_star)
    q_amp = self_overlap(state, inst.prior)
    closed = generalization_error(q_amp, inst.prior, inst.channel, numerics=numerics)
    empirical = empirical_gen_error(state, inst, n_test, seed=inst.seed, q_amp=q_amp, numerics=numerics) if n_test else float("nan")
    report = RunReport(
        q_emp=q_emp,
        q00=q00,
        q01=q01,
        gen_error_closed=float(closed),
        gen_error_empirical=float(empirical),
        iterations=state.t,
        converged=converged,
        trace=trace,
        stop_reason=reason,
    )
    logger.info(f"AMP alpha={inst.alpha:.3f} seed={inst.seed}: q00={q00:.4f} q01={q01:.4f} after {state.t} steps in {time.perf_counter() - started:.1f}s")
    return state, report


# ---------------------------------------------------------------------------
# Overlaps and prediction
# ---------------------------------------------------------------------------


def align_overlap(q_emp: np.ndarray) -> np.ndarray:
    """Permute the student units so the largest |q| entries sit on the diagonal."""
    rows, cols = linear_sum_assignment(-np.abs(q_emp))
    aligned = np.empty_like(q_emp)
    aligned[rows] = q_emp[rows][:, cols]
    return aligned


def measure_overlap(W_hat: np.ndarray, W_star: np.ndarray) -> tuple[np.ndarray, float, float]:
    """
    Raw overlap W_hat^T W* / n and its aligned (q00, q01).

    Units are matched by maximum weight bipartite matching on |q|; signs are
    never flipped.
    """
    if W_hat.shape != W_star.shape:
        raise DomainError(f"W_hat has shape {W_hat.shape}, W_star has shape {W_star.shape}")
    n = W_hat.shape[0]
    q_emp = W_hat.T @ W_star / n
    q00, q01 = diagonal_offdiagonal(align_overlap(q_emp))
    return q_emp, q00, q01


def self_overlap(state: AmpState, prior: PriorModel) -> np.ndarray:
    """W_hat^T W_hat / n projected into {0 <= q <= rho}; at Bayes optimality it equals the teacher overlap."""
    n = state.W_hat.shape[0]
    return project_onto_overlaps(symmetrize(state.W_hat.T @ state.W_hat / n), prior.rho)


def _prediction_covariance(prior: PriorModel, q_amp, numerics: NumericsConfig) -> np.ndarray:
    V = symmetrize(prior.rho - np.asarray(q_amp, dtype=float))
    lowest = float(np.linalg.eigvalsh(V).min())
    if lowest < -numerics.psd_tol:
        raise DomainError(f"rho - q_amp has eigenvalue {lowest:.3e}")
    if lowest < 0:
        V, _ = clip_psd(V, 0.0)
    return V


def predict_label(
    x_new: np.ndarray,
    state: AmpState,
    prior: PriorModel,
    ch: ChannelModel,
    q_amp: np.ndarray,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> tuple[float, LabelPosterior]:
    """
    Posterior-mean label of a new input.

    omega = x W_hat / sqrt(n) and V = rho - q_amp.

    Raises:
        DomainError: If rho - q_amp is not PSD
    """
    x_new = np.asarray(x_new, dtype=float)
    omega = x_new @ state.W_hat / np.sqrt(x_new.shape[0])
    posterior = label_posterior(omega, _prediction_covariance(prior, q_amp, numerics), ch, numerics)
    return posterior.mean, posterior


def empirical_gen_error(
    state: AmpState,
    inst: TeacherInstance,
    n_test: int = 100_000,
    seed: int = 0,
    q_amp: Optional[np.ndarray] = None,
    numerics: NumericsConfig = DEFAULT_NUMERICS,
) -> float:
    """
    Bayes generalization error on fresh Gaussian test inputs.

    For x ~ N(0, I_n) the pair (x W_hat / sqrt(n), x W* / sqrt(n)) is exactly
    Gaussian with the Gram matrix of (W_hat, W*) / n as covariance, so the test
    set is drawn in that 2K-dimensional space.

    Args:
        state: Estimator (only W_hat is used)
        inst: Instance holding the teacher
        n_test: Number of test samples (at least 1000)
        seed: Seed of the test stream
        q_amp: Overlap used for the predictive covariance (self_overlap by default)
    """
    if n_test < 1000:
        raise DomainError(f"n_test must be at least 1000, got {n_test}")
    K, n = inst.K, inst.n
    ch = inst.channel
    if q_amp is None:
        q_amp = self_overlap(state, inst.prior)
    joint = np.hstack([state.W_hat, inst.W_star])
    gram = joint.T @ joint / n
    gen = Rng(seed).spawn(TEST_STREAM)
    sample = gen.standard_normal((int(n_test), 2 * K)) @ spd_sqrt(gram, numerics.psd_tol)
    omega, z_star = sample[:, :K], sample[:, K:]
    y = phi_out(ch, z_star)
    if ch.kind is ChannelKind.LINEAR:
        y = y + np.sqrt(ch.noise) * gen.standard_normal(int(n_test))
    y_hat = posterior_mean_label(ch, omega, _prediction_covariance(inst.prior, q_amp, numerics), numerics)
    return float(0.5 * np.mean((y_hat - y) ** 2))
