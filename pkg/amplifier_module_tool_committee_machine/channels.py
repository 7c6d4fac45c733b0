"""
Priors and output channels.

Prior side: the posterior moments f_w / f_c of a K-dimensional weight seen
through a Gaussian measurement, and the free entropy psi_P0 of that scalar
problem. Channel side: the likelihood z_out of a label given z ~ N(omega, V),
its score g_out and Jacobian dg_out, and the free entropy Psi_out. Batched
variants feed AMP (one evaluation per sample) and state evolution (one per
quadrature node).
"""

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from .config import DEFAULT_NUMERICS, NumericsConfig
from .errors import DomainError, ImpossibleOutcome, SingularSigma, UnsupportedLabel
from .models import ChannelKind, ChannelModel, LabelPosterior, PriorKind, PriorModel
from .numerics import (
    Rng,
    gauss_hermite,
    half_line_rule,
    orthant_moments_1d,
    orthant_moments_2d,
    polar_rule,
    spd_sqrt,
    symmetrize,
)

logger = logging.getLogger(__name__)

LOG2 = np.log(2.0)


# ---------------------------------------------------------------------------
# Output functions and label structure
# ---------------------------------------------------------------------------


def phi_out(ch: ChannelModel, z: np.ndarray) -> np.ndarray:
    """Noiseless network output for pre-activations z of shape (..., K)."""
    z = np.asarray(z, dtype=float)
    if ch.kind is ChannelKind.COMMITTEE:
        return np.sign(np.sign(z).sum(axis=-1))
    if ch.kind is ChannelKind.PARITY:
        return np.prod(np.sign(z), axis=-1)
    return z.sum(axis=-1) / np.sqrt(ch.K)


@lru_cache(maxsize=32)
def orthant_signs(K: int) -> np.ndarray:
    """All 2^K sign vectors, one per row."""
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=K)))
    signs.setflags(write=False)
    return signs


@lru_cache(maxsize=32)
def _orthant_labels(ch: ChannelModel) -> np.ndarray:
    return phi_out(ch, orthant_signs(ch.K))


def label_orthants(ch: ChannelModel, y: float) -> np.ndarray:
    """Sign vectors of the orthants whose points all produce label y."""
    _check_label(ch, y)
    return orthant_signs(ch.K)[_orthant_labels(ch) == y]


def _check_label(ch: ChannelModel, y) -> None:
    if not ch.is_discrete:
        return
    values = np.unique(np.asarray(y, dtype=float))
    bad = [v for v in values if v not in ch.labels]
    if bad:
        raise UnsupportedLabel(f"label {bad[0]:g} is outside the support {ch.labels} of the {ch.kind.value} channel")


# ---------------------------------------------------------------------------
# Batched channel moments
# ---------------------------------------------------------------------------


def _orthant_table(ch: ChannelModel, omega: np.ndarray, V: np.ndarray):
    """Unnormalized orthant moments for K <= 2, stacked over the 2^K orthants."""
    K = ch.K
    masses, firsts, seconds = [], [], []
    for signs in orthant_signs(K):
        if K == 1:
            mass, first, second = orthant_moments_1d(omega[..., 0], V[..., 0, 0], signs[0])
            first = first[..., None]
            second = np.asarray(second)[..., None, None]
        else:
            mass, first, second = orthant_moments_2d(omega, V, signs)
        masses.append(np.broadcast_to(mass, omega.shape[:-1]))
        firsts.append(np.broadcast_to(first, omega.shape))
        seconds.append(np.broadcast_to(second, omega.shape + (K,)))
    return np.stack(masses, -1), np.stack(firsts, -2), np.stack(seconds, -3)


def _mc_label_moments(ch: ChannelModel, y: np.ndarray, omega: np.ndarray, V: np.ndarray, numerics: NumericsConfig, rng: Optional[Rng]):
    """Label-conditioned moments for K >= 3 by common-random-number Monte Carlo."""
    N, K = omega.shape
    V = np.broadcast_to(V, (N, K, K))
    L = np.linalg.cholesky(symmetrize(V))
    samples = int(numerics.mc_samples)
    eps = (rng or Rng(numerics.mc_seed)).generator().standard_normal((samples, K))
    chunk = max(1, 2_000_000 // samples)
    Z = np.empty(N)
    M1 = np.empty((N, K))
    M2 = np.empty((N, K, K))
    for start in range(0, N, chunk):
        stop = min(N, start + chunk)
        dz = np.einsum("sk,njk->nsj", eps, L[start:stop])
        inside = phi_out(ch, omega[start:stop, None, :] + dz) == y[start:stop, None]
        Z[start:stop] = inside.mean(axis=1)
        dzi = dz * inside[..., None]
        M1[start:stop] = dzi.mean(axis=1)
        M2[start:stop] = np.einsum("nsk,nsl->nkl", dzi, dz) / samples
    return Z, M1, M2


def label_moments(ch: ChannelModel, y, omega, V, numerics: NumericsConfig = DEFAULT_NUMERICS, rng: Optional[Rng] = None):
    """
    Likelihood and unnormalized moments of z - omega restricted to label y.

    Args:
        y: (N,) labels
        omega: (N, K) means
        V: (N, K, K) or shared (K, K) covariance

    Returns:
        Z (N,), E[(z - omega) 1_y] (N, K), E[(z - omega)(z - omega)^T 1_y] (N, K, K)
    """
    y = np.asarray(y, dtype=float)
    omega = np.asarray(omega, dtype=float)
    V = np.asarray(V, dtype=float)
    _check_label(ch, y)
    if ch.K >= 3:
        logger.debug(f"Channel moments for K={ch.K} use Monte Carlo with {numerics.mc_samples} samples")
        return _mc_label_moments(ch, y, omega, V, numerics, rng)
    masses, firsts, seconds = _orthant_table(ch, omega, V)
    member = (_orthant_labels(ch)[None, :] == y[:, None]).astype(float)
    Z = np.einsum("no,no->n", member, masses)
    M1 = np.einsum("no,nok->nk", member, firsts)
    M2 = np.einsum("no,nokl->nkl", member, seconds)
    return Z, M1, M2


def label_probabilities(ch: ChannelModel, omega, V, numerics: NumericsConfig = DEFAULT_NUMERICS, rng: Optional[Rng] = None) -> np.ndarray:
    """
    Probability of every label of the support for each row of omega.

    Returns:
        (N, L) array ordered as ch.labels
    """
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    V = np.asarray(V, dtype=float)
    labels = np.asarray(ch.labels, dtype=float)
    if not ch.is_discrete:
        raise UnsupportedLabel("the linear channel has no finite label support")
    if _is_deterministic(V, numerics):
        out = phi_out(ch, omega)
        return (out[:, None] == labels[None, :]).astype(float)
    if ch.K >= 3:
        N, K = omega.shape
        L = np.linalg.cholesky(symmetrize(np.broadcast_to(V, (N, K, K))))
        eps = (rng or Rng(numerics.mc_seed)).generator().standard_normal((numerics.mc_samples, K))
        probs = np.empty((N, labels.size))
        chunk = max(1, 2_000_000 // numerics.mc_samples)
        for start in range(0, N, chunk):
            stop = min(N, start + chunk)
            z = omega[start:stop, None, :] + np.einsum("sk,njk->nsj", eps, L[start:stop])
            out = phi_out(ch, z)
            probs[start:stop] = (out[..., None] == labels).mean(axis=1)
        return probs
    masses, _, _ = _orthant_table(ch, omega, V)
    member = (_orthant_labels(ch)[:, None] == labels[None, :]).astype(float)
    return masses @ member


def _is_deterministic(V: np.ndarray, numerics: NumericsConfig) -> bool:
    return bool(np.max(np.abs(V)) <= numerics.eig_floor)


def output_scores(ch: ChannelModel, y, omega, V, numerics: NumericsConfig = DEFAULT_NUMERICS, rng: Optional[Rng] = None):
    """
    Batched z_out, g_out and dg_out.

    Returns:
        Z (N,), g (N, K), dg (N, K, K)

    Raises:
        ImpossibleOutcome: If some likelihood underflows
    """
    y = np.asarray(y, dtype=float)
    omega = np.asarray(omega, dtype=float)
    V = np.asarray(V, dtype=float)
    N, K = omega.shape

    if ch.kind is ChannelKind.LINEAR:
        mean = omega.sum(axis=-1) / np.sqrt(K)
        var = np.broadcast_to(V, (N, K, K)).sum(axis=(-1, -2)) / K + ch.noise
        Z = np.exp(-0.5 * (y - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)
        g = np.repeat(((y - mean) / (np.sqrt(K) * var))[:, None], K, axis=1)
        dg = -np.ones((N, K, K)) / (K * var)[:, None, None]
        return Z, g, dg

    Z, M1, M2 = label_moments(ch, y, omega, V, numerics, rng)
    if np.any(Z < numerics.zero_mass):
        worst = int(np.argmin(Z))
        raise ImpossibleOutcome(f"z_out({y[worst]:g}) = {Z[worst]:.3e} underflows at sample {worst}")
    Vinv = np.linalg.inv(np.broadcast_to(V, (N, K, K)))
    g = np.einsum("nkl,nl->nk", Vinv, M1) / Z[:, None]
    conditioned = M2 / Z[:, None, None]
    dg = Vinv @ conditioned @ Vinv - Vinv - g[:, :, None] * g[:, None, :]
    return Z, g, symmetrize(dg)


# ---------------------------------------------------------------------------
# Single-point channel functions
# ---------------------------------------------------------------------------


def _single(ch: ChannelModel, y, omega, V):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if omega.shape != (ch.K,) or V.shape != (ch.K, ch.K):
        raise DomainError(f"expected omega of shape ({ch.K},) and V of shape ({ch.K}, {ch.K})")
    if np.linalg.eigvalsh(symmetrize(V)).min() <= 0:
        raise DomainError("V must be strictly positive definite")
    return np.array([float(y)]), omega[None, :], V[None, :, :]


def z_out(y, omega, V, ch: ChannelModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """Likelihood of label y under z ~ N(omega, V) (a density for the linear channel)."""
    y, omega, V = _single(ch, y, omega, V)
    if ch.kind is ChannelKind.LINEAR:
        return float(output_scores(ch, y, omega, V, numerics)[0][0])
    return float(label_moments(ch, y, omega, V, numerics)[0][0])


def g_out(omega, y, V, ch: ChannelModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """Score of the channel, d/d omega log z_out."""
    y, omega, V = _single(ch, y, omega, V)
    return output_scores(ch, y, omega, V, numerics)[1][0]


def dg_out(omega, y, V, ch: ChannelModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """Jacobian of g_out in omega."""
    y, omega, V = _single(ch, y, omega, V)
    return output_scores(ch, y, omega, V, numerics)[2][0]


def label_posterior(omega, V, ch: ChannelModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> LabelPosterior:
    """
    Predictive label distribution under z ~ N(omega, V).

    V = 0 is allowed and gives the one-hot distribution on phi_out(omega).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if ch.kind is ChannelKind.LINEAR:
        mean = float(omega.sum() / np.sqrt(ch.K))
        variance = float(V.sum() / ch.K + ch.noise)
        return LabelPosterior(labels=(), probabilities=np.empty(0), mean=mean, variance=variance)
    probs = label_probabilities(ch, omega[None, :], V, numerics)[0]
    labels = np.asarray(ch.labels, dtype=float)
    mean = float(probs @ labels)
    variance = float(probs @ labels**2 - mean**2)
    return LabelPosterior(labels=ch.labels, probabilities=probs, mean=mean, variance=variance)


def posterior_mean_label(ch: ChannelModel, omega, V, numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """Batched posterior-mean label for rows of omega under a shared V."""
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    if ch.kind is ChannelKind.LINEAR:
        return omega.sum(axis=-1) / np.sqrt(ch.K)
    probs = label_probabilities(ch, omega, V, numerics)
    return probs @ np.asarray(ch.labels, dtype=float)


# ---------------------------------------------------------------------------
# Prior side
# ---------------------------------------------------------------------------


def prior_moments(A: np.ndarray, b: np.ndarray, prior: PriorModel, numerics: NumericsConfig = DEFAULT_NUMERICS):
    """
    Moments of Q0(W) ~ P0(W) exp(-W^T A W / 2 + b^T W) in natural parameters.

    Args:
        A: (N, K, K) precision-like matrices (Sigma^{-1})
        b: (N, K) linear terms (Sigma^{-1} T)

    Returns:
        mean (N, K), covariance (N, K, K), log normalization (N,)
    """
    A = symmetrize(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    K = prior.K

    if prior.kind is PriorKind.GAUSSIAN:
        rho = prior.rho
        precision = np.linalg.inv(rho) + A
        cov = symmetrize(np.linalg.inv(precision))
        mean = np.einsum("nkl,nl->nk", cov, b)
        _, logdet = np.linalg.slogdet(np.eye(K) + rho @ A)
        log_z = 0.5 * np.einsum("nk,nk->n", b, mean) - 0.5 * logdet
        return mean, cov, log_z

    if K > numerics.rademacher_max_k:
        raise DomainError(f"Rademacher enumeration is capped at K={numerics.rademacher_max_k}, got K={K}")
    configs = orthant_signs(K)
    quad = np.einsum("ck,nkl,cl->nc", configs, A, configs)
    logits = b @ configs.T - 0.5 * quad
    log_z = logsumexp(logits, axis=-1) - K * LOG2
    probs = softmax(logits, axis=-1)
    mean = probs @ configs
    second = np.einsum("nc,ck,cl->nkl", probs, configs, configs)
    cov = symmetrize(second - mean[:, :, None] * mean[:, None, :])
    return mean, cov, log_z


def _natural(Sigma, T) -> tuple[np.ndarray, np.ndarray]:
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    T = np.atleast_1d(np.asarray(T, dtype=float))
    if np.linalg.cond(Sigma) > 1e14:
        raise SingularSigma("Sigma is singular")
    A = symmetrize(np.linalg.inv(Sigma))
    return A[None, :, :], (A @ T)[None, :]


def f_w(Sigma, T, prior: PriorModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """Posterior mean of W under prior P0 and a Gaussian measurement with mean T and covariance Sigma."""
    A, b = _natural(Sigma, T)
    return prior_moments(A, b, prior, numerics)[0][0]


def f_c(Sigma, T, prior: PriorModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """Posterior covariance matching f_w."""
    A, b = _natural(Sigma, T)
    return prior_moments(A, b, prior, numerics)[1][0]


def _prior_quadrature(r: np.ndarray, prior: PriorModel, numerics: NumericsConfig):
    """Natural parameters of the scalar problem Y0 = r^{1/2} W0 + Z0 at every (W0, Z0) node."""
    K = prior.K
    points, weights = gauss_hermite(numerics.gh_nodes).tensor(K)
    configs = orthant_signs(K)
    sqrt_r = spd_sqrt(r, numerics.psd_tol)
    b = (configs @ r)[:, None, :] + (points @ sqrt_r)[None, :, :]
    b = b.reshape(-1, K)
    w = np.repeat(np.full(len(configs), 1.0 / len(configs)), len(points)) * np.tile(weights, len(configs))
    A = np.broadcast_to(r, (b.shape[0], K, K))
    return A, b, w


def psi_p0(r, prior: PriorModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """
    Free entropy E log Z_P0 of the scalar Gaussian-channel problem at gain r.

    Closed form for the Gaussian prior; Gauss-Hermite over the noise and
    enumeration over the signal for the Rademacher prior.
    """
    r = symmetrize(np.atleast_2d(np.asarray(r, dtype=float)))
    if np.linalg.eigvalsh(r).min() < -numerics.psd_tol:
        raise DomainError("r must be positive semidefinite")
    if prior.kind is PriorKind.GAUSSIAN:
        rr = prior.rho @ r
        _, logdet = np.linalg.slogdet(np.eye(prior.K) + rr)
        return float(-0.5 * logdet + 0.5 * np.trace(rr))
    A, b, w = _prior_quadrature(r, prior, numerics)
    return float(w @ prior_moments(A, b, prior, numerics)[2])


def prior_overlap(q_hat, prior: PriorModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """
    Overlap E[f_w f_w^T] reached by the prior denoiser at gain q_hat.

    This is 2 grad psi_P0(q_hat); infinite gain returns rho.
    """
    q_hat = np.atleast_2d(np.asarray(q_hat, dtype=float))
    if not np.all(np.isfinite(np.diag(q_hat))):
        return np.array(prior.rho, dtype=float)
    q_hat = symmetrize(q_hat)
    if prior.kind is PriorKind.GAUSSIAN:
        rho = prior.rho
        return symmetrize(np.linalg.solve(np.linalg.inv(rho) + q_hat, q_hat @ rho))
    A, b, w = _prior_quadrature(q_hat, prior, numerics)
    mean = prior_moments(A, b, prior, numerics)[0]
    return symmetrize(np.einsum("n,nk,nl->kl", w, mean, mean))


# ---------------------------------------------------------------------------
# Channel side free entropy and its companions
# ---------------------------------------------------------------------------


@dataclass
class ChannelIntegrals:
    """
    Gaussian averages over omega = q^{1/2} xi of the channel at V = rho - q.

    Attributes:
        psi: Psi_out(q; rho) = E sum_y Z log Z
        gain: E sum_y Z g g^T (q_hat / alpha)
        label_power: E[Y^2]
        prediction_power: E[y_hat^2] with y_hat the posterior-mean label
        deterministic: True when V vanished and the channel is noiseless
    """
    psi: float
    gain: np.ndarray
    label_power: float
    prediction_power: float
    deterministic: bool = False

    @property
    def gen_error(self) -> float:
        return max(0.0, 0.5 * (self.label_power - self.prediction_power))


def overlap_rule(sqrt_q: np.ndarray, numerics: NumericsConfig = DEFAULT_NUMERICS) -> tuple[np.ndarray, np.ndarray]:
    """
    Quadrature points xi (N, K) and weights for averages over xi ~ N(0, I_K).

    K = 1 and K = 2 rules are split along the sign boundaries {(q^{1/2} xi)_l = 0}.
    """
    K = sqrt_q.shape[0]
    if K == 1:
        return half_line_rule(numerics)
    if K == 2:
        return polar_rule(sqrt_q, numerics)
    nodes = min(numerics.gh_nodes, 5)
    logger.warning(f"K={K} overlap integrals use a {nodes}^{K} tensor rule with Monte Carlo channel moments")
    return gauss_hermite(nodes).tensor(K)


def channel_integrals(q, rho, ch: ChannelModel, numerics: NumericsConfig = DEFAULT_NUMERICS, rng: Optional[Rng] = None) -> ChannelIntegrals:
    """
    Evaluate every channel-side average of the state evolution at once.

    Raises:
        DomainError: If q or rho - q is not PSD
    """
    q = symmetrize(np.atleast_2d(np.asarray(q, dtype=float)))
    rho = np.atleast_2d(np.asarray(rho, dtype=float))
    K = ch.K
    V = symmetrize(rho - q)
    if np.linalg.eigvalsh(V).min() < -numerics.psd_tol:
        raise DomainError("rho - q must be positive semidefinite")
    if np.linalg.eigvalsh(q).min() < -numerics.psd_tol:
        raise DomainError("q must be positive semidefinite")
    ones = np.ones(K)

    if ch.kind is ChannelKind.LINEAR:
        var = ones @ V @ ones / K + ch.noise
        return ChannelIntegrals(
            psi=float(-0.5 * np.log(2.0 * np.pi * np.e * var)),
            gain=np.outer(ones, ones) / (K * var),
            label_power=float(ones @ rho @ ones / K + ch.noise),
            prediction_power=float(ones @ q @ ones / K),
        )

    labels = np.asarray(ch.labels, dtype=float)
    if np.linalg.eigvalsh(V).max() <= numerics.eig_floor:
        # q = rho: labels are a deterministic function of omega
        sqrt_rho = spd_sqrt(rho, numerics.psd_tol)
        points, weights = overlap_rule(sqrt_rho, numerics)
        out = phi_out(ch, points @ sqrt_rho)
        power = float(weights @ out**2)
        gain = np.where(np.eye(K, dtype=bool), np.inf, 0.0)
        return ChannelIntegrals(psi=0.0, gain=gain, label_power=power, prediction_power=power, deterministic=True)

    sqrt_q = spd_sqrt(q, numerics.psd_tol)
    points, weights = overlap_rule(sqrt_q, numerics)
    omega = points @ sqrt_q
    Vinv = np.linalg.inv(V)
    N = omega.shape[0]

    if K <= 2:
        masses, firsts, _ = _orthant_table(ch, omega, V)
        member = (_orthant_labels(ch)[:, None] == labels[None, :]).astype(float)
        Z_all = masses @ member
        M1_all = np.einsum("nok,ol->nlk", firsts, member)
    else:
        tables = [label_moments(ch, np.full(N, y), omega, V, numerics, rng) for y in labels]
        Z_all = np.stack([t[0] for t in tables], axis=1)
        M1_all = np.stack([t[1] for t in tables], axis=1)

    psi = 0.0
    gain = np.zeros((K, K))
    label_power = 0.0
    y_hat = np.zeros(N)
    for j, y in enumerate(labels):
        Z, M1 = Z_all[:, j], M1_all[:, j, :]
        keep = Z > numerics.z_floor
        wk = weights[keep]
        psi += float(wk @ xlogy(Z[keep], Z[keep]))
        u = M1[keep] @ Vinv
        gain += np.einsum("n,nk,nl->kl", wk / Z[keep], u, u)
        label_power += float(y * y * (weights @ Z))
        y_hat += y * Z
    return ChannelIntegrals(
        psi=psi,
        gain=symmetrize(gain),
        label_power=label_power,
        prediction_power=float(weights @ y_hat**2),
    )


def psi_pout(q, rho, ch: ChannelModel, numerics: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """
    Free entropy Psi_out(q; rho) = E log Z_out of the channel-side scalar problem.

    Raises:
        DomainError: If rho - q has an eigenvalue below -psd_tol
    """
    return channel_integrals(q, rho, ch, numerics).psi
