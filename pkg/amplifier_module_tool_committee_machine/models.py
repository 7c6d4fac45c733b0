"""
Core models for the committee machine analysis.

Priors and channels are immutable value objects that drive every denoiser.
Fixed points, branches and run reports are result records; each knows how to
turn itself into a plain dict for the result writers.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np

from .errors import ConfigError


class PriorKind(Enum):
    """Weight prior P0."""
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"


class ChannelKind(Enum):
    """Output channel of the two-layer network."""
    COMMITTEE = "committee"
    PARITY = "parity"
    LINEAR = "linear"


class Branch(Enum):
    """Label of a fixed point."""
    NON_SPECIALIZED = "non-specialized"
    SPECIALIZED = "specialized"
    PERFECT = "perfect"
    DEGENERATE = "degenerate"


class InitKind(Enum):
    """State evolution initialization."""
    UNINFORMED = "uninformed"
    INFORMED = "informed"
    SYMMETRIC = "symmetric"


class AmpInit(Enum):
    """AMP initialization."""
    RANDOM = "random"
    INFORMED = "informed"


class TransitionKind(Enum):
    """Phase transitions that can be located by bisection."""
    SPEC = "spec"
    SPINODAL = "spinodal"
    IT = "it"
    PERF = "perf"


class Mode(Enum):
    """Batch driver modes."""
    SE = "se"
    AMP = "amp"
    LARGEK = "largek"
    TRANSITION = "transition"
    GENERROR = "generror"


def _as_enum(enum_cls, value):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value).lower())
    except ValueError:
        choices = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"unknown {enum_cls.__name__} '{value}' (expected one of: {choices})") from None


# ---------------------------------------------------------------------------
# Prior and channel descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PriorModel:
    """
    Weight prior P0 over the K hidden units of one input coordinate.

    Attributes:
        kind: Gaussian or Rademacher
        K: Number of hidden units
        rho: Second moment matrix E[W W^T] (identity for Rademacher)
    """
    kind: PriorKind
    K: int
    rho: Optional[np.ndarray] = None

    def __post_init__(self):
        kind = _as_enum(PriorKind, self.kind)
        object.__setattr__(self, "kind", kind)
        if int(self.K) < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}", field="K")
        object.__setattr__(self, "K", int(self.K))

        if self.rho is None:
            rho = np.eye(self.K)
        else:
            rho = np.array(self.rho, dtype=float)
            if rho.shape != (self.K, self.K):
                raise ConfigError(f"rho must be {self.K}x{self.K}, got {rho.shape}", field="rho")
            if not np.allclose(rho, rho.T, rtol=1e-12, atol=1e-12):
                raise ConfigError("rho must be symmetric", field="rho")
            if np.linalg.eigvalsh(rho).min() <= 0:
                raise ConfigError("rho must be positive definite", field="rho")
            if kind is PriorKind.RADEMACHER and not np.allclose(rho, np.eye(self.K)):
                raise ConfigError("Rademacher prior has identity second moment", field="rho")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def gaussian(cls, K: int, rho: Optional[np.ndarray] = None) -> "PriorModel":
        return cls(PriorKind.GAUSSIAN, K, rho)

    @classmethod
    def rademacher(cls, K: int) -> "PriorModel":
        return cls(PriorKind.RADEMACHER, K)

    @property
    def is_discrete(self) -> bool:
        return self.kind is PriorKind.RADEMACHER

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {"kind": self.kind.value, "K": self.K, "rho": self.rho.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PriorModel":
        """Create from dictionary."""
        return cls(PriorKind(data["kind"]), data["K"], data.get("rho"))


@dataclass(frozen=True)
class ChannelModel:
    """
    Output channel y = phi_out(z) of the committee machine family.

    Attributes:
        kind: Committee (sign of summed signs), parity (product of signs) or linear
        K: Number of hidden units
        noise: Gaussian output noise variance; only the linear channel uses it
    """
    kind: ChannelKind
    K: int
    noise: float = 0.0

    def __post_init__(self):
        kind = _as_enum(ChannelKind, self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "noise", float(self.noise))
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}", field="K")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative", field="noise")
        if kind is ChannelKind.PARITY and self.K != 2:
            raise ConfigError("parity requires K=2", field="K")
        if kind is ChannelKind.LINEAR and self.noise <= 0:
            raise ConfigError("linear channel requires noise > 0", field="noise")
        if kind is not ChannelKind.LINEAR and self.noise != 0:
            raise ConfigError("noise is only supported for the linear channel", field="noise")

    @classmethod
    def committee(cls, K: int) -> "ChannelModel":
        return cls(ChannelKind.COMMITTEE, K)

    @classmethod
    def parity(cls) -> "ChannelModel":
        return cls(ChannelKind.PARITY, 2)

    @classmethod
    def linear(cls, K: int, noise: float) -> "ChannelModel":
        return cls(ChannelKind.LINEAR, K, noise)

    @property
    def is_discrete(self) -> bool:
        return self.kind is not ChannelKind.LINEAR

    @property
    def labels(self) -> tuple[int, ...]:
        """Finite label support; empty for the continuous linear channel."""
        if self.kind is ChannelKind.LINEAR:
            return ()
        if self.kind is ChannelKind.PARITY or self.K % 2 == 1:
            return (-1, 1)
        # sign(0) = 0 makes ties a label of their own
        return (-1, 0, 1)

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {"kind": self.kind.value, "K": self.K, "noise": self.noise}

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelModel":
        """Create from dictionary."""
        return cls(ChannelKind(data["kind"]), data["K"], data.get("noise", 0.0))


# ---------------------------------------------------------------------------
# Order parameters
# ---------------------------------------------------------------------------


@dataclass
class CommitteeOverlap:
    """
    Committee-symmetric overlap q = q_d I + (q_a / K) 1 1^T.

    Attributes:
        q_d: Specialization (diagonal minus off-diagonal)
        q_a: Aggregate part, K times the off-diagonal entry
    """
    q_d: float
    q_a: float

    def to_matrix(self, K: int) -> np.ndarray:
        return self.q_d * np.eye(K) + (self.q_a / K) * np.ones((K, K))

    @classmethod
    def from_matrix(cls, q: np.ndarray) -> "CommitteeOverlap":
        q = np.asarray(q, dtype=float)
        K = q.shape[0]
        q00 = float(np.mean(np.diag(q)))
        q01 = float((q.sum() - np.trace(q)) / (K * (K - 1))) if K > 1 else 0.0
        return cls(q_d=q00 - q01, q_a=K * q01)

    def is_valid(self, tol: float = 1e-12) -> bool:
        return -tol <= self.q_d <= 1 + tol and -tol <= self.q_a + self.q_d <= 1 + tol


@dataclass
class OverlapPair:
    """
    Overlap q and its conjugate q_hat.

    Attributes:
        q: K x K overlap with the teacher weights
        q_hat: K x K channel gain
    """
    q: np.ndarray
    q_hat: np.ndarray


def diagonal_offdiagonal(q: np.ndarray) -> tuple[float, float]:
    """Mean diagonal and mean off-diagonal entries of a square matrix."""
    q = np.asarray(q, dtype=float)
    K = q.shape[0]
    q00 = float(np.mean(np.diag(q)))
    q01 = float((q.sum() - np.trace(q)) / (K * (K - 1))) if K > 1 else 0.0
    return q00, q01


@dataclass
class SeFixedPoint:
    """
    Result of a state evolution run.

    Attributes:
        alpha: Sample ratio m / n
        q: Final overlap matrix
        q_hat: Final conjugate matrix (infinite diagonal at the perfect point)
        f_rs: Replica symmetric free entropy at (q, q_hat)
        gen_error: Bayes-optimal generalization error at q
        branch: Fixed point classification
        init: Initialization the run started from
        iterations: Number of SE steps taken
        converged: Whether the residual fell below tolerance
        residual: Last Frobenius step size
        dominant: Set by se_sweep on the globally dominant fixed point
    """
    alpha: float
    q: np.ndarray
    q_hat: np.ndarray
    f_rs: float
    gen_error: float
    branch: Branch
    init: InitKind
    iterations: int
    converged: bool
    residual: float
    dominant: bool = False

    @property
    def q00(self) -> float:
        return diagonal_offdiagonal(self.q)[0]

    @property
    def q01(self) -> float:
        return diagonal_offdiagonal(self.q)[1]

    @property
    def overlap(self) -> OverlapPair:
        return OverlapPair(q=self.q, q_hat=self.q_hat)

    @property
    def committee(self) -> CommitteeOverlap:
        return CommitteeOverlap.from_matrix(self.q)

    def to_row(self, mode: str = "se") -> "ResultRow":
        overlap = self.committee
        return ResultRow(
            mode=mode,
            alpha=self.alpha,
            branch=self.branch.value,
            init=self.init.value,
            q00=self.q00,
            q01=self.q01,
            q_d=overlap.q_d,
            q_a=overlap.q_a,
            f_rs=self.f_rs,
            gen_error=self.gen_error,
            iterations=self.iterations,
            converged=self.converged,
        )


@dataclass
class LargeKPoint:
    """
    Committee-symmetric overlap in the K -> infinity limit.

    Attributes:
        q_d: Specialization in [0, 1]
        q_a: Aggregate overlap, q_a + q_d in [0, 1]
        chi: Scaled-regime deficit, q_a + q_d = 1 - chi / K (None in the unscaled regime)
    """
    q_d: float
    q_a: float
    chi: Optional[float] = None

    @property
    def gamma(self) -> float:
        return float(2.0 / np.pi * (self.q_a + np.arcsin(self.q_d)))


@dataclass
class LargeKBranch:
    """
    One fixed point of the large-K equations.

    Attributes:
        alpha_tilde: alpha / K (or alpha itself in the unscaled regime)
        point: Order parameters
        free_entropy: Free entropy density used to compare branches
        gen_error: arccos(gamma) / pi
        label: Non-specialized or specialized
        stable: Whether the fixed point is locally attracting
        converged: False when the solver gave up
        dominant: Whether this branch has the largest free entropy at its alpha
    """
    alpha_tilde: float
    point: LargeKPoint
    free_entropy: float
    gen_error: float
    label: Branch
    stable: bool = True
    converged: bool = True
    dominant: bool = False

    def to_row(self) -> "ResultRow":
        return ResultRow(
            mode="largek",
            alpha=self.alpha_tilde,
            branch=self.label.value,
            init="",
            q_d=self.point.q_d,
            q_a=self.point.q_a,
            f_rs=self.free_entropy,
            gen_error=self.gen_error,
            converged=self.converged,
        )


# ---------------------------------------------------------------------------
# Finite-size instances and AMP
# ---------------------------------------------------------------------------


@dataclass
class InstanceSpec:
    """
    Everything needed to regenerate a teacher instance bit-exactly.

    Attributes:
        n: Input dimension
        m: Number of samples
        seed: Seed of the single stream drawing X, W* and Y
        prior: Teacher weight prior
        channel: Teacher output channel
    """
    n: int
    m: int
    seed: int
    prior: PriorModel
    channel: ChannelModel

    @property
    def K(self) -> int:
        return self.prior.K

    @property
    def alpha(self) -> float:
        return self.m / self.n

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "n": self.n,
            "m": self.m,
            "K": self.K,
            "seed": self.seed,
            "prior": self.prior.to_dict(),
            "channel": self.channel.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceSpec":
        """Create from dictionary."""
        return cls(
            n=int(data["n"]),
            m=int(data["m"]),
            seed=int(data["seed"]),
            prior=PriorModel.from_dict(data["prior"]),
            channel=ChannelModel.from_dict(data["channel"]),
        )


@dataclass
class TeacherInstance:
    """
    Training data generated by a teacher committee machine.

    Attributes:
        X: m x n standard Gaussian inputs
        W_star: n x K teacher weights
        Y: m labels
        spec: Descriptor the instance was generated from
    """
    X: np.ndarray
    W_star: np.ndarray
    Y: np.ndarray
    spec: InstanceSpec

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def K(self) -> int:
        return self.spec.K

    @property
    def seed(self) -> int:
        return self.spec.seed

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def prior(self) -> PriorModel:
        return self.spec.prior

    @property
    def channel(self) -> ChannelModel:
        return self.spec.channel


@dataclass
class AmpState:
    """
    Iterate of the AMP algorithm.

    Attributes:
        W_hat: n x K posterior means
        C_hat: n x K x K posterior covariances
        omega: m x K channel means
        V: m x K x K channel covariances
        g: m x K output scores
        dg: m x K x K score derivatives
        Sigma: n x K x K prior-side covariances
        T: n x K prior-side means
        t: Iteration counter
    """
    W_hat: np.ndarray
    C_hat: np.ndarray
    omega: np.ndarray
    V: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    Sigma: np.ndarray
    T: np.ndarray
    t: int = 0

    def copy(self) -> "AmpState":
        return AmpState(
            W_hat=self.W_hat.copy(),
            C_hat=self.C_hat.copy(),
            omega=self.omega.copy(),
            V=self.V.copy(),
            g=self.g.copy(),
            dg=self.dg.copy(),
            Sigma=self.Sigma.copy(),
            T=self.T.copy(),
            t=self.t,
        )


@dataclass
class RunReport:
    """
    Summary of an AMP run.

    Attributes:
        q_emp: Raw overlap W_hat^T W* / n
        q00: Mean diagonal overlap after aligning hidden units
        q01: Mean off-diagonal overlap after aligning hidden units
        gen_error_closed: Generalization error predicted from the overlap
        gen_error_empirical: Test-set generalization error
        iterations: Number of AMP steps
        converged: Whether the mean update fell below tolerance
        trace: Per-iteration diagnostics
        stop_reason: "tol", "noise-floor" or "max-iters"
    """
    q_emp: np.ndarray
    q00: float
    q01: float
    gen_error_closed: float
    gen_error_empirical: float
    iterations: int
    converged: bool
    trace: list[dict[str, Any]] = field(default_factory=list)
    stop_reason: str = "tol"

    def to_row(self, alpha: float, seed: int) -> "ResultRow":
        return ResultRow(
            mode="amp",
            alpha=alpha,
            branch="",
            init="",
            q00=self.q00,
            q01=self.q01,
            gen_error=self.gen_error_empirical,
            iterations=self.iterations,
            converged=self.converged,
            seed=seed,
        )


@dataclass
class LabelPosterior:
    """
    Predictive distribution of a label under z ~ N(omega, V).

    Attributes:
        labels: Label support (empty for the linear channel)
        probabilities: Probability of each label
        mean: Posterior-mean label
        variance: Posterior label variance
    """
    labels: tuple
    probabilities: np.ndarray
    mean: float
    variance: float

    def as_dict(self) -> dict:
        return {int(y): float(p) for y, p in zip(self.labels, self.probabilities)}


# ---------------------------------------------------------------------------
# Result rows
# ---------------------------------------------------------------------------

RESULT_COLUMNS = (
    "mode",
    "alpha",
    "branch",
    "init",
    "q00",
    "q01",
    "q_d",
    "q_a",
    "f_rs",
    "gen_error",
    "iterations",
    "converged",
    "seed",
    "wall_time_ms",
)


@dataclass
class ResultRow:
    """
    One line of a result file.

    Attributes:
        mode: Driver mode that produced the row
        alpha: Sample ratio (scaled alpha / K for large-K rows)
        branch: Fixed point label, "mean"/"stderr" for AMP summaries
        init: Initialization of the run
        q00, q01: Aligned diagonal / off-diagonal overlaps
        q_d, q_a: Committee-symmetric parametrization
        f_rs: Free entropy
        gen_error: Generalization error
        iterations: Iterations used
        converged: Convergence flag
        seed: Instance seed (AMP rows)
        wall_time_ms: Wall time, only recorded on request
    """
    mode: str
    alpha: float
    branch: str = ""
    init: str = ""
    q00: Optional[float] = None
    q01: Optional[float] = None
    q_d: Optional[float] = None
    q_a: Optional[float] = None
    f_rs: Optional[float] = None
    gen_error: Optional[float] = None
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    seed: Optional[int] = None
    wall_time_ms: Optional[float] = None

    def to_dict(self) -> dict:
        """Convert to dictionary in column order."""
        return {name: getattr(self, name) for name in RESULT_COLUMNS}
