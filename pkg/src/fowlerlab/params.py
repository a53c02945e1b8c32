"""Exponent, eigenvalue and regime algebra for one autonomous side.

All functions are pure; the only state is in the frozen dataclasses below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import DomainError

#: relative tolerance for deciding l == 2_*(eta), 2^*, I(eta)
EQUALITY_RTOL = 1e-9
#: relative distance under which the CLI warns that a portrait may be unreliable
PROXIMITY_RTOL = 1e-6


class Unbounded:
    """Explicit ``+inf`` marker for I(eta) when eta <= 0.

    Compares greater than every real number, so regime tests stay total.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"

    def __str__(self) -> str:
        return "unbounded"

    def __gt__(self, other) -> bool:
        return not isinstance(other, Unbounded)

    def __ge__(self, other) -> bool:
        return True

    def __lt__(self, other) -> bool:
        return False

    def __le__(self, other) -> bool:
        return isinstance(other, Unbounded)

    def __eq__(self, other) -> bool:
        return isinstance(other, Unbounded)

    def __hash__(self) -> int:
        return hash("fowlerlab.Unbounded")

    def __reduce__(self):
        return (Unbounded, ())


UNBOUNDED = Unbounded()


class Regime(str, Enum):
    NODE_UNSTABLE = "node-unstable"
    CENTER_UNSTABLE = "center-unstable"
    SADDLE = "saddle"
    CENTER_STABLE = "center-stable"
    NODE_STABLE = "node-stable"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ProblemConfig:
    """Physical parameters of the two-sided radial problem.

    The reaction is ``K1 r^delta1 u|u|^(q1-2)`` for ``r <= rho`` and
    ``K2 r^delta2 u|u|^(q2-2)`` for ``r > rho``.
    """

    n: int
    eta: float
    K1: float
    K2: float
    q1: float
    q2: float
    delta1: float = 0.0
    delta2: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        validate_dimension(self.n, self.eta)
        if not self.K1 * self.K2 < 0:
            raise DomainError(f"reaction must change sign: K1*K2 = {self.K1 * self.K2!r} is not < 0")
        for i, (q, d) in enumerate(((self.q1, self.delta1), (self.q2, self.delta2)), start=1):
            if not q > 2:
                raise DomainError(f"q{i} = {q!r} must exceed 2")
            if not d > -2:
                raise DomainError(f"delta{i} = {d!r} must exceed -2")
        if not self.rho > 0:
            raise DomainError(f"switch radius rho = {self.rho!r} must be positive")

    def side(self, i: int) -> ExponentSet:
        if i == 1:
            return derive_exponent_set(self.n, self.eta, self.q1, self.delta1)
        if i == 2:
            return derive_exponent_set(self.n, self.eta, self.q2, self.delta2)
        raise ValueError(f"side must be 1 or 2, got {i!r}")


@dataclass(frozen=True)
class CriticalExponents:
    kappa: float
    serrin: float
    sobolev: float
    I_eta: float | Unbounded


@dataclass(frozen=True)
class ExponentSet:
    n: int
    eta: float
    q: float
    delta: float
    l: float
    alpha: float
    gamma: float
    kappa: float
    lam: float
    Lam: float
    serrin: float
    sobolev: float
    I_eta: float | Unbounded
    regime: Regime
    hamiltonian: bool

    @property
    def trace(self) -> float:
        return self.alpha + self.gamma

    @property
    def det(self) -> float:
        """Determinant alpha*gamma + eta of the linear part; negative iff saddle."""
        return self.alpha * self.gamma + self.eta

    @property
    def decay(self) -> float:
        """Fast-decay exponent n - 2 - kappa."""
        return self.n - 2 - self.kappa

    def critical_proximity(self, rtol: float = PROXIMITY_RTOL) -> list[str]:
        """Names of critical values that ``l`` is within ``rtol`` of."""
        out = []
        for name, value in (("serrin", self.serrin), ("sobolev", self.sobolev), ("I_eta", self.I_eta)):
            if isinstance(value, Unbounded):
                continue
            if abs(self.l - value) <= rtol * abs(value):
                out.append(name)
        return out


def validate_dimension(n, eta: float) -> None:
    if isinstance(n, bool) or int(n) != n or n < 3:
        raise DomainError(f"dimension n must be an integer >= 3, got {n!r}")
    bound = (n - 2) ** 2 / 4
    if not eta < bound:
        raise DomainError(
            f"Hardy coefficient eta = {eta!r} violates eta < (n-2)^2/4 = {bound!r}"
        )


def critical_exponents(n: int, eta: float) -> CriticalExponents:
    """kappa(eta), Serrin 2_*(eta), Sobolev 2^* and I(eta) for dimension n."""
    validate_dimension(n, eta)
    root = math.sqrt((n - 2) ** 2 - 4 * eta)
    # cancellation-free forms: (n-2) - root = 2 kappa
    kappa = 2 * eta / ((n - 2) + root)
    serrin = 2 * (n - 1 - kappa) / (n - 2 - kappa)
    sobolev = 2 * n / (n - 2)
    if eta <= 0 or kappa == 0:
        I_eta: float | Unbounded = UNBOUNDED
    else:
        I_eta = 2 + 2 / kappa
    return CriticalExponents(kappa, serrin, sobolev, I_eta)


def reduced_exponent(q: float, delta: float) -> float:
    return 2 * (q + delta) / (2 + delta)


def _close(a: float, b: float | Unbounded, rtol: float = EQUALITY_RTOL) -> bool:
    if isinstance(b, Unbounded):
        return False
    return abs(a - b) <= rtol * abs(b)


def classify_regime(l: float, serrin: float, I_eta: float | Unbounded) -> Regime:
    if _close(l, serrin):
        return Regime.CENTER_UNSTABLE
    if _close(l, I_eta):
        return Regime.CENTER_STABLE
    if l < serrin:
        return Regime.NODE_UNSTABLE
    if l < I_eta:
        return Regime.SADDLE
    return Regime.NODE_STABLE


def derive_exponent_set(n: int, eta: float, q: float, delta: float = 0.0) -> ExponentSet:
    if not q > 2:
        raise DomainError(f"q = {q!r} must exceed 2")
    if not delta > -2:
        raise DomainError(f"delta = {delta!r} must exceed -2")
    crit = critical_exponents(n, eta)
    l = reduced_exponent(q, delta)
    if not l > 2:
        raise DomainError(f"reduced exponent l = {l!r} must exceed 2")
    alpha = 2 / (l - 2)
    gamma = alpha + 2 - n
    return ExponentSet(
        n=n,
        eta=eta,
        q=q,
        delta=delta,
        l=l,
        alpha=alpha,
        gamma=gamma,
        kappa=crit.kappa,
        lam=gamma + crit.kappa,
        Lam=alpha - crit.kappa,
        serrin=crit.serrin,
        sobolev=crit.sobolev,
        I_eta=crit.I_eta,
        regime=classify_regime(l, crit.serrin, crit.I_eta),
        hamiltonian=_close(l, crit.sobolev),
    )


def exponent_for_l(l: float, delta: float = 0.0) -> float:
    """Nonlinearity exponent q that produces reduced exponent ``l`` at weight ``delta``."""
    return l * (2 + delta) / 2 - delta
