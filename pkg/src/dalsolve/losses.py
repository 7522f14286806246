"""Smooth data-fit losses and their convex conjugates.

All conjugate quantities are functions of the dual vector ``alpha`` and
describe ``g(alpha) = f*(-alpha)``:

* ``conj_value(alpha)``     -> f*(-alpha)
* ``conj_grad(alpha)``      -> d/dalpha f*(-alpha) = -grad f*(-alpha)
* ``conj_hess_diag(alpha)`` -> diagonal of the Hessian of f*(-alpha)

Additive constants are chosen so that the Fenchel-Young inequality
``f(z) + f*(-alpha) >= -alpha @ z`` is tight at ``alpha = -grad f(z)``; the
duality gap is then meaningful on an absolute scale. ``gamma`` is the
strong-convexity modulus of the conjugate, i.e. ``grad f`` is
``1/gamma``-Lipschitz.
"""
import numpy as np
from scipy.special import expit, xlogy

from .errors import ContractViolation, DomainError

__all__ = ["Loss", "SquaredLoss", "LogisticLoss", "SechLoss", "make_loss"]

#: distance kept from the boundary of the conjugate domain by ``dual_start``
DOMAIN_MARGIN = 1e-6


class Loss:
    """Base class; ``y`` holds one target per sample."""

    gamma = 1.0

    def __init__(self, y):
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        self.m = self.y.size

    def _check(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.m,):
            raise ContractViolation(f"expected length {self.m}, got {v.shape}")
        return v

    def value(self, z):
        raise NotImplementedError

    def grad(self, z):
        raise NotImplementedError

    def hess_diag(self, z):
        raise NotImplementedError

    def conj_value(self, alpha):
        raise NotImplementedError

    def conj_grad(self, alpha):
        raise NotImplementedError

    def conj_hess_diag(self, alpha):
        raise NotImplementedError

    def interior(self, alpha):
        """True if ``alpha`` is strictly inside the conjugate domain."""
        return True

    def dual_start(self, z):
        """``-grad f(z)`` pushed strictly inside the conjugate domain."""
        return -self.grad(z)

    def max_step(self, alpha, d):
        """Largest ``s`` such that ``alpha + s d`` stays in the open domain."""
        return np.inf


class SquaredLoss(Loss):
    """``0.5 * sum((y - z)**2 / sigma**2)``."""

    def __init__(self, y, sigma=None):
        super().__init__(y)
        sigma = np.ones(self.m) if sigma is None else \
            np.broadcast_to(np.asarray(sigma, dtype=np.float64), (self.m,)).copy()
        if np.any(~(sigma > 0)):
            raise ContractViolation("sigma must be positive")
        self.sigma2 = sigma ** 2
        self.gamma = float(self.sigma2.min()) if self.m else 1.0

    def value(self, z):
        r = self.y - self._check(z)
        return 0.5 * float(np.sum(r * r / self.sigma2))

    def grad(self, z):
        return (self._check(z) - self.y) / self.sigma2

    def hess_diag(self, z):
        self._check(z)
        return 1.0 / self.sigma2

    def conj_value(self, alpha):
        # sup_z (-alpha @ z - f(z)); Fenchel-Young tight, so this differs from
        # the constant-free form 0.5*sum(sigma^2 (alpha-y)^2) by a constant.
        a = self._check(alpha)
        return float(np.sum(0.5 * self.sigma2 * a * a - a * self.y))

    def conj_grad(self, alpha):
        return self.sigma2 * self._check(alpha) - self.y

    def conj_hess_diag(self, alpha):
        self._check(alpha)
        return self.sigma2.copy()


class LogisticLoss(Loss):
    """``sum(log(1 + exp(-y z)))`` with labels in {-1, +1}.

    The conjugate lives on ``0 <= alpha_i y_i <= 1`` and needs no constant:
    ``sum(p log p + (1-p) log(1-p))`` with ``p = alpha * y``.
    """

    gamma = 4.0

    def __init__(self, y):
        super().__init__(y)
        if not np.all(np.abs(self.y) == 1):
            raise ContractViolation("logistic labels must be -1 or +1")

    def value(self, z):
        return float(np.sum(np.logaddexp(0.0, -self.y * self._check(z))))

    def grad(self, z):
        return -self.y * expit(-self.y * self._check(z))

    def hess_diag(self, z):
        t = self.y * self._check(z)
        return expit(t) * expit(-t)

    def conj_value(self, alpha):
        p = self._check(alpha) * self.y
        if np.any(p < 0) or np.any(p > 1):
            return np.inf
        return float(np.sum(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)))

    def _p_interior(self, alpha):
        p = self._check(alpha) * self.y
        if np.any(p <= 0) or np.any(p >= 1):
            raise DomainError("alpha*y must lie strictly inside (0, 1)")
        return p

    def conj_grad(self, alpha):
        p = self._p_interior(alpha)
        return self.y * (np.log(p) - np.log1p(-p))

    def conj_hess_diag(self, alpha):
        p = self._p_interior(alpha)
        return 1.0 / (p * (1.0 - p))

    def interior(self, alpha):
        p = np.asarray(alpha) * self.y
        return bool(np.all(p > 0) and np.all(p < 1))

    def dual_start(self, z):
        p = np.clip(expit(-self.y * self._check(z)), DOMAIN_MARGIN, 1.0 - DOMAIN_MARGIN)
        return p * self.y

    def max_step(self, alpha, d):
        p = alpha * self.y
        dp = d * self.y
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(dp < 0, -p / dp, np.where(dp > 0, (1.0 - p) / dp, np.inf))
        return float(s.min()) if s.size else np.inf


class SechLoss(Loss):
    """Hyperbolic-secant likelihood ``sum(log(exp(y-z) + exp(z-y)))``.

    The second derivative ``sech(z-y)**2`` peaks at 1, so ``gamma = 1``.
    Conjugate: ``-alpha y + 0.5((1-a)log(1-a) + (1+a)log(1+a)) - log 2`` per
    sample on ``|alpha| <= 1``.
    """

    gamma = 1.0

    def value(self, z):
        d = self._check(z) - self.y
        return float(np.sum(np.logaddexp(d, -d)))

    def grad(self, z):
        return np.tanh(self._check(z) - self.y)

    def hess_diag(self, z):
        return 1.0 / np.cosh(self._check(z) - self.y) ** 2

    def conj_value(self, alpha):
        a = self._check(alpha)
        if np.any(np.abs(a) > 1):
            return np.inf
        ent = 0.5 * (xlogy(1.0 - a, 1.0 - a) + xlogy(1.0 + a, 1.0 + a))
        return float(np.sum(ent - a * self.y) - self.m * np.log(2.0))

    def _interior(self, alpha):
        a = self._check(alpha)
        if np.any(np.abs(a) >= 1):
            raise DomainError("alpha must lie strictly inside (-1, 1)")
        return a

    def conj_grad(self, alpha):
        return np.arctanh(self._interior(alpha)) - self.y

    def conj_hess_diag(self, alpha):
        a = self._interior(alpha)
        return 1.0 / ((1.0 - a) * (1.0 + a))

    def interior(self, alpha):
        return bool(np.all(np.abs(np.asarray(alpha)) < 1))

    def dual_start(self, z):
        lim = 1.0 - DOMAIN_MARGIN
        return np.clip(-self.grad(z), -lim, lim)

    def max_step(self, alpha, d):
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(d > 0, (1.0 - alpha) / d, np.where(d < 0, (-1.0 - alpha) / d, np.inf))
        return float(s.min()) if s.size else np.inf


def make_loss(name, y, **kwargs):
    """Construct a loss by name: ``squared``, ``logistic`` or ``sech``."""
    kinds = {"squared": SquaredLoss, "logistic": LogisticLoss, "sech": SechLoss}
    try:
        return kinds[name](y, **kwargs)
    except KeyError:
        raise ValueError(f"unknown loss {name!r}") from None
