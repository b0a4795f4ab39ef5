"""Objective functions: quadratic, ridge regression, logistic regression.

Each objective exposes its value, gradient, a curvature-model matrix used
for preconditioning, and its optimum. Curvature comes in two flavours:
the exact Hessian (which depends on the iterate for logistic loss) and an
iterate-independent smoothness bound gamma_ell * A^T A. Regularized
objectives fold lambda/2 ||x||^2 into the value and lambda * I into the
curvature.
"""

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.special import expit

from .errors import InvalidArgumentError, UnsupportedLossError
from .partition import check_symmetric_matrix

EXACT_HESSIAN = "exact_hessian"
SMOOTHNESS_BOUND = "smoothness_bound"

CURVATURE_MODELS = (EXACT_HESSIAN, SMOOTHNESS_BOUND)

SQUARED = "squared"
LOGISTIC = "logistic"

# Smoothness constants of the scalar losses (Lipschitz constants of their
# gradients): 1 for squared loss, 1/4 for logistic.
LOSS_GAMMA = {SQUARED: 1.0, LOGISTIC: 0.25}
# PL constants, where known. Logistic loss has no established value here.
LOSS_MU = {SQUARED: 1.0, LOGISTIC: None}


def _check_model(model):
    if model not in CURVATURE_MODELS:
        raise InvalidArgumentError(
            f"unknown curvature model {model!r}; expected one of {CURVATURE_MODELS}")


class Quadratic:
    """f(x) = 1/2 x^T H x - c^T x with H symmetric positive definite."""

    def __init__(self, h, c):
        self.h = check_symmetric_matrix(h)
        self.c = np.asarray(c, dtype=float)
        if self.c.shape != (self.h.shape[0],):
            raise InvalidArgumentError(
                f"c has shape {self.c.shape}, expected ({self.h.shape[0]},)")
        lam_min = np.linalg.eigvalsh(self.h)[0]
        if lam_min <= 0.0:
            raise InvalidArgumentError(
                f"H must be positive definite (lambda_min = {lam_min:.3e})")
        self._optimum = None

    @property
    def n(self) -> int:
        return self.c.size

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise InvalidArgumentError(f"x has shape {x.shape}, expected ({self.n},)")
        return x

    def value(self, x) -> float:
        x = self._check_x(x)
        return 0.5 * x @ (self.h @ x) - self.c @ x

    def gradient(self, x):
        x = self._check_x(x)
        return self.h @ x - self.c

    def curvature(self, x, model=EXACT_HESSIAN):
        self._check_x(x)
        _check_model(model)
        return self.h

    def optimum(self):
        """Minimizer and minimum value, via one dense SPD solve."""
        if self._optimum is None:
            factor = scipy.linalg.cho_factor(self.h, lower=True, check_finite=False)
            x_star = scipy.linalg.cho_solve(factor, self.c, check_finite=False)
            self._optimum = (x_star, float(self.value(x_star)))
        return self._optimum

    def suboptimality(self, x) -> float:
        """f(x) - f*, evaluated as the error quadratic form.

        1/2 (x - x*)^T H (x - x*) equals f(x) - f* exactly and avoids the
        cancellation of subtracting two nearly equal objective values.
        """
        x_star, _ = self.optimum()
        d = self._check_x(x) - x_star
        return 0.5 * float(d @ (self.h @ d))


class Glm:
    """Generalized linear model f(x) = ell(A x) + lambda/2 ||x||^2.

    ``loss`` is "squared" (ridge regression, ell(v) = 1/2 ||v - y||^2) or
    "logistic" (ell(v) = sum_i log(1 + exp(-y_i v_i)), labels in {-1, +1}).
    A may be dense or scipy.sparse; curvature products A^T D A never
    densify A itself.
    """

    def __init__(self, a, y, loss: str, lam: float = 0.0, name: str = ""):
        if loss not in (SQUARED, LOGISTIC):
            raise InvalidArgumentError(f"unknown loss {loss!r}")
        if lam < 0.0:
            raise InvalidArgumentError(f"lambda must be non-negative, got {lam}")
        self.a = a if scipy.sparse.issparse(a) else np.asarray(a, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.a.ndim != 2 or self.a.shape[0] != self.y.size:
            raise InvalidArgumentError(
                f"A has shape {self.a.shape} but y has length {self.y.size}")
        if loss == LOGISTIC and not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise InvalidArgumentError("logistic labels must lie in {-1, +1}")
        self.loss = loss
        self.lam = float(lam)
        self.name = name
        self.gamma_loss = LOSS_GAMMA[loss]
        self.mu_loss = LOSS_MU[loss]
        self._gram = None
        self._optimum = None

    @property
    def n(self) -> int:
        return self.a.shape[1]

    @property
    def m(self) -> int:
        return self.a.shape[0]

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise InvalidArgumentError(f"x has shape {x.shape}, expected ({self.n},)")
        return x

    def _margins(self, x):
        return np.asarray(self.a @ x, dtype=float).ravel()

    def gram(self):
        """Dense A^T A, computed once."""
        if self._gram is None:
            if scipy.sparse.issparse(self.a):
                self._gram = np.asarray((self.a.T @ self.a).todense(), dtype=float)
            else:
                self._gram = self.a.T @ self.a
            self._gram = 0.5 * (self._gram + self._gram.T)
        return self._gram

    def value(self, x) -> float:
        x = self._check_x(x)
        v = self._margins(x)
        reg = 0.5 * self.lam * float(x @ x)
        if self.loss == SQUARED:
            r = v - self.y
            return 0.5 * float(r @ r) + reg
        # log(1 + exp(-y v)) evaluated stably for margins of any size
        return float(np.sum(np.logaddexp(0.0, -self.y * v))) + reg

    def gradient(self, x):
        x = self._check_x(x)
        v = self._margins(x)
        if self.loss == SQUARED:
            g = np.asarray(self.a.T @ (v - self.y), dtype=float).ravel()
        else:
            g = -np.asarray(self.a.T @ (self.y * expit(-self.y * v)), dtype=float).ravel()
        return g + self.lam * x

    def _weighted_gram(self, weights):
        if scipy.sparse.issparse(self.a):
            aw = self.a.multiply(weights[:, None])
            return np.asarray((self.a.T @ aw).todense(), dtype=float)
        return self.a.T @ (weights[:, None] * self.a)

    def curvature(self, x, model=EXACT_HESSIAN):
        x = self._check_x(x)
        _check_model(model)
        reg = self.lam * np.eye(self.n)
        if self.loss == SQUARED:
            return self.gram() + reg
        if model == SMOOTHNESS_BOUND:
            return self.gamma_loss * self.gram() + reg
        sig = expit(self.y * self._margins(x))
        q = self._weighted_gram(sig * (1.0 - sig))
        return 0.5 * (q + q.T) + reg

    def optimum(self):
        """Minimizer and minimum value.

        Squared loss uses the closed-form SPD solve of the normal
        equations. Logistic loss (lambda > 0 required) runs a damped
        Newton reference solve down to gradient norm 1e-12 and caches the
        result.
        """
        if self._optimum is None:
            if self.loss == SQUARED:
                h = self.gram() + self.lam * np.eye(self.n)
                rhs = np.asarray(self.a.T @ self.y, dtype=float).ravel()
                try:
                    factor = scipy.linalg.cho_factor(h, lower=True, check_finite=False)
                except scipy.linalg.LinAlgError as exc:
                    raise InvalidArgumentError(
                        "A^T A + lambda I is singular; the ridge optimum needs "
                        "lambda > 0 or a full-column-rank A") from exc
                x_star = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
            else:
                if self.lam <= 0.0:
                    raise UnsupportedLossError(
                        "the logistic minimizer may not exist without regularization; "
                        "set lambda > 0")
                x_star = self._newton_reference()
            self._optimum = (x_star, float(self.value(x_star)))
        return self._optimum

    def _newton_reference(self, grad_tol=1e-12, max_iter=200):
        x = np.zeros(self.n)
        fx = self.value(x)
        for _ in range(max_iter):
            g = self.gradient(x)
            if np.linalg.norm(g) <= grad_tol:
                return x
            h = self.curvature(x, EXACT_HESSIAN)
            factor = scipy.linalg.cho_factor(h, lower=True, check_finite=False)
            step = scipy.linalg.cho_solve(factor, g, check_finite=False)
            t = 1.0
            for _ in range(60):
                x_new = x - t * step
                f_new = self.value(x_new)
                if f_new <= fx:
                    break
                t *= 0.5
            x, fx = x_new, f_new
        g = self.gradient(x)
        if np.linalg.norm(g) <= grad_tol:
            return x
        raise UnsupportedLossError(
            f"Newton reference solve stalled at gradient norm {np.linalg.norm(g):.3e}")

    def suboptimality(self, x) -> float:
        """f(x) - f*, via the error quadratic form for squared loss."""
        x = self._check_x(x)
        x_star, f_star = self.optimum()
        if self.loss == SQUARED:
            d = x - x_star
            r = np.asarray(self.a @ d, dtype=float).ravel()
            return 0.5 * float(r @ r) + 0.5 * self.lam * float(d @ d)
        return self.value(x) - f_star


def ridge(a, y, lam=0.0, name=""):
    """Ridge regression objective 1/2 ||Ax - y||^2 + lambda/2 ||x||^2."""
    return Glm(a, y, SQUARED, lam, name=name)


def logistic(a, y, lam=0.0, name=""):
    """L2-regularized logistic regression with labels in {-1, +1}."""
    return Glm(a, y, LOGISTIC, lam, name=name)
