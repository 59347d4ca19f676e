"""Penalized linear nuisances: closed-form ridge and Newton-fitted L2 logistic."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import SingleClass, SingularSystem

log = logging.getLogger(__name__)

PROBA_FLOOR = 1e-3


@dataclass
class LinearModel:
    """Fitted linear predictor ``intercept + x @ coef``.

    For ``kind == "logistic"`` :meth:`predict` returns probabilities floored to
    ``[PROBA_FLOOR, 1 - PROBA_FLOOR]``.
    """

    kind: str
    coef: np.ndarray
    intercept: float
    penalty: float
    n_fit: int
    n_iter: int = 0
    grad_norm: float = 0.0

    @property
    def n_features(self) -> int:
        return self.coef.size

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.coef.size:
            raise ValueError(f"expected {self.coef.size} features, got {x.shape}")
        return self.intercept + x @ self.coef

    def predict(self, x) -> np.ndarray:
        z = self.decision_function(x)
        if self.kind == "logistic":
            return np.clip(expit(z), PROBA_FLOOR, 1.0 - PROBA_FLOOR)
        return z

    def to_json(self) -> dict:
        return {"kind": self.kind, "penalty": self.penalty, "intercept": float(self.intercept),
                "coef": [float(c) for c in self.coef], "n_fit": self.n_fit}


def fit_ridge(x, y, alpha: float) -> LinearModel:
    """Minimize ``||y - b0 - x b||^2 + alpha ||b||^2`` with an unpenalized intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.size or y.size < 2:
        raise ValueError("need a 2-D x with len(y) >= 2 matching rows")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    xm = x.mean(axis=0)
    ym = y.mean()
    xc = x - xm
    gram = xc.T @ xc
    gram[np.diag_indices_from(gram)] += alpha
    try:
        if alpha == 0 and np.linalg.matrix_rank(xc) < x.shape[1]:
            raise np.linalg.LinAlgError
        coef = np.linalg.solve(gram, xc.T @ (y - ym))
    except np.linalg.LinAlgError:
        raise SingularSystem("rank-deficient design with alpha=0") from None
    return LinearModel("ridge", coef, float(ym - xm @ coef), float(alpha), y.size)


def _penalized_nll(z, y, coef, c):
    # log(1 + e^z) - y z, summed
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * (coef @ coef) / c)


def fit_logistic(x, y, c: float, tol: float = 1e-8, max_iter: int = 100) -> LinearModel:
    """L2-penalized logistic regression by damped Newton iterations.

    Minimizes ``sum(log(1 + exp(z)) - y z) + ||b||^2 / (2 c)`` with
    ``z = b0 + x b``; the intercept is not penalized. Steps are halved until
    the objective does not increase. Stops when the gradient norm is at most
    ``tol`` or after ``max_iter`` Newton steps.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError("x rows must match len(y)")
    if c <= 0:
        raise ValueError("c must be > 0")
    if np.all(y == y[0]):
        raise SingleClass("outcome has a single class")
    n, d = x.shape
    xa = np.hstack([np.ones((n, 1)), x])
    pen = np.full(d + 1, 1.0 / c)
    pen[0] = 0.0
    w = np.zeros(d + 1)
    p0 = y.mean()
    w[0] = np.log(p0 / (1 - p0))
    z = xa @ w
    obj = _penalized_nll(z, y, w[1:], c)
    it = 0
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        p = expit(z)
        grad = xa.T @ (p - y) + pen * w
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            it -= 1
            break
        hess = (xa * (p * (1 - p))[:, None]).T @ xa
        hess[np.diag_indices_from(hess)] += pen
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            w_new = w - t * step
            z_new = xa @ w_new
            obj_new = _penalized_nll(z_new, y, w_new[1:], c)
            if obj_new <= obj or t < 1e-10:
                break
            t *= 0.5
        if obj_new > obj:
            break
        w, z, obj = w_new, z_new, obj_new
    else:
        p = expit(z)
        gnorm = float(np.linalg.norm(xa.T @ (p - y) + pen * w))
        if gnorm > tol:
            log.debug("logistic fit stopped at max_iter with gradient norm %.3g", gnorm)
    return LinearModel("logistic", w[1:].copy(), float(w[0]), float(c), n, it, gnorm)


def logistic_gradient(model: LinearModel, x, y) -> np.ndarray:
    """Gradient of the penalized objective at ``model`` (intercept first)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = expit(model.decision_function(x))
    g0 = np.sum(p - y)
    g = x.T @ (p - y) + model.coef / model.penalty
    return np.concatenate([[g0], g])
