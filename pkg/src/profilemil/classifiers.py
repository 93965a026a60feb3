"""Single-instance classifiers: Gaussian naive Bayes, L2 logistic regression,
linear and RBF kernel SVMs.

All trainers take an ``(n, D)`` matrix and a vector of signed labels in
{-1, +1}. Decision values are oriented so that a value >= 0 means the
positive class.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Optional, Union

import numpy as np
from numba import njit
from scipy.optimize import minimize

from .core import SignMapping, from_signed, sign_of
from .errors import DimensionMismatch, MissingClass, NumericalFailure

MODEL_FORMAT = "profilemil-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    tolerance: float = 1e-3
    max_iterations: int = 100_000
    seed: int = 0
    variance_floor: float = 1e-9
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("C", "tolerance", "variance_floor", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


@dataclass(frozen=True)
class GaussianNBModel:
    """Per-class Gaussian likelihoods; row 0 is the +1 class, row 1 the -1 class."""

    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    variance_floor: float = 1e-9
    kind: str = "nb"

    @property
    def dimension(self):
        return self.means.shape[1]


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float
    kind: str = "svm"
    C: float = 1.0
    iterations: int = 0
    converged: bool = True

    @property
    def dimension(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class KernelModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float = 1.0
    iterations: int = 0
    converged: bool = True
    kind: str = "svm_rbf"

    @property
    def dimension(self):
        return self.support_vectors.shape[1]


Model = Union[GaussianNBModel, LinearModel, KernelModel]


def _check_training_data(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X shape {X.shape} does not match {y.shape[0]} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise MissingClass("both classes must be present in the training data")
    return X, y


# --------------------------------------------------------------------------
# Gaussian naive Bayes

def train_gaussian_nb(X, y, cfg: TrainConfig = TrainConfig()) -> GaussianNBModel:
    X, y = _check_training_data(X, y)
    priors, means, variances = [], [], []
    for cls in (1.0, -1.0):
        Xc = X[y == cls]
        priors.append(Xc.shape[0] / X.shape[0])
        means.append(Xc.mean(axis=0))
        variances.append(np.maximum(Xc.var(axis=0), cfg.variance_floor))
    return GaussianNBModel(np.array(priors), np.vstack(means), np.vstack(variances),
                           cfg.variance_floor)


def nb_joint_log_likelihood(model: GaussianNBModel, X) -> np.ndarray:
    """``log P(c) + log p(x | c)`` for c in (+1, -1); shape ``(n, 2)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty((X.shape[0], 2))
    for c in range(2):
        var = model.variances[c]
        ll = -0.5 * (np.log(2.0 * np.pi * var) + (X - model.means[c]) ** 2 / var).sum(axis=1)
        out[:, c] = np.log(model.priors[c]) + ll
    return out


def nb_log_posterior(model: GaussianNBModel, X) -> np.ndarray:
    jll = nb_joint_log_likelihood(model, X)
    return jll - np.logaddexp(jll[:, 0], jll[:, 1])[:, None]


# --------------------------------------------------------------------------
# logistic regression

def logistic_objective(w, b, X, y, C):
    """Mean logistic loss plus ``||w||^2 / (2C)`` and its gradient in (w, b)."""
    n = X.shape[0]
    margins = y * (X @ w + b)
    loss = np.logaddexp(0.0, -margins).mean() + 0.5 * np.dot(w, w) / C
    # d/dz log(1 + exp(-z)) = -sigmoid(-z)
    s = -y * np.exp(-np.logaddexp(0.0, margins))
    grad_w = X.T @ s / n + w / C
    grad_b = s.sum() / n
    return loss, grad_w, grad_b


def train_logreg(X, y, cfg: TrainConfig = TrainConfig()) -> LinearModel:
    X, y = _check_training_data(X, y)
    D = X.shape[1]

    def fun(theta):
        loss, gw, gb = logistic_objective(theta[:D], theta[D], X, y, cfg.C)
        return loss, np.append(gw, gb)

    res = minimize(fun, np.zeros(D + 1), jac=True, method="L-BFGS-B",
                   options={"maxiter": cfg.max_iterations, "gtol": cfg.tolerance * 1e-2,
                            "ftol": 1e-15, "maxcor": 20})
    if not np.isfinite(res.fun) or not np.all(np.isfinite(res.x)):
        raise NumericalFailure("logistic regression produced a non-finite loss")
    _, gw, gb = logistic_objective(res.x[:D], res.x[D], X, y, cfg.C)
    grad_norm = float(np.sqrt(np.dot(gw, gw) + gb * gb))
    return LinearModel(res.x[:D].copy(), float(res.x[D]), "logreg", cfg.C,
                       int(res.nit), grad_norm <= cfg.tolerance)


# --------------------------------------------------------------------------
# SVM dual solver

@dataclass
class SmoResult:
    alpha: np.ndarray
    bias: float
    iterations: int
    converged: bool
    violation: float


def _kkt_bounds(alpha, y, C):
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    return up, low


def kkt_violation(alpha, grad, y, C) -> float:
    """Maximal violating pair gap ``m(alpha) - M(alpha)``; zero at the optimum."""
    yg = -y * grad
    up, low = _kkt_bounds(alpha, y, C)
    if not up.any() or not low.any():
        return 0.0
    return float(yg[up].max() - yg[low].min())


@njit(cache=True)
def _smo_loop(Q, y, C, tol, max_iter):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    tau = 1e-12
    it = 0
    gap = 0.0
    converged = False
    while True:
        # working-set selection: i maximises -y*G over I_up, j is the
        # second-order choice over I_low
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        best = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * G[t]
                if v < gmin:
                    gmin = v
                if i >= 0 and v < gmax:
                    b = gmax - v
                    a = Q[i, i] + Q[t, t] - 2.0 * y[i] * y[t] * Q[i, t]
                    if a <= 0:
                        a = tau
                    score = -(b * b) / a
                    if score < best:
                        best = score
                        j = t
        gap = gmax - gmin
        if i < 0 or j < 0 or gap < tol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1

        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = tau
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai = ai_old + delta
            aj = aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = tau
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai = ai_old - delta
            aj = aj_old + delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        dai = ai - ai_old
        daj = aj - aj_old
        for t in range(n):
            G[t] += Q[i, t] * dai + Q[j, t] * daj
    return alpha, G, it, converged, gap


def smo(K, y, C, tol=1e-3, max_iter=100_000) -> SmoResult:
    """Solve ``min 1/2 a'Qa - e'a  s.t. 0 <= a <= C, y'a = 0`` with ``Q = yy' * K``.

    Sequential minimal optimisation with second-order working-set selection.
    The returned bias ``b`` gives the decision function ``sum a_i y_i K(x_i, x) + b``.
    """
    K = np.asarray(K, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    Q = np.ascontiguousarray(K * np.outer(y, y))
    alpha, G, it, converged, gap = _smo_loop(Q, y, float(C), float(tol), int(max_iter))
    C = float(C)

    # offset from free variables, falling back to the midpoint of the feasible interval
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        at_upper = alpha >= C
        ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
        ub = yG[ub_mask].min() if ub_mask.any() else np.inf
        lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2.0)
    if not np.all(np.isfinite(alpha)) or not np.isfinite(rho):
        raise NumericalFailure("SMO produced non-finite values")
    return SmoResult(alpha, -rho, int(it), bool(converged), float(gap) if np.isfinite(gap) else 0.0)


def svm_primal_objective(w, b, X, y, C) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return float(0.5 * np.dot(w, w) + C * hinge.sum())


def train_linear_svm(X, y, cfg: TrainConfig = TrainConfig()) -> LinearModel:
    """Soft-margin linear SVM with an unregularised bias, solved in the dual."""
    X, y = _check_training_data(X, y)
    res = smo(X @ X.T, y, cfg.C, cfg.tolerance, cfg.max_iterations)
    w = X.T @ (res.alpha * y)
    return LinearModel(w, res.bias, "svm", cfg.C, res.iterations, res.converged)


def rbf_kernel(A, B, gamma) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def train_rbf_svm(X, y, cfg: TrainConfig = TrainConfig(), return_alpha=False):
    X, y = _check_training_data(X, y)
    res = smo(rbf_kernel(X, X, cfg.gamma), y, cfg.C, cfg.tolerance, cfg.max_iterations)
    sv = res.alpha > 0
    model = KernelModel(X[sv].copy(), (res.alpha * y)[sv], res.bias, cfg.gamma, cfg.C,
                        res.iterations, res.converged)
    if return_alpha:
        return model, res
    return model


# --------------------------------------------------------------------------
# prediction

def decision_values(model: Model, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dimension:
        raise DimensionMismatch(f"expected dimension {model.dimension}, got {X.shape[1]}")
    if isinstance(model, LinearModel):
        return X @ model.weights + model.bias
    if isinstance(model, KernelModel):
        return rbf_kernel(X, model.support_vectors, model.gamma) @ model.dual_coef + model.bias
    if isinstance(model, GaussianNBModel):
        jll = nb_joint_log_likelihood(model, X)
        return jll[:, 0] - jll[:, 1]
    raise TypeError(f"unsupported model {type(model).__name__}")


def decision_value(model: Model, x) -> float:
    x = np.asarray(getattr(x, "values", x), dtype=float).ravel()
    return float(decision_values(model, x[None, :])[0])


def predict_signs(model: Model, X) -> np.ndarray:
    return np.where(decision_values(model, X) >= 0, 1, -1)


def predict_instance(model: Model, x, mapping: SignMapping) -> str:
    return from_signed(sign_of(decision_value(model, x)), mapping)


# --------------------------------------------------------------------------
# serialisation

def _arr(a):
    return [float(v) for v in np.asarray(a).ravel()]


def model_to_dict(model, hyperparameters: Optional[dict] = None) -> dict:
    from .mil import MisvmModel  # local: mil depends on this module

    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION,
           "hyperparameters": dict(hyperparameters or {})}
    if isinstance(model, GaussianNBModel):
        doc.update(kind="nb", params={
            "priors": _arr(model.priors), "means": [_arr(r) for r in model.means],
            "variances": [_arr(r) for r in model.variances],
            "variance_floor": model.variance_floor})
    elif isinstance(model, LinearModel):
        doc.update(kind=model.kind, params={
            "weights": _arr(model.weights), "bias": float(model.bias), "C": model.C,
            "iterations": model.iterations, "converged": model.converged})
    elif isinstance(model, KernelModel):
        doc.update(kind="svm_rbf", params={
            "support_vectors": [_arr(r) for r in model.support_vectors],
            "dual_coef": _arr(model.dual_coef), "bias": float(model.bias),
            "gamma": model.gamma, "C": model.C, "iterations": model.iterations,
            "converged": model.converged})
    elif isinstance(model, MisvmModel):
        inner = model_to_dict(model.linear)
        doc.update(kind="misvm", params={
            "linear": inner["params"], "iterations": model.iterations,
            "converged": model.converged,
            "witnesses": {k: int(v) for k, v in model.witnesses.items()},
            "objective_trace": [float(v) for v in model.objective_trace]})
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    return doc


def _linear_from_params(p, kind):
    return LinearModel(np.array(p["weights"], dtype=float), float(p["bias"]), kind,
                       float(p["C"]), int(p["iterations"]), bool(p["converged"]))


def model_from_dict(doc: dict):
    from .mil import MisvmModel

    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ValueError("not a profilemil model document")
    kind, p = doc["kind"], doc["params"]
    if kind == "nb":
        return GaussianNBModel(np.array(p["priors"]), np.array(p["means"]),
                               np.array(p["variances"]), float(p["variance_floor"]))
    if kind in ("svm", "logreg"):
        return _linear_from_params(p, kind)
    if kind == "svm_rbf":
        return KernelModel(np.array(p["support_vectors"], dtype=float).reshape(len(p["dual_coef"]), -1),
                           np.array(p["dual_coef"]), float(p["bias"]), float(p["gamma"]),
                           float(p["C"]), int(p["iterations"]), bool(p["converged"]))
    if kind == "misvm":
        return MisvmModel(_linear_from_params(p["linear"], "svm"), int(p["iterations"]),
                          bool(p["converged"]), dict(p["witnesses"]),
                          tuple(p["objective_trace"]))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path, hyperparameters=None, extra=None):
    doc = model_to_dict(model, hyperparameters)
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
