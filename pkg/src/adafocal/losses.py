"""Loss functions of the true-class probability and their derivatives.

Every loss accepts a scalar or a NumPy array for ``p`` (and for ``gamma``
where it applies) and returns a :class:`LossEval` with the value and
``dL/dp``. Scalars in give Python floats out.

Sign convention for AdaFocal: ``gamma >= 0`` selects the focal branch,
``gamma < 0`` the inverse-focal branch with exponent ``|gamma|``.
"""

from __future__ import annotations

from typing import NamedTuple, Union

import numpy as np

from .errors import DomainError

ArrayLike = Union[float, np.ndarray]

PROB_FLOOR = 1e-12


class LossEval(NamedTuple):
    value: ArrayLike
    dvalue_dp: ArrayLike


def _out(x):
    x = np.asarray(x, dtype=np.float64)
    return float(x) if x.ndim == 0 else x


def _check_p(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(~(p > 0.0)) or np.any(p > 1.0):
        raise DomainError("probability must lie in (0, 1]")
    return p


def _check_gamma(gamma, name="gamma") -> np.ndarray:
    g = np.asarray(gamma, dtype=np.float64)
    if np.any(~np.isfinite(g)) or np.any(g < 0.0):
        raise DomainError(f"{name} must be finite and >= 0")
    return g


def _check_lambda(lam) -> float:
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise DomainError(f"lambda must be finite and >= 0, got {lam}")
    return lam


def cross_entropy(p) -> LossEval:
    p = _check_p(p)
    return LossEval(_out(-np.log(p)), _out(-1.0 / p))


def _focal(p: np.ndarray, gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # same elementwise path whether gamma is a scalar or per-sample
    p, gamma = np.broadcast_arrays(p, gamma)
    q = 1.0 - p
    logp = np.log(p)
    w = q**gamma
    value = -w * logp
    # gamma*(1-p)^(gamma-1)*log p -> 0 as p -> 1 for every gamma >= 0
    q_safe = np.where(q > 0.0, q, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(q > 0.0, gamma * q_safe ** (gamma - 1.0) * logp, 0.0)
    return value + 0.0, term - w / p


def _inverse_focal(p: np.ndarray, gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p, gamma = np.broadcast_arrays(p, gamma)
    s = 1.0 + p
    logp = np.log(p)
    w = s**gamma
    value = -w * logp
    return value + 0.0, -gamma * s ** (gamma - 1.0) * logp - w / p


def focal_loss(p, gamma) -> LossEval:
    """``-(1-p)^gamma log p``.

    At ``p == 1`` the derivative is taken as its limit: ``-1`` for
    ``gamma == 0`` and ``0`` for ``gamma > 0``.
    """
    p = _check_p(p)
    value, grad = _focal(p, _check_gamma(gamma))
    return LossEval(_out(value), _out(grad))


def inverse_focal_loss(p, gamma) -> LossEval:
    """``-(1+p)^gamma log p``; pushes confident samples further up."""
    p = _check_p(p)
    value, grad = _inverse_focal(p, _check_gamma(gamma))
    return LossEval(_out(value), _out(grad))


def calfocal_gamma_case1(p_n, a_val_b, lam) -> ArrayLike:
    """Sample-level gamma ``exp(lam * (p_n - A_val,b))``."""
    p = _check_p(p_n)
    a = np.asarray(a_val_b, dtype=np.float64)
    if np.any(a < 0) or np.any(a > 1):
        raise DomainError("bin accuracy must lie in [0, 1]")
    return _out(np.exp(_check_lambda(lam) * (p - a)))


def calfocal_gamma_case2(c_val_b, a_val_b, lam) -> ArrayLike:
    """Bin-level gamma ``exp(lam * (C_val,b - A_val,b))``."""
    c = np.asarray(c_val_b, dtype=np.float64)
    a = np.asarray(a_val_b, dtype=np.float64)
    if np.any(c < 0) or np.any(c > 1) or np.any(a < 0) or np.any(a > 1):
        raise DomainError("bin confidence and accuracy must lie in [0, 1]")
    return _out(np.exp(_check_lambda(lam) * (c - a)))


def calfocal_case1_loss(p, a_val_b, lam) -> LossEval:
    """Focal loss whose gamma is itself a function of ``p``.

    The derivative is the total one, including ``d gamma / dp = lam * gamma``.
    """
    p = _check_p(p)
    lam = _check_lambda(lam)
    gamma = np.asarray(calfocal_gamma_case1(p, a_val_b, lam), dtype=np.float64)
    value, grad = _focal(p, gamma)
    q = 1.0 - p
    q_safe = np.where(q > 0.0, q, 1.0)
    # (1-p)^gamma * log(1-p) -> 0 as p -> 1
    extra = np.where(
        q > 0.0, -(q_safe**gamma) * lam * gamma * np.log(q_safe) * np.log(p), 0.0
    )
    return LossEval(_out(value), _out(grad + extra))


def adafocal_loss(p, gamma) -> LossEval:
    """Focal loss for ``gamma >= 0``, inverse-focal with ``|gamma|`` otherwise."""
    p = _check_p(p)
    g = np.asarray(gamma, dtype=np.float64)
    if np.any(~np.isfinite(g)):
        raise DomainError("gamma must be finite")
    fv, fd = _focal(p, np.maximum(g, 0.0))
    iv, idv = _inverse_focal(p, np.maximum(-g, 0.0))
    focal_branch = g >= 0.0
    return LossEval(
        _out(np.where(focal_branch, fv, iv)), _out(np.where(focal_branch, fd, idv))
    )


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _rows(probs, true_label):
    probs = np.asarray(probs, dtype=np.float64)
    single = probs.ndim == 1
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(np.asarray(true_label, dtype=np.intp))
    if labels.shape != (probs.shape[0],):
        raise DomainError("need one label per probability row")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise DomainError("label out of range")
    return probs, labels, single


def brier_loss(probs, true_label) -> LossEval:
    """Squared error against the one-hot target, with per-class gradient."""
    probs, labels, single = _rows(probs, true_label)
    diff = probs - _one_hot(labels, probs.shape[1])
    value = np.sum(diff**2, axis=1)
    grad = 2.0 * diff
    if single:
        return LossEval(float(value[0]), grad[0])
    return LossEval(value, grad)


def label_smoothing_ce(probs, true_label, eps: float) -> LossEval:
    """Cross entropy against ``(1-eps)*onehot + eps/K``.

    Probabilities are floored at ``PROB_FLOOR`` before the log.
    """
    if not 0.0 <= eps < 1.0:
        raise DomainError(f"eps must lie in [0, 1), got {eps}")
    probs, labels, single = _rows(probs, true_label)
    k = probs.shape[1]
    q = (1.0 - eps) * _one_hot(labels, k) + eps / k
    safe = np.maximum(probs, PROB_FLOOR)
    value = -np.sum(q * np.log(safe), axis=1)
    grad = -q / safe
    if single:
        return LossEval(float(value[0]), grad[0])
    return LossEval(value, grad)
