"""Multinomial logistic (linear-softmax) classifier with analytic derivatives.

Parameters are an (m, d) weight matrix and a length-m bias. The flat
parameter vector is row-major weights followed by bias, P = m*d + m entries.
Probabilities use the max-subtracted softmax; logs floor their argument at
1e-300 so a fully confident wrong prediction yields a large finite loss.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "PROB_FLOOR",
    "FD_STEP",
    "LinearSoftmaxModel",
    "predict_proba",
    "ce_loss_and_grad",
    "jacobian",
    "finite_diff_check",
    "to_param_vector",
    "from_param_vector",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

PROB_FLOOR = 1e-300
FD_STEP = 1e-5


@dataclass
class LinearSoftmaxModel:
    weights: np.ndarray  # (m, d)
    bias: np.ndarray  # (m,)

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, order="C")
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValidationError(
                f"weights must be (m, d), got shape {self.weights.shape}"
            )
        m = self.weights.shape[0]
        if m < 2:
            raise ValidationError(f"need at least 2 output classes, got m={m}")
        if self.bias.shape != (m,):
            raise ValidationError(
                f"bias must have shape ({m},), got {self.bias.shape}"
            )

    @property
    def m(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.weights.shape[1]

    @property
    def n_params(self):
        return self.m * self.d + self.m

    @classmethod
    def zeros(cls, m, d):
        return cls(np.zeros((m, d)), np.zeros(m))

    def copy(self):
        return LinearSoftmaxModel(self.weights.copy(), self.bias.copy())


def predict_proba(model, features):
    """Softmax probabilities; accepts one sample (d,) or a batch (N, d).

    Rows sum to 1 within 1e-12 by construction (max-subtracted softmax).
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.d:
        raise ValidationError(
            f"features have {x.shape[1]} columns, model expects d={model.d}"
        )
    z = x @ model.weights.T + model.bias
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z[0] if single else z


def to_param_vector(model):
    return np.concatenate([model.weights.ravel(), model.bias])


def from_param_vector(vec, m, d):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (m * d + m,):
        raise ValidationError(
            f"parameter vector has shape {vec.shape}, expected ({m * d + m},)"
        )
    return LinearSoftmaxModel(vec[: m * d].reshape(m, d), vec[m * d :])


def ce_loss_and_grad(model, features, label):
    """Cross-entropy loss -ln p(label) for one sample and its gradient with
    respect to the flat parameter vector."""
    x = np.asarray(features, dtype=np.float64)
    y = int(label)
    if not 0 <= y < model.m:
        raise ValidationError(f"label {y} out of range for m={model.m}")
    probs = predict_proba(model, x)
    loss = -np.log(max(probs[y], PROB_FLOOR))
    dz = probs.copy()
    dz[y] -= 1.0
    return float(loss), np.concatenate([np.outer(dz, x).ravel(), dz])


def jacobian(model, features):
    """The (m, P) Jacobian of the softmax output under the parameter vector.

    Row j is the gradient of probability j; columns sum to zero (within
    1e-12) because the probabilities sum to one.
    """
    x = np.asarray(features, dtype=np.float64)
    probs = predict_proba(model, x)
    s = np.diag(probs) - np.outer(probs, probs)  # dprobs/dlogits
    dw = (s[:, :, None] * x[None, None, :]).reshape(model.m, model.m * model.d)
    return np.hstack([dw, s])


def _central_diff_jacobian(model, x, step):
    theta = to_param_vector(model)
    num = np.empty((model.m, theta.size))
    for p in range(theta.size):
        bumped = theta.copy()
        bumped[p] = theta[p] + step
        f_plus = predict_proba(from_param_vector(bumped, model.m, model.d), x)
        bumped[p] = theta[p] - step
        f_minus = predict_proba(from_param_vector(bumped, model.m, model.d), x)
        num[:, p] = (f_plus - f_minus) / (2 * step)
    return num


def _central_diff_ce(model, x, y, step):
    theta = to_param_vector(model)
    num = np.empty(theta.size)
    for p in range(theta.size):
        bumped = theta.copy()
        bumped[p] = theta[p] + step
        l_plus, _ = ce_loss_and_grad(from_param_vector(bumped, model.m, model.d), x, y)
        bumped[p] = theta[p] - step
        l_minus, _ = ce_loss_and_grad(from_param_vector(bumped, model.m, model.d), x, y)
        num[p] = (l_plus - l_minus) / (2 * step)
    return num


def finite_diff_check(model, features, tolerance, step=FD_STEP):
    """Compare the analytic Jacobian, and the cross-entropy gradient for
    every label, against central differences.

    Returns the max relative error, defined per entry as
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). Raises if it
    exceeds ``tolerance``, reporting the worst coordinate.
    """
    x = np.asarray(features, dtype=np.float64)
    ana = jacobian(model, x)
    num = _central_diff_jacobian(model, x, step)
    ce_rows = []
    for y in range(model.m):
        _, g = ce_loss_and_grad(model, x, y)
        ce_rows.append((g, _central_diff_ce(model, x, y, step)))
    ana = np.vstack([ana] + [g for g, _ in ce_rows])
    num = np.vstack([num] + [n for _, n in ce_rows])
    scale = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-8)
    rel = np.abs(ana - num) / scale
    worst = float(rel.max())
    if worst > tolerance:
        j, p = np.unravel_index(np.argmax(rel), rel.shape)
        what = (
            f"jacobian output {j}" if j < model.m
            else f"cross-entropy gradient for label {j - model.m}"
        )
        raise ValidationError(
            f"gradient check failed at {what}, parameter {p}: "
            f"analytic {ana[j, p]!r} vs numeric {num[j, p]!r} "
            f"(relative error {worst:.3e} > {tolerance})"
        )
    return worst


def model_to_dict(model, k, fairness_notion, seed, lam, iterations):
    """JSON-ready dict: dimensions, notion tag, flat weights, bias, and the
    training metadata block."""
    return {
        "m": model.m,
        "d": model.d,
        "k": int(k),
        "fairness_notion": str(fairness_notion),
        "weights": [float(v) for v in model.weights.ravel()],
        "bias": [float(v) for v in model.bias],
        "metadata": {
            "seed": int(seed),
            "lambda": float(lam),
            "iterations": int(iterations),
        },
    }


def model_from_dict(payload):
    try:
        m = int(payload["m"])
        d = int(payload["d"])
        weights = np.asarray(payload["weights"], dtype=np.float64)
        bias = np.asarray(payload["bias"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model payload: {exc}") from exc
    if weights.shape != (m * d,):
        raise ValidationError(
            f"weights have {weights.size} entries, expected m*d = {m * d}"
        )
    return LinearSoftmaxModel(weights.reshape(m, d), bias), payload


def save_model(model, path, *, k, fairness_notion, seed, lam, iterations):
    payload = model_to_dict(model, k, fairness_notion, seed, lam, iterations)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(payload)
