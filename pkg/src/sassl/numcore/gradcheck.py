import numpy as np

from .tensor import NonFiniteError, Tensor, backward, precision


def numerical_grad(f, point: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` (called on a float64 Tensor)."""
    x = np.array(point, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = _scalar(f(Tensor(x.copy())))
        flat[i] = orig - eps
        fm = _scalar(f(Tensor(x.copy())))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def analytic_grad(f, point: np.ndarray) -> np.ndarray:
    x = Tensor(np.array(point, dtype=np.float64), requires_grad=True)
    out = f(x)
    _scalar(out)
    if not out.requires_grad:
        return np.zeros_like(x.data)
    backward(out)
    return np.zeros_like(x.data) if x.grad is None else x.grad


def _scalar(out) -> float:
    val = float(np.asarray(out.data if isinstance(out, Tensor) else out).reshape(()))
    if not np.isfinite(val):
        raise NonFiniteError("grad_check: function value is not finite")
    return val


def grad_check(f, point, eps: float = 1e-5) -> float:
    """Max relative error between the backward-pass gradient and central differences.

    ``f`` maps a Tensor to a scalar Tensor. Everything runs in 64-bit.
    """
    with precision(np.float64):
        point = np.asarray(point, dtype=np.float64)
        ana = analytic_grad(f, point)
        num = numerical_grad(f, point, eps)
    denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-12)
    return float(np.max(np.abs(ana - num) / denom)) if ana.size else 0.0
