"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad, precision, record_kinks


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped_kinks: int


def _patterns_equal(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-4,
                    max_coords: int | None = None, rng: np.random.Generator | None = None,
                    extended_reference: bool = False) -> GradCheckResult:
    """Compare backprop gradients of ``fn()`` with central differences.

    ``fn`` must rebuild its scalar output from ``inputs`` on every call. When
    ``max_coords`` is given, that many coordinates are drawn per input
    instead of checking all of them. Perturbations that change the branch
    taken by any relu/clamp are skipped, since the function is not
    differentiable across that window.

    With ``extended_reference`` the analytic gradients are still computed
    at the inputs' own precision, but the finite differences are evaluated
    in long double. This lowers the rounding noise of the numeric estimate
    far enough to resolve gradients near the 1e-8 floor of the relative
    error, which double-precision differences of an O(1) loss cannot.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    rng = rng or np.random.default_rng(0)
    for t in inputs:
        t.grad = None
    with record_kinks() as base_kinks:
        loss = fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    if extended_reference:
        originals = [t.data for t in inputs]
        for t in inputs:
            t.data = t.data.astype(np.longdouble)
        try:
            with precision("longdouble"):
                return _compare(fn, inputs, analytic, base_kinks, eps, max_coords, rng)
        finally:
            for t, orig in zip(inputs, originals):
                t.data = orig
    return _compare(fn, inputs, analytic, base_kinks, eps, max_coords, rng)


def _scalar(t: Tensor):
    # numpy scalar, so long double values survive the subtraction below
    return t.data.reshape(-1)[0]


def _compare(fn, inputs, analytic, base_kinks, eps, max_coords, rng) -> GradCheckResult:
    worst, checked, skipped = 0.0, 0, 0
    for t, grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        if max_coords is None or max_coords >= flat.size:
            coords = range(flat.size)
        else:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for k in coords:
            orig = flat[k]
            with no_grad():
                flat[k] = orig + eps
                with record_kinks() as plus_kinks:
                    f_plus = _scalar(fn())
                flat[k] = orig - eps
                with record_kinks() as minus_kinks:
                    f_minus = _scalar(fn())
            flat[k] = orig
            if not (_patterns_equal(base_kinks, plus_kinks) and _patterns_equal(base_kinks, minus_kinks)):
                skipped += 1
                continue
            numeric = float((f_plus - f_minus) / (2 * eps))
            a = float(grad.reshape(-1)[k])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
            checked += 1
    return GradCheckResult(worst, checked, skipped)


def grad_check(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-4, **kwargs) -> float:
    """Maximum relative error between analytic and numeric gradients."""
    return check_gradients(fn, inputs, eps, **kwargs).max_rel_error
