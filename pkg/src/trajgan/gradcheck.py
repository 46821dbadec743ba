"""Finite-difference validation of analytic gradients."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff
from .autodiff import Tensor

# Denominator floor for the relative error, so near-zero gradient pairs are
# compared absolutely instead of dividing noise by noise.
SCALE_FLOOR = 1e-2


@dataclass
class ParamCheck:
    name: str
    checked: int
    max_rel_error: float


@dataclass
class GradCheckReport:
    tol: float
    step: float
    entries: list[ParamCheck] = field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"gradcheck {status}: max relative error {self.max_rel_error:.3e} "
                f"(tol {self.tol:.1e}, {len(self.entries)} tensors, {self.elapsed_s:.1f}s)")


def rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), SCALE_FLOOR)


def finite_difference_check(f, params: dict[str, Tensor], h: float = 1e-5,
                            tol: float = 1e-3, samples_per_param: int | None = None,
                            rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare analytic gradients of ``f(params)`` against central differences.

    ``f`` must be a deterministic map from the parameter dict to a scalar
    Tensor. When ``samples_per_param`` is None every element is checked;
    otherwise that many elements per tensor are sampled with ``rng``.
    Raises FloatingPointError if any evaluation of f is non-finite.
    """
    if h <= 0:
        raise ValueError("finite_difference_check: h must be positive")
    start = time.perf_counter()

    def evaluate() -> Tensor:
        out = f(params)
        if not math.isfinite(float(out.data)):
            raise FloatingPointError("finite_difference_check: f returned a non-finite value")
        return out

    loss = evaluate()
    autodiff.backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    report = GradCheckReport(tol=tol, step=h)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if samples_per_param is None or samples_per_param >= n:
            idx = np.arange(n)
        else:
            if rng is None:
                rng = np.random.default_rng(0)
            idx = rng.choice(n, size=samples_per_param, replace=False)
        worst = 0.0
        ga = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(evaluate().data)
            flat[i] = orig - h
            f_minus = float(evaluate().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            worst = max(worst, rel_error(float(ga[i]), numeric))
        report.entries.append(ParamCheck(name=name, checked=len(idx), max_rel_error=worst))
    report.elapsed_s = time.perf_counter() - start
    return report
