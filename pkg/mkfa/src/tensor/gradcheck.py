"""Central-difference verification of reverse-mode gradients"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence

import numpy as np

from ..utils.errors import TapeError
from .core import Tape, Tensor, float64_mode, no_tape

log = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_coords: int
    per_tensor: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def grad_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    step: float = 1e-5,
    tolerance: float = 1e-5,
    wrt: Sequence[Tensor] = (),
) -> GradCheckReport:
    """
    Compare tape gradients of a scalar function against central differences

    Args:
        fn: maps the input tensor to a scalar tensor
        point: where to evaluate; copied to a 64-bit leaf
        step: finite-difference step
        tolerance: pass threshold on the maximum relative error
        wrt: extra 64-bit leaves (usually Parameters closed over by fn) to check too

    Returns:
        Report with the overall and per-tensor maximum relative error
    """
    for tensor in wrt:
        if tensor.dtype != np.float64:
            raise TapeError(f"grad_check needs 64-bit tensors, got {tensor!r}; build them under float64_mode()")

    with float64_mode():
        x = Tensor(point.data, requires_grad=True)
        targets = [('input', x)] + [(getattr(t, 'name', f'wrt{i}'), t) for i, t in enumerate(wrt)]

        saved = [t.grad for t in wrt]
        for tensor in wrt:
            tensor.grad = np.zeros_like(tensor.data)

        with Tape() as tape:
            out = fn(x)
        tape.backward(out)
        analytic = {name: np.zeros_like(t.data) if t.grad is None else t.grad.copy() for name, t in targets}

        for tensor, grad in zip(wrt, saved):
            tensor.grad = grad

        def evaluate() -> float:
            with no_tape():
                return float(fn(x).data)

        per_tensor: Dict[str, float] = {}
        n_coords = 0
        for name, tensor in targets:
            flat = tensor.data.reshape(-1)
            grad = analytic[name].reshape(-1)
            worst = 0.0
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + step
                f_plus = evaluate()
                flat[i] = original - step
                f_minus = evaluate()
                flat[i] = original
                numeric = (f_plus - f_minus) / (2 * step)
                worst = max(worst, relative_error(float(grad[i]), numeric))
            per_tensor[name] = worst
            n_coords += flat.size

    report = GradCheckReport(
        max_rel_error=max(per_tensor.values()),
        tolerance=tolerance,
        n_coords=n_coords,
        per_tensor=per_tensor,
    )
    log.debug(f"grad_check: max rel err {report.max_rel_error:.3e} over {n_coords} coords")
    return report
