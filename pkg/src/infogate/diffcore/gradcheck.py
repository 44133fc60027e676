"""Finite-difference verification of analytic gradients."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import GradientCheckError
from . import ops
from .tensor import Tensor, backward, no_grad, precision

logger = logging.getLogger(__name__)

ParamsArg = Union[Mapping[str, Tensor], Sequence[Tensor]]


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    checked: int
    per_param: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def default_atol(analytic_dtype) -> float:
    """Absolute slack below which two estimates count as equal."""
    return 1e-8 if np.dtype(analytic_dtype) == np.float64 else 1e-5


def relative_error(analytic: float, numeric: float, atol: float = 0.0) -> float:
    """``|a - n|`` beyond ``atol``, relative to the larger magnitude.

    Small gradients stay relative: a 10% error on a 1e-6 gradient scores about 0.09.
    """
    excess = max(abs(analytic - numeric) - atol, 0.0)
    if excess == 0.0:
        return 0.0
    return excess / max(abs(analytic), abs(numeric))


def _named(params: ParamsArg) -> Dict[str, Tensor]:
    if isinstance(params, Mapping):
        return dict(params)
    return {f"p{i}": t for i, t in enumerate(params)}


def _scalar(value: Tensor) -> float:
    return float(np.asarray(value.data, dtype=np.float64).reshape(-1)[0])


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: ParamsArg,
    h: float = 1e-5,
    tol: float = 1e-6,
    analytic_dtype=np.float64,
    max_elements: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    atol: Optional[float] = None,
) -> GradCheckReport:
    """Compare backward gradients of ``fn`` with central differences.

    ``fn`` must rebuild its graph from ``params`` on every call and draw any
    noise from a fixed seed. Analytic gradients are taken in ``analytic_dtype``;
    the differences are always taken in 64-bit. Element errors below ``atol``
    (default from ``default_atol``) are rounding noise and score zero.

    Raises:
        GradientCheckError: If either estimate is NaN
    """
    if atol is None:
        atol = default_atol(analytic_dtype)
    named = _named(params)
    originals = {name: t.data for name, t in named.items()}
    report = GradCheckReport(max_rel_error=0.0, tol=tol, checked=0)
    try:
        for name, tensor in named.items():
            tensor.data = originals[name].astype(analytic_dtype)
            tensor.grad = None
        with precision(analytic_dtype):
            backward(fn(), wrt=named.values())
        analytic = {name: t.grad.astype(np.float64).reshape(-1) for name, t in named.items()}

        for name, tensor in named.items():
            if np.isnan(analytic[name]).any():
                raise GradientCheckError(f"Analytic gradient for '{name}' contains NaN")
            tensor.data = originals[name].astype(np.float64)
            tensor.grad = None

        with precision(np.float64), no_grad():
            for name, tensor in named.items():
                flat = tensor.data.reshape(-1)
                indices = np.arange(flat.size)
                if max_elements is not None and flat.size > max_elements:
                    chooser = rng if rng is not None else np.random.default_rng(0)
                    indices = np.sort(chooser.choice(flat.size, size=max_elements, replace=False))
                worst = 0.0
                for i in indices:
                    held = flat[i]
                    flat[i] = held + h
                    f_plus = _scalar(fn())
                    flat[i] = held - h
                    f_minus = _scalar(fn())
                    flat[i] = held
                    numeric = (f_plus - f_minus) / (2 * h)
                    if np.isnan(numeric):
                        raise GradientCheckError(f"Finite difference for '{name}'[{i}] is NaN")
                    worst = max(worst, relative_error(analytic[name][i], numeric, atol))
                report.per_param[name] = worst
                report.checked += len(indices)
                report.max_rel_error = max(report.max_rel_error, worst)
    finally:
        for name, tensor in named.items():
            tensor.data = originals[name]
            tensor.grad = None

    logger.debug("gradcheck | max_rel_error=%.3e | checked=%d", report.max_rel_error, report.checked)
    return report


# -- built-in suite ----------------------------------------------------------

Case = Tuple[Callable[[], Tensor], Dict[str, Tensor]]


def _param(rng, *shape, away_from_zero: bool = False) -> Tensor:
    values = rng.standard_normal(shape)
    if away_from_zero:
        values = np.sign(values) * (0.2 + np.abs(values))
    return Tensor(values, requires_grad=True)


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return ops.sum(ops.mul(out, Tensor(weights.reshape(out.shape))))


def _case(rng, build, *params: Tensor) -> Case:
    """Wrap ``build(*params)`` into a fixed random weighted sum."""
    with no_grad():
        probe = build(*params)
    weights = rng.standard_normal(probe.shape)
    return (lambda: _weighted(build(*params), weights)), {f"p{i}": p for i, p in enumerate(params)}


def primitive_cases(rng: np.random.Generator) -> Dict[str, Case]:
    index = rng.integers(0, 5, size=(3, 2))
    order = rng.permutation(4)
    stats_mean, stats_std = rng.random(2), 0.5 + rng.random(2)
    noise = rng.standard_normal((2, 3, 4, 4))
    return {
        "add": _case(rng, ops.add, _param(rng, 3, 4), _param(rng, 3, 4)),
        "sub": _case(rng, ops.sub, _param(rng, 3, 4), _param(rng, 3, 4)),
        "mul": _case(rng, ops.mul, _param(rng, 3, 4), _param(rng, 3, 4)),
        "scale": _case(rng, lambda x: ops.scale(x, -1.7, 0.3), _param(rng, 3, 4)),
        "concat": _case(rng, lambda a, b: ops.concat([a, b], axis=1), _param(rng, 2, 3), _param(rng, 2, 2)),
        "sum": _case(rng, lambda x: ops.sum(x, axis=1), _param(rng, 3, 4)),
        "mean": _case(rng, lambda x: ops.mean(x, axis=0, keepdims=True), _param(rng, 3, 4)),
        "abs_mean": _case(rng, ops.abs_mean, _param(rng, 3, 4, away_from_zero=True)),
        "reshape": _case(rng, lambda x: ops.reshape(x, (4, 3)), _param(rng, 3, 4)),
        "transpose": _case(rng, ops.transpose, _param(rng, 3, 4)),
        "matmul": _case(rng, ops.matmul, _param(rng, 3, 4), _param(rng, 4, 2)),
        "affine": _case(rng, ops.affine, _param(rng, 3, 4), _param(rng, 4, 2), _param(rng, 2)),
        "conv2d": _case(rng, lambda x, k, b: ops.conv2d(x, k, b, stride=1, pad=1),
                        _param(rng, 2, 2, 5, 5), _param(rng, 3, 2, 3, 3), _param(rng, 3)),
        "conv2d_strided": _case(rng, lambda x, k: ops.conv2d(x, k, stride=2, pad=1),
                                _param(rng, 2, 2, 6, 6), _param(rng, 2, 2, 3, 3)),
        "nearest_upsample": _case(rng, lambda x: ops.nearest_upsample(x, 2), _param(rng, 2, 2, 3, 3)),
        "sigmoid": _case(rng, ops.sigmoid, _param(rng, 3, 4)),
        "relu": _case(rng, ops.relu, _param(rng, 3, 4, away_from_zero=True)),
        "group_norm": _case(rng, lambda x, g, b: ops.group_norm(x, 2, g, b),
                            _param(rng, 2, 4, 3, 3), _param(rng, 4), _param(rng, 4)),
        "layer_norm": _case(rng, ops.layer_norm, _param(rng, 3, 5), _param(rng, 5), _param(rng, 5)),
        "standardize_channels": _case(
            rng, lambda x: ops.standardize_channels(x, stats_mean, stats_std), _param(rng, 2, 2, 3, 3)),
        "l2_normalize": _case(rng, ops.l2_normalize, _param(rng, 3, 4, away_from_zero=True)),
        "logsumexp": _case(rng, ops.logsumexp, _param(rng, 3, 5)),
        "gather_cols": _case(rng, lambda x: ops.gather_cols(x, index), _param(rng, 3, 5)),
        "take_rows": _case(rng, lambda x: ops.take_rows(x, order), _param(rng, 4, 3)),
        "broadcast_channels": _case(rng, lambda m: ops.broadcast_channels(m, 3), _param(rng, 2, 1, 4, 4)),
        "convex_mix": _case(rng, lambda x, m: ops.convex_mix(x, m, Tensor(noise)),
                            _param(rng, 2, 3, 4, 4), _param(rng, 2, 1, 4, 4)),
    }


def composite_case(rng: np.random.Generator, max_depth: int = 8, width: int = 4) -> Case:
    """Random chain of smooth shape-preserving primitives over a B,D matrix."""
    x = _param(rng, 3, width)
    params: List[Tensor] = [x]
    steps = []
    for _ in range(int(rng.integers(1, max_depth + 1))):
        kind = ["sigmoid", "scale", "mul", "add", "affine", "layer_norm", "l2_normalize"][int(rng.integers(0, 7))]
        if kind == "mul" or kind == "add":
            params.append(_param(rng, 3, width))
            steps.append((kind, [params[-1]]))
        elif kind == "affine":
            params.extend([_param(rng, width, width), _param(rng, width)])
            steps.append((kind, params[-2:]))
        elif kind == "layer_norm":
            params.extend([_param(rng, width), _param(rng, width)])
            steps.append((kind, params[-2:]))
        elif kind == "scale":
            steps.append((kind, [float(rng.uniform(-2, 2)), float(rng.uniform(-1, 1))]))
        else:
            steps.append((kind, []))

    def build(*_):
        out = x
        for kind, extra in steps:
            if kind == "sigmoid":
                out = ops.sigmoid(out)
            elif kind == "scale":
                out = ops.scale(out, extra[0], extra[1])
            elif kind == "mul":
                out = ops.mul(out, extra[0])
            elif kind == "add":
                out = ops.add(out, extra[0])
            elif kind == "affine":
                out = ops.affine(out, extra[0], extra[1])
            elif kind == "layer_norm":
                out = ops.layer_norm(out, extra[0], extra[1])
            else:
                out = ops.l2_normalize(out)
        return out

    return _case(rng, build, *params)


@dataclass
class SuiteReport:
    primitives: Dict[str, float]
    composite_max: float
    tol: float
    seeds: int

    @property
    def max_rel_error(self) -> float:
        return max([self.composite_max] + list(self.primitives.values()))

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def run_gradcheck_suite(seeds: int = 100, max_depth: int = 8, analytic_dtype=np.float64,
                        tol: Optional[float] = None, progress: Optional[Callable] = None) -> SuiteReport:
    """Check every primitive and one random composite per seed."""
    if tol is None:
        tol = 1e-6 if np.dtype(analytic_dtype) == np.float64 else 1e-4
    worst: Dict[str, float] = {}
    composite_max = 0.0
    seed_iter = range(seeds) if progress is None else progress(range(seeds))
    for seed in seed_iter:
        rng = np.random.default_rng(seed)
        with precision(np.float64):
            cases = primitive_cases(rng)
            composite = composite_case(rng, max_depth)
        for name, (fn, params) in cases.items():
            report = finite_diff_check(fn, params, tol=tol, analytic_dtype=analytic_dtype)
            worst[name] = max(worst.get(name, 0.0), report.max_rel_error)
        report = finite_diff_check(composite[0], composite[1], tol=tol, analytic_dtype=analytic_dtype)
        composite_max = max(composite_max, report.max_rel_error)

    result = SuiteReport(primitives=worst, composite_max=composite_max, tol=tol, seeds=seeds)
    logger.info("gradcheck_suite | seeds=%d | max_rel_error=%.3e | passed=%s",
                seeds, result.max_rel_error, result.passed)
    return result
