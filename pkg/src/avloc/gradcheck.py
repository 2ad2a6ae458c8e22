"""Finite-difference verification of the hand-derived gradients.

Central differences with a configurable epsilon, run in 64-bit precision
on a deliberately tiny model so every parameter entry can be perturbed.
The error measure is |analytic - numeric| / max(1, |numeric|); the guard
in the denominator keeps zero-gradient entries well defined.
"""

from dataclasses import dataclass

import numpy as np

from . import model as model_mod

TINY_DIMS = dict(audio_dim=5, visual_dim=7, hidden_size=4, num_events=3)
TINY_STEPS = 4


def finite_difference_grads(loss_fn, tensors: dict, eps: float = 1e-5) -> dict:
    """Numeric gradients of loss_fn() w.r.t. every entry of every tensor.

    loss_fn takes no arguments and must read the live arrays in `tensors`;
    entries are perturbed in place and restored.
    """
    out = {}
    for name, arr in tensors.items():
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn()
            flat[j] = orig - eps
            down = loss_fn()
            flat[j] = orig
            gflat[j] = (up - down) / (2.0 * eps)
        out[name] = grad
    return out


def max_relative_error(analytic: dict, numeric: dict):
    """Worst guarded relative error over all tensors; returns (err, name)."""
    worst = 0.0
    worst_name = ""
    for name, a in analytic.items():
        n = numeric[name]
        err = np.abs(a - n) / np.maximum(1.0, np.abs(n))
        peak = float(err.max()) if err.size else 0.0
        if peak >= worst:
            worst = peak
            worst_name = name
    return worst, worst_name


@dataclass
class GradcheckResult:
    passed: bool
    tolerance: float
    max_rel_error: float
    worst_tensor: str
    per_loss: dict

    def summary(self) -> str:
        lines = ["gradcheck: %s (tolerance %g)"
                 % ("PASS" if self.passed else "FAIL", self.tolerance)]
        for loss_name, (err, tensor) in self.per_loss.items():
            lines.append("  %-10s max rel err %.3e (worst tensor %s)"
                         % (loss_name, err, tensor))
        return "\n".join(lines)


def run_gradcheck(seed: int = 0, eps: float = 1e-5,
                  tolerance: float = 1e-4) -> GradcheckResult:
    """Check both training losses on a tiny model, every parameter entry."""
    rng = np.random.default_rng(seed)
    params = model_mod.init_model_params(rng=rng, dtype=np.float64, **TINY_DIMS)
    steps = TINY_STEPS
    audio = rng.uniform(-1.0, 1.0, size=(steps, params.audio_dim))
    visual = rng.uniform(-1.0, 1.0, size=(steps, params.visual_dim))
    labels = rng.integers(0, params.num_events + 1, size=steps)
    video_label = model_mod.video_label_from_segments(labels, params.num_events)
    tensors = dict(params.tensors())

    def run(loss_name):
        def value():
            trace = model_mod.forward(params, audio, visual)
            if loss_name == "supervised":
                return model_mod.supervised_objective(trace, labels)[0]
            return model_mod.weak_objective(trace, video_label)[0]

        trace = model_mod.forward(params, audio, visual)
        if loss_name == "supervised":
            _, grads = model_mod.supervised_loss(trace, labels)
        else:
            _, grads = model_mod.weak_loss(trace, video_label)
        numeric = finite_difference_grads(value, tensors, eps)
        return max_relative_error(dict(grads.tensors()), numeric)

    per_loss = {name: run(name) for name in ("supervised", "weak")}
    max_err, worst = max(((err, tensor) for err, tensor in per_loss.values()),
                         key=lambda pair: pair[0])
    return GradcheckResult(passed=max_err < tolerance, tolerance=tolerance,
                           max_rel_error=max_err, worst_tensor=worst,
                           per_loss=per_loss)
