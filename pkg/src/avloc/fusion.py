"""Residual cross-modal fusion of the two encoder final states.

For each track (hidden and cell) with its own shared MLP g:

    m  = (g(a) + g(v)) / 2
    a' = tanh(a + m)
    v' = tanh(v + m)
    fused = a' + v'

Both modalities pass through the same g, so the fused value is symmetric
under swapping the audio and visual inputs.  The fused hidden/cell pair
becomes the decoder's initial state.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .lstm import LstmState, _glorot
from .ops import ShapeError


@dataclass
class MlpParams:
    """One-hidden-layer MLP with tanh: y = w2 @ tanh(w1 @ x + b1) + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def input_size(self) -> int:
        return self.w1.shape[1]

    @property
    def output_size(self) -> int:
        return self.w2.shape[0]

    def tensors(self):
        yield "w1", self.w1
        yield "b1", self.b1
        yield "w2", self.w2
        yield "b2", self.b2


@dataclass
class MlpTrace:
    x: np.ndarray
    hidden: np.ndarray  # tanh(w1 @ x + b1)


def init_mlp_params(input_size: int, hidden_size: int, output_size: int,
                    rng: np.random.Generator, dtype=np.float64) -> MlpParams:
    """Glorot-uniform weights, zero biases; draw order w1 then w2."""
    return MlpParams(
        w1=_glorot(rng, hidden_size, input_size, dtype),
        b1=np.zeros(hidden_size, dtype=dtype),
        w2=_glorot(rng, output_size, hidden_size, dtype),
        b2=np.zeros(output_size, dtype=dtype),
    )


def zeros_mlp_params(input_size: int, hidden_size: int, output_size: int,
                     dtype=np.float64) -> MlpParams:
    return MlpParams(
        w1=np.zeros((hidden_size, input_size), dtype=dtype),
        b1=np.zeros(hidden_size, dtype=dtype),
        w2=np.zeros((output_size, hidden_size), dtype=dtype),
        b2=np.zeros(output_size, dtype=dtype),
    )


def zeros_like_mlp(params: MlpParams) -> MlpParams:
    return MlpParams(**{name: np.zeros_like(arr) for name, arr in params.tensors()})


def mlp_forward(params: MlpParams, x: np.ndarray):
    hidden = ops.tanh(ops.matvec(params.w1, x) + params.b1)
    y = ops.matvec(params.w2, hidden) + params.b2
    return y, MlpTrace(x, hidden)


def mlp_backward(params: MlpParams, trace: MlpTrace, gout: np.ndarray):
    """Returns (param grads, grad wrt x)."""
    dw2, dhidden = ops.matvec_grad(params.w2, trace.hidden, gout)
    dz1 = ops.tanh_grad(trace.hidden, dhidden)
    dw1, dx = ops.matvec_grad(params.w1, trace.x, dz1)
    return MlpParams(w1=dw1, b1=dz1, w2=dw2, b2=gout.copy()), dx


@dataclass
class FusionParams:
    g_h: MlpParams  # fuses hidden states
    g_c: MlpParams  # fuses cell states

    def tensors(self):
        for name, arr in self.g_h.tensors():
            yield "g_h." + name, arr
        for name, arr in self.g_c.tensors():
            yield "g_c." + name, arr


@dataclass
class FusedState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class _TrackTrace:
    a: np.ndarray
    v: np.ndarray
    mlp_a: MlpTrace
    mlp_v: MlpTrace
    out_a: np.ndarray  # tanh(a + m)
    out_v: np.ndarray  # tanh(v + m)


@dataclass
class FusionTrace:
    hidden: _TrackTrace
    cell: _TrackTrace


def init_fusion_params(hidden_size: int, rng: np.random.Generator,
                       dtype=np.float64) -> FusionParams:
    """Two MLPs (hidden-state fusion drawn first, then cell-state fusion)."""
    g_h = init_mlp_params(hidden_size, hidden_size, hidden_size, rng, dtype)
    g_c = init_mlp_params(hidden_size, hidden_size, hidden_size, rng, dtype)
    return FusionParams(g_h=g_h, g_c=g_c)


def zeros_fusion_params(hidden_size: int, dtype=np.float64) -> FusionParams:
    h = hidden_size
    return FusionParams(g_h=zeros_mlp_params(h, h, h, dtype),
                        g_c=zeros_mlp_params(h, h, h, dtype))


def zeros_like_fusion(params: FusionParams) -> FusionParams:
    return FusionParams(g_h=zeros_like_mlp(params.g_h), g_c=zeros_like_mlp(params.g_c))


def _fuse_track(mlp: MlpParams, a: np.ndarray, v: np.ndarray):
    ga, tr_a = mlp_forward(mlp, a)
    gv, tr_v = mlp_forward(mlp, v)
    m = 0.5 * (ga + gv)
    out_a = ops.tanh(a + m)
    out_v = ops.tanh(v + m)
    return out_a + out_v, _TrackTrace(a, v, tr_a, tr_v, out_a, out_v)


def _fuse_track_backward(mlp: MlpParams, trace: _TrackTrace, gout: np.ndarray):
    dza = ops.tanh_grad(trace.out_a, gout)
    dzv = ops.tanh_grad(trace.out_v, gout)
    dm = dza + dzv
    mlp_grads_a, da_mlp = mlp_backward(mlp, trace.mlp_a, 0.5 * dm)
    mlp_grads_v, dv_mlp = mlp_backward(mlp, trace.mlp_v, 0.5 * dm)
    mlp_grads = MlpParams(
        w1=mlp_grads_a.w1 + mlp_grads_v.w1,
        b1=mlp_grads_a.b1 + mlp_grads_v.b1,
        w2=mlp_grads_a.w2 + mlp_grads_v.w2,
        b2=mlp_grads_a.b2 + mlp_grads_v.b2,
    )
    return mlp_grads, dza + da_mlp, dzv + dv_mlp


def fuse(params: FusionParams, audio: LstmState, visual: LstmState):
    """Fuse the two final encoder states.  Returns (FusedState, FusionTrace)."""
    if audio.h.shape != visual.h.shape or audio.c.shape != visual.c.shape:
        raise ShapeError("fuse", audio.h.shape, visual.h.shape)
    h_f, tr_h = _fuse_track(params.g_h, audio.h, visual.h)
    c_f, tr_c = _fuse_track(params.g_c, audio.c, visual.c)
    return FusedState(h_f, c_f), FusionTrace(hidden=tr_h, cell=tr_c)


def fuse_backward(params: FusionParams, trace: FusionTrace,
                  dh: np.ndarray, dc: np.ndarray):
    """Backward through fuse.

    Returns (param grads, grads on the audio state, grads on the visual
    state), the state grads as LstmState bundles.
    """
    gh, dah, dvh = _fuse_track_backward(params.g_h, trace.hidden, dh)
    gc, dac, dvc = _fuse_track_backward(params.g_c, trace.cell, dc)
    grads = FusionParams(g_h=gh, g_c=gc)
    return grads, LstmState(dah, dac), LstmState(dvh, dvc)
