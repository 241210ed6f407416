"""Adam with bias correction, in ascend or descend direction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import MlpParams, ShapeError, zeros_like_params

__all__ = ["AdamState", "TrainingError", "init_adam", "adam_step"]


class TrainingError(RuntimeError):
    """Raised when an optimization step cannot proceed (e.g. non-finite gradients)."""


@dataclass
class AdamState:
    m: MlpParams
    v: MlpParams
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: MlpParams, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(m=zeros_like_params(params), v=zeros_like_params(params),
                     step=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: MlpParams, state: AdamState, grads: MlpParams, lr: float,
              direction: str = "descend") -> tuple[MlpParams, AdamState]:
    """One Adam update; ``ascend`` negates the descent step. Purely functional."""
    if direction not in ("ascend", "descend"):
        raise ValueError(f"direction must be 'ascend' or 'descend', got {direction!r}")
    if len(grads.weights) != len(params.weights):
        raise ShapeError("gradient layer count does not match parameters")
    for k, (pw, gw) in enumerate(zip(params.weights, grads.weights)):
        if pw.shape != gw.shape:
            raise ShapeError(f"layer {k}: gradient shape {gw.shape} != parameter shape {pw.shape}")
    if not grads.all_finite():
        bad = [k for k, (gw, gb) in enumerate(zip(grads.weights, grads.biases))
               if not (np.isfinite(gw).all() and np.isfinite(gb).all())]
        raise TrainingError(f"non-finite gradient entries in layer(s) {bad}")

    sign = -1.0 if direction == "descend" else 1.0
    t = state.step + 1
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t

    def upd(p, m, v, g):
        m_new = state.beta1 * m + (1.0 - state.beta1) * g
        v_new = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        step = (m_new / bc1) / (np.sqrt(v_new / bc2) + state.eps)
        return p + sign * lr * step, m_new, v_new

    new_w, new_b, mw, mb, vw, vb = [], [], [], [], [], []
    for pw, pb, miw, mib, viw, vib, gw, gb in zip(
            params.weights, params.biases, state.m.weights, state.m.biases,
            state.v.weights, state.v.biases, grads.weights, grads.biases):
        w, mw_k, vw_k = upd(pw, miw, viw, gw)
        b, mb_k, vb_k = upd(pb, mib, vib, gb)
        new_w.append(w)
        new_b.append(b)
        mw.append(mw_k)
        mb.append(mb_k)
        vw.append(vw_k)
        vb.append(vb_k)
    new_state = AdamState(m=MlpParams(mw, mb), v=MlpParams(vw, vb), step=t,
                          beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    return MlpParams(new_w, new_b), new_state
