"""Exponential moving average shadow of a module's parameters and buffers."""
from __future__ import annotations

import copy

import torch
from torch import nn

from .errors import UfemaError


class EMACorruptionError(UfemaError):
    """The shadow and the live model no longer have matching tensors."""


class EMAState:
    """Pair of modules (live model, smoothed shadow) plus alpha and a step count.

    Both copies start from the same weights. Floating-point buffers such as
    batch-norm running statistics are averaged with the same alpha as the
    parameters; integer buffers are copied from the live model.
    """

    def __init__(self, model: nn.Module, alpha: float = 0.999, shadow: nn.Module | None = None,
                 step: int = 0):
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        self.model = model
        self.shadow = shadow if shadow is not None else copy.deepcopy(model)
        for p in self.shadow.parameters():
            p.requires_grad_(False)
        self.shadow.eval()
        self.alpha = float(alpha)
        self.step = int(step)


@torch.no_grad()
def ema_update(state: EMAState) -> EMAState:
    """theta_ema <- alpha * theta_ema + (1 - alpha) * theta_model, in place."""
    live = state.model.state_dict()
    shadow = state.shadow.state_dict()
    if live.keys() != shadow.keys():
        raise EMACorruptionError("model and EMA shadow have different tensor names")
    a = state.alpha
    for name, s in shadow.items():
        m = live[name]
        if s.shape != m.shape:
            raise EMACorruptionError(f"shape mismatch for {name}: {tuple(s.shape)} vs {tuple(m.shape)}")
        if s.is_floating_point():
            s.mul_(a).add_(m.detach(), alpha=1.0 - a)
        else:
            s.copy_(m)
    state.step += 1
    return state


def ema_encoder_snapshot(state: EMAState) -> nn.Module:
    """Frozen, independent copy of the shadow weights in eval mode."""
    snap = copy.deepcopy(state.shadow).eval()
    for p in snap.parameters():
        p.requires_grad_(False)
    return snap
