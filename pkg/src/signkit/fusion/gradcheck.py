"""Finite-difference verification of the model's gradients.

Backpropagated gradients are checked against central differences of the
loss for every parameter block; disagreement points at a broken layer.
"""

from __future__ import annotations

import torch

from .model import FusionModel


def grad_check(
    model: FusionModel,
    features: dict[str, torch.Tensor],
    targets: torch.Tensor,
    eps: float = 1e-4,
    feature_padding: dict[str, torch.Tensor] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Requires double precision and dropout disabled; refuses otherwise.
    The error for a block is its max absolute deviation divided by the
    block's gradient magnitude scale, so blocks with near-zero gradients
    do not produce spurious blow-ups.
    """
    if model.cfg.dropout != 0.0:
        raise ValueError("grad_check requires dropout=0 (nondeterministic otherwise)")
    if next(model.parameters()).dtype != torch.float64:
        raise ValueError("grad_check requires a double-precision model")
    model.eval()
    features = {m: f.double() for m, f in features.items()}

    model.zero_grad(set_to_none=True)
    _, loss = model(features, targets, feature_padding)
    loss.backward()

    def loss_value() -> float:
        with torch.no_grad():
            _, l = model(features, targets, feature_padding)
        return float(l)

    max_rel = 0.0
    for name, param in model.named_parameters():
        if param.grad is None:
            continue
        if not torch.isfinite(param.grad).all():
            raise FloatingPointError(f"non-finite gradient in {name}")
        analytic = param.grad.detach().clone()
        numeric = torch.zeros_like(analytic)
        flat = param.data.view(-1)
        num_flat = numeric.view(-1)
        with torch.no_grad():
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                plus = loss_value()
                flat[i] = orig - eps
                minus = loss_value()
                flat[i] = orig
                num_flat[i] = (plus - minus) / (2 * eps)
        scale = max(float(analytic.abs().max()), float(numeric.abs().max()), 1e-8)
        rel = float((analytic - numeric).abs().max()) / scale
        max_rel = max(max_rel, rel)
    return max_rel
