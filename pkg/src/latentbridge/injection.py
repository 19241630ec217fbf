"""Conservative hidden-state injection: blend, spatial and temporal targeting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class InjectionPolicy:
    alpha: float = 0.3
    target_layers: tuple[int, ...] = (-3, -2, -1)
    target_positions: int = 3
    active_steps: int = 3

    def __post_init__(self):
        object.__setattr__(self, "target_layers", tuple(int(x) for x in self.target_layers))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.target_layers:
            raise ValueError("target_layers must be nonempty")
        if self.target_positions < 1:
            raise ValueError("target_positions must be >= 1")
        if self.active_steps < 1:
            raise ValueError("active_steps must be >= 1")

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "layers": list(self.target_layers),
                "positions": self.target_positions, "steps": self.active_steps}

    @classmethod
    def from_json(cls, d: dict) -> "InjectionPolicy":
        return cls(alpha=float(d.get("alpha", 0.3)),
                   target_layers=tuple(d.get("layers", (-3, -2, -1))),
                   target_positions=int(d.get("positions", 3)),
                   active_steps=int(d.get("steps", 3)))

    def layer_indices(self, n_layers: int) -> tuple[int, ...]:
        """Absolute 0-based layer indices; offsets are counted from the end."""
        out = []
        for off in self.target_layers:
            idx = off + n_layers if off < 0 else off
            if not 0 <= idx < n_layers:
                raise ValueError(f"target layer {off} is outside a {n_layers}-layer model")
            out.append(idx)
        return tuple(sorted(set(out)))


def blend(h, v, alpha: float) -> np.ndarray:
    """``(1 - alpha) * h + alpha * v``, elementwise."""
    h = np.asarray(h)
    v = np.asarray(v)
    if h.shape[-1] != v.shape[-1]:
        raise ValueError(f"blend: hidden width {h.shape[-1]} != vector width {v.shape[-1]}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"blend: alpha must lie in [0, 1], got {alpha}")
    dtype = np.result_type(h.dtype, np.float32)
    a = dtype.type(alpha)
    return ((dtype.type(1) - a) * h + a * v).astype(dtype, copy=False)


def apply_policy(hidden: np.ndarray, layer: int, policy: InjectionPolicy, v: np.ndarray,
                 step: int, n_layers: int) -> np.ndarray:
    """Return the layer output after injection for decoding ``step``.

    ``hidden`` is (L, d) or (B, L, d); the final ``target_positions`` rows are
    blended when the layer is targeted and ``step < active_steps``.  Anything
    else is returned unchanged (same object).
    """
    if step < 0:
        raise ValueError("step must be >= 0")
    if step >= policy.active_steps or layer not in policy.layer_indices(n_layers):
        return hidden
    v = np.asarray(v, dtype=hidden.dtype)
    if v.shape != (hidden.shape[-1],):
        raise ValueError(f"injected vector has shape {v.shape}, model width is {hidden.shape[-1]}")
    out = hidden.copy()
    L = hidden.shape[-2]
    start = max(0, L - policy.target_positions)
    out[..., start:, :] = blend(hidden[..., start:, :], v, policy.alpha)
    return out


@dataclass
class BoundPolicy:
    """A policy checked against one model and holding its injected vector."""

    policy: InjectionPolicy
    n_layers: int
    vector: np.ndarray

    def hook(self, step: int):
        if step >= self.policy.active_steps:
            return None

        def _hook(layer: int, h: Tensor) -> Tensor:
            new = apply_policy(h.data, layer, self.policy, self.vector, step, self.n_layers)
            return h if new is h.data else Tensor(new)

        return _hook


def bind_policy(policy: InjectionPolicy, n_layers: int, vector, d_model: int) -> BoundPolicy:
    policy.layer_indices(n_layers)
    v = np.asarray(vector, dtype=np.float32)
    if v.shape != (d_model,):
        raise ValueError(f"injected vector dimension {v.shape} != d_model {d_model}")
    if not np.all(np.isfinite(v)):
        raise ValueError("injected vector contains non-finite values")
    return BoundPolicy(policy, n_layers, v)
