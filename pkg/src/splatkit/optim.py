"""First-order adaptive-moment optimizer over named parameter groups.

Moments live alongside the cloud arrays; densification reshapes them
through ``resize_rows``. Quaternions are re-normalized after every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradient

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-15


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter array."""

    m: np.ndarray
    v: np.ndarray

    @classmethod
    def like(cls, param: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(param), v=np.zeros_like(param))


@dataclass
class Adam:
    """Adam over a dict of named arrays with per-group learning rates."""

    learning_rates: dict[str, float]
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS
    step_count: int = 0
    states: dict[str, AdamState] = field(default_factory=dict)

    def ensure_state(self, params: dict[str, np.ndarray]) -> None:
        for name, arr in params.items():
            if name not in self.states:
                self.states[name] = AdamState.like(arr)

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray],
             lr_overrides: dict[str, float] | None = None) -> None:
        """One in-place update; raises on non-finite gradients."""
        self.ensure_state(params)
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, param in params.items():
            grad = grads[name]
            if param.shape != grad.shape:
                raise ValueError(f"gradient shape mismatch for {name}: "
                                 f"{param.shape} vs {grad.shape}")
            if not np.all(np.isfinite(grad)):
                raise NonFiniteGradient(f"non-finite gradient for {name}")
            lr = (lr_overrides or {}).get(name, self.learning_rates[name])
            state = self.states[name]
            state.m *= self.beta1
            state.m += (1.0 - self.beta1) * grad
            state.v *= self.beta2
            state.v += (1.0 - self.beta2) * grad * grad
            m_hat = state.m / bc1
            v_hat = state.v / bc2
            param -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def append_rows(self, n_added: int) -> None:
        """Extend every moment array with zero rows for new Gaussians."""
        for state in self.states.values():
            for attr in ("m", "v"):
                old = getattr(state, attr)
                fresh = np.zeros((old.shape[0] + n_added,) + old.shape[1:],
                                 dtype=old.dtype)
                fresh[:old.shape[0]] = old
                setattr(state, attr, fresh)

    def select_rows(self, keep: np.ndarray) -> None:
        """Filter moment rows to the kept Gaussians (mask or index array)."""
        for state in self.states.values():
            state.m = state.m[keep].copy()
            state.v = state.v[keep].copy()

    def zero_group(self, name: str) -> None:
        if name in self.states:
            self.states[name].m[:] = 0.0
            self.states[name].v[:] = 0.0
