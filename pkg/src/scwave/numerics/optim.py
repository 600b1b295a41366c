"""Trainable parameter containers and the Adam optimizer."""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


class ParamSet:
    """Named groups of trainable float64 arrays.

    The set of names and the shape of every group is fixed at construction;
    ``flat``/``set_flat`` expose the concatenated vector (useful for
    finite-difference checks).
    """

    def __init__(self, groups):
        self._groups = {name: Tensor(np.array(v, dtype=np.float64), requires_grad=True)
                        for name, v in groups.items()}

    def __getitem__(self, name):
        return self._groups[name]

    def __contains__(self, name):
        return name in self._groups

    def __iter__(self):
        return iter(self._groups)

    def items(self):
        return self._groups.items()

    def names(self):
        return list(self._groups)

    @property
    def size(self):
        return sum(t.data.size for t in self._groups.values())

    def zero_grad(self):
        for t in self._groups.values():
            t.grad = None

    def grads(self):
        return {n: (np.zeros_like(t.data) if t.grad is None else t.grad)
                for n, t in self._groups.items()}

    def flat(self):
        return np.concatenate([t.data.ravel() for t in self._groups.values()])

    def flat_grad(self):
        return np.concatenate([g.ravel() for g in self.grads().values()])

    def set_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.size:
            raise ValueError(f"expected {self.size} values, got {vec.size}")
        pos = 0
        for t in self._groups.values():
            n = t.data.size
            t.data = vec[pos:pos + n].reshape(t.data.shape).copy()
            pos += n

    def slices(self):
        """Map group name -> slice into the flat vector."""
        out, pos = {}, 0
        for name, t in self._groups.items():
            out[name] = slice(pos, pos + t.data.size)
            pos += t.data.size
        return out

    def to_dict(self):
        return {n: t.data.tolist() for n, t in self._groups.items()}


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "step": self.step,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    @classmethod
    def from_dict(cls, d):
        st = cls(lr=d["lr"], beta1=d["beta1"], beta2=d["beta2"], eps=d["eps"], step=d["step"])
        st.m = {k: np.array(v, dtype=np.float64) for k, v in d["m"].items()}
        st.v = {k: np.array(v, dtype=np.float64) for k, v in d["v"].items()}
        return st


def adam_step(params: ParamSet, state: AdamState):
    """One bias-corrected Adam update in place; gradients are cleared afterwards."""
    if not state.m:
        for name, t in params.items():
            state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
    if set(state.m) != set(params.names()) or any(
        state.m[n].shape != t.data.shape for n, t in params.items()
    ):
        raise ValueError("optimizer state does not match the parameter set")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, t in params.items():
        g = np.zeros_like(t.data) if t.grad is None else t.grad
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        t.data = t.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.zero_grad()
    return params
