"""Parameter containers and small reusable layers."""

import numpy as np

from .autograd import Tensor, concat, layer_norm, parameter


class Module:
    """Collects parameters from attributes, nested modules and lists of modules."""

    training = True

    def named_parameters(self, prefix=""):
        seen = set()
        for name, value in vars(self).items():
            yield from _walk(value, prefix + name, seen)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for v in value:
                    if isinstance(v, Module):
                        yield from v.modules()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _walk(value, name, seen):
    if isinstance(value, Tensor):
        if value.requires_grad and id(value) not in seen:
            seen.add(id(value))
            yield name, value
    elif isinstance(value, Module):
        for sub, v in vars(value).items():
            yield from _walk(v, f"{name}.{sub}", seen)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            yield from _walk(v, f"{name}.{i}", seen)


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True):
        self.weight = parameter(glorot(rng, d_in, d_out))
        self.bias = parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x):
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim):
        self.gain = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias)


class GRUCell(Module):
    """Standard GRU cell over [B, d_in] inputs."""

    def __init__(self, d_in, hidden, rng):
        self.hidden = hidden
        self.w_gates = parameter(glorot(rng, d_in + hidden, 2 * hidden))
        self.b_gates = parameter(np.zeros(2 * hidden))
        self.w_x = parameter(glorot(rng, d_in, hidden))
        self.w_h = parameter(glorot(rng, hidden, hidden))
        self.b_h = parameter(np.zeros(hidden))

    def __call__(self, x, h):
        gates = (concat([x, h], axis=-1) @ self.w_gates + self.b_gates).sigmoid()
        r = gates[..., : self.hidden]
        z = gates[..., self.hidden :]
        cand = (x @ self.w_x + r * (h @ self.w_h) + self.b_h).tanh()
        return z * cand + (1.0 - z) * h
