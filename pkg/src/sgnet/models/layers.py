"""Layer objects holding named parameters and running buffers."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor

# (name, shape) of every parameter created while a build log is open; the
# independent oracle behind count_parameters reads this.
_build_log: list | None = None


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._children: dict[str, Module] = {}
        self.training = True

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        t = ad.parameter(data, name)
        self._params[name] = t
        if _build_log is not None:
            _build_log.append(tuple(t.shape))
        return t

    def add_buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        self._buffers[name] = np.asarray(data, dtype=np.float64)
        return self._buffers[name]

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = ""):
        for name, t in self._params.items():
            yield prefix + name, t
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def set_training(self, flag: bool):
        self.training = flag
        for child in self._children.values():
            child.set_training(flag)

    def zero_grad(self):
        for t in self.parameters():
            t.grad = np.zeros_like(t.data)


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv3d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator):
        super().__init__()
        self.k = k
        self.weight = self.add_param("weight", he_normal(rng, (c_out, c_in, k, k, k), c_in * k**3))
        self.bias = self.add_param("bias", np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv3d(x, self.weight, self.bias, stride=1, padding=(self.k - 1) // 2)


class ConvTranspose3d(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        super().__init__()
        self.weight = self.add_param("weight", he_normal(rng, (c_in, c_out, 2, 2, 2), c_in * 8))
        self.bias = self.add_param("bias", np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv_transpose3d(x, self.weight, self.bias)


class BatchNorm3d(Module):
    def __init__(self, c: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = self.add_param("gamma", np.ones(c))
        self.beta = self.add_param("beta", np.zeros(c))
        self.running_mean = self.add_buffer("running_mean", np.zeros(c))
        self.running_var = self.add_buffer("running_var", np.ones(c))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.batchnorm3d(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps,
        )


class ConvBlock(Module):
    """Two 3x3x3 conv + batch-norm + ReLU stages."""

    def __init__(self, c_in: int, c_out: int, rng, momentum: float, eps: float):
        super().__init__()
        self.conv1 = self.add_child("conv1", Conv3d(c_in, c_out, 3, rng))
        self.bn1 = self.add_child("bn1", BatchNorm3d(c_out, momentum, eps))
        self.conv2 = self.add_child("conv2", Conv3d(c_out, c_out, 3, rng))
        self.bn2 = self.add_child("bn2", BatchNorm3d(c_out, momentum, eps))

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.relu(self.bn1(self.conv1(x)))
        return ad.relu(self.bn2(self.conv2(h)))


class ResidualBlock(ConvBlock):
    """ConvBlock plus an identity shortcut, projected by 1x1x1 conv when widths change."""

    def __init__(self, c_in: int, c_out: int, rng, momentum: float, eps: float):
        super().__init__(c_in, c_out, rng, momentum, eps)
        self.proj = self.add_child("proj", Conv3d(c_in, c_out, 1, rng)) if c_in != c_out else None

    def __call__(self, x: Tensor) -> Tensor:
        shortcut = self.proj(x) if self.proj is not None else x
        return ad.add(super().__call__(x), shortcut)


class SpatialGatingModule(Module):
    """Group-wise gating of a skip feature.

    ``literal``: per group, ``a = sigmoid(W_g @ GAP(x_g) + b_g)`` gates each
    channel of the group. ``spatial``: per group, the similarity of every
    voxel to the group's pooled descriptor is standardised over space and
    squashed into a per-voxel gate ``sigmoid(gamma_g * s + beta_g)``.
    """

    def __init__(self, channels: int, groups: int, variant: str, rng: np.random.Generator):
        super().__init__()
        if channels % groups:
            raise ValueError(f"{channels} channels are not divisible into {groups} groups")
        if variant not in ("literal", "spatial"):
            raise ValueError(f"unknown SGM variant {variant!r}")
        self.groups, self.variant = groups, variant
        self.group_size = cg = channels // groups
        self.gates = []
        for g in range(groups):
            child = self.add_child(f"group{g}", Module())
            if variant == "literal":
                w = child.add_param("weight", he_normal(rng, (cg, cg), cg))
                b = child.add_param("bias", np.zeros(cg))
            else:
                # SGE-style start: flat gate sigmoid(1) until training moves gamma
                w = child.add_param("gamma", np.zeros(1))
                b = child.add_param("beta", np.ones(1))
            self.gates.append((w, b))

    def gate_values(self, x: Tensor) -> list[np.ndarray]:
        """Gate activations per group (for inspection; no graph recorded)."""
        with ad.no_grad():
            return [a.data for _, a in self._gated(x)]

    def _gated(self, x: Tensor):
        n = x.shape[0]
        for xg, (w, b) in zip(ad.split_groups(x, self.groups), self.gates):
            if self.variant == "literal":
                a = ad.sigmoid(ad.dense(ad.global_avg_pool(xg), w, b))
                a = ad.reshape(a, (n, self.group_size, 1, 1, 1))
            else:
                desc = ad.reshape(ad.global_avg_pool(xg), (n, self.group_size, 1, 1, 1))
                s = ad.standardize_spatial(ad.sum_channels(ad.mul(xg, desc)))
                a = ad.sigmoid(ad.scale_shift(s, w, b))
            yield xg, a

    def __call__(self, x: Tensor) -> Tensor:
        return ad.concat_channels(*[ad.mul(xg, a) for xg, a in self._gated(x)])


class AttentionGate(Module):
    """Additive soft-attention gate on a skip path, gated by the decoder feature."""

    def __init__(self, c_skip: int, c_gate: int, rng: np.random.Generator):
        super().__init__()
        inter = max(1, c_skip // 2)
        self.theta = self.add_child("theta", Conv3d(c_skip, inter, 1, rng))
        self.phi = self.add_child("phi", Conv3d(c_gate, inter, 1, rng))
        self.psi = self.add_child("psi", Conv3d(inter, 1, 1, rng))

    def __call__(self, skip: Tensor, gate: Tensor) -> Tensor:
        f = ad.relu(ad.add(self.theta(skip), self.phi(gate)))
        return ad.mul(skip, ad.sigmoid(self.psi(f)))
