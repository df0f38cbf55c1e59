"""Dense-network substrate: MLP forward/backward, Gaussian policy head,
running observation normalizer, and the binary checkpoint format.

Gradients are hand-rolled reverse mode over the fixed affine+ELU topology so
they stay independently checkable against finite differences. Everything is
float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN = -4.0
LOG_STD_MAX = 1.0
LOG2PI = float(np.log(2.0 * np.pi))

# Hidden-layer weights: uniform(-a, a) with a = sqrt(3 / fan_in).
INIT_GAIN = 3.0


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


class Mlp:
    """Affine stack with ELU on hidden layers, identity on the output."""

    def __init__(self, layer_dims, rng: np.random.Generator, out_scale: float = 1.0):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            a = np.sqrt(INIT_GAIN / fan_in)
            self.weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.weights[-1] *= out_scale

    @classmethod
    def from_params(cls, layer_dims, weights, biases) -> "Mlp":
        net = cls.__new__(cls)
        net.layer_dims = tuple(int(d) for d in layer_dims)
        net.weights = [np.asarray(w, dtype=float) for w in weights]
        net.biases = [np.asarray(b, dtype=float) for b in biases]
        for i, (fan_in, fan_out) in enumerate(zip(net.layer_dims[:-1], net.layer_dims[1:])):
            if net.weights[i].shape != (fan_in, fan_out) or net.biases[i].shape != (fan_out,):
                raise ShapeError(
                    f"layer {i}: expected {(fan_in, fan_out)}, "
                    f"got {net.weights[i].shape}/{net.biases[i].shape}"
                )
        return net

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray, cache: bool = False):
        """Returns output (and the activation cache when requested)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.layer_dims[0]:
            raise ShapeError(f"input dim {x.shape[-1]} != {self.layer_dims[0]}")
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
        acts = [h]   # post-activation inputs per layer
        pres = []    # pre-activations of hidden layers
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < self.n_layers - 1:
                pres.append(z)
                h = elu(z)
                acts.append(h)
            else:
                h = z
        out = h[0] if squeeze else h
        if cache:
            return out, (acts, pres)
        return out

    def backward(self, cache, upstream: np.ndarray) -> "GradBuffer":
        """Exact gradients of sum(upstream * output) w.r.t. parameters and input."""
        if cache is None:
            raise ValueError("forward cache missing; call forward(cache=True) first")
        acts, pres = cache
        delta = np.atleast_2d(np.asarray(upstream, dtype=float))
        buf = GradBuffer.zeros_like(self)
        for i in range(self.n_layers - 1, -1, -1):
            buf.weights[i] += acts[i].T @ delta
            buf.biases[i] += delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * elu_grad(pres[i - 1])
        buf.input_grad = delta @ self.weights[0].T
        buf.count += 1
        return buf


class ShapeError(ValueError):
    """Parameter/input shapes do not chain."""


@dataclass
class GradBuffer:
    """Accumulated parameter gradients matching an Mlp's shapes."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_grad: np.ndarray | None = None
    count: int = 0

    @classmethod
    def zeros_like(cls, net: Mlp) -> "GradBuffer":
        return cls(
            weights=[np.zeros_like(w) for w in net.weights],
            biases=[np.zeros_like(b) for b in net.biases],
        )

    def add(self, other: "GradBuffer") -> "GradBuffer":
        for a, b in zip(self.weights, other.weights):
            a += b
        for a, b in zip(self.biases, other.biases):
            a += b
        self.count += other.count
        return self

    def zero(self):
        for w in self.weights:
            w[...] = 0.0
        for b in self.biases:
            b[...] = 0.0
        self.input_grad = None
        self.count = 0

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])


class RunningNorm:
    """Streaming mean/variance normalizer (Welford batch updates)."""

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip

    def update(self, batch: np.ndarray):
        batch = np.atleast_2d(batch)
        n = batch.shape[0]
        if n == 0:
            return
        bmean = batch.mean(axis=0)
        bvar = batch.var(axis=0)
        delta = bmean - self.mean
        tot = self.count + n
        self.mean = self.mean + delta * n / tot
        m_a = self.var * self.count
        m_b = bvar * n
        self.var = (m_a + m_b + delta ** 2 * self.count * n / tot) / tot
        self.count = tot

    def normalize(self, x: np.ndarray) -> np.ndarray:
        y = (x - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(y, -self.clip, self.clip)

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "mean": self.mean.copy(),
            "var": self.var.copy(),
            "count": np.array([self.count]),
        }

    @classmethod
    def from_arrays(cls, arrays: dict, clip: float = 10.0) -> "RunningNorm":
        rn = cls(arrays["mean"].size, clip=clip)
        rn.mean = np.array(arrays["mean"], dtype=float)
        rn.var = np.array(arrays["var"], dtype=float)
        rn.count = float(np.asarray(arrays["count"]).ravel()[0])
        return rn


class GaussianPolicy:
    """Diagonal-Gaussian actor: state-dependent mean, learned global log-std."""

    def __init__(self, mean_net: Mlp, log_std_init: float = -1.0,
                 normalizer: RunningNorm | None = None):
        self.mean_net = mean_net
        self.action_dim = mean_net.layer_dims[-1]
        self.log_std = np.full(self.action_dim, float(log_std_init))
        self.normalizer = normalizer

    def clamp_log_std(self):
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def mean(self, obs: np.ndarray, cache: bool = False):
        x = self.normalizer.normalize(obs) if self.normalizer is not None else obs
        return self.mean_net.forward(x, cache=cache)

    def log_prob(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        mu = self.mean(obs)
        return gaussian_log_prob(np.asarray(action, dtype=float), mu, self.log_std)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        mu = self.mean(obs)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(np.shape(mu))
        action = mu + std * noise
        return action, gaussian_log_prob(action, mu, self.log_std)

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (1.0 + LOG2PI)))


def gaussian_log_prob(action, mu, log_std) -> np.ndarray:
    std = np.exp(log_std)
    z = (action - mu) / std
    return -0.5 * (z ** 2).sum(axis=-1) - np.sum(log_std) - 0.5 * action.shape[-1] * LOG2PI


def gaussian_kl(mu_old, log_std_old, mu_new, log_std_new) -> np.ndarray:
    """KL(old || new) per sample for diagonal Gaussians."""
    var_old = np.exp(2.0 * log_std_old)
    var_new = np.exp(2.0 * log_std_new)
    return np.sum(
        log_std_new - log_std_old
        + (var_old + (mu_old - mu_new) ** 2) / (2.0 * var_new)
        - 0.5,
        axis=-1,
    )


# --- checkpoint format -------------------------------------------------------
#
# Layout (all little-endian):
#   magic "CHNWALK1" | version u32 | config-hash 32 bytes | section count u32
#   per section: name-length u32, name utf-8, rank u32, dims u64..., f64 data
#
# Every section is a float64 array; layer tables are stored as float arrays of
# integers. Serialization is exact, so save -> load -> save is byte-identical.

MAGIC = b"CHNWALK1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, truncated, or incompatible checkpoint file."""


@dataclass
class Checkpoint:
    config_hash: bytes
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def put_mlp(self, prefix: str, net: Mlp):
        self.arrays[f"{prefix}/layer_dims"] = np.array(net.layer_dims, dtype=float)
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            self.arrays[f"{prefix}/w{i}"] = w
            self.arrays[f"{prefix}/b{i}"] = b

    def get_mlp(self, prefix: str) -> Mlp:
        key = f"{prefix}/layer_dims"
        if key not in self.arrays:
            raise CheckpointError(f"checkpoint has no network section '{prefix}'")
        dims = [int(d) for d in self.arrays[key]]
        n = len(dims) - 1
        weights = [self.arrays[f"{prefix}/w{i}"] for i in range(n)]
        biases = [self.arrays[f"{prefix}/b{i}"] for i in range(n)]
        return Mlp.from_params(dims, weights, biases)

    def param_count(self) -> int:
        return sum(
            a.size for k, a in self.arrays.items()
            if "/w" in k or "/b" in k or k.endswith("log_std")
        )


def save_params(path, ckpt: Checkpoint):
    if len(ckpt.config_hash) != 32:
        raise ValueError("config hash must be 32 bytes (sha256 digest)")
    chunks = [MAGIC, np.uint32(FORMAT_VERSION).tobytes(), ckpt.config_hash,
              np.uint32(len(ckpt.arrays)).tobytes()]
    for name in sorted(ckpt.arrays):
        arr = np.ascontiguousarray(ckpt.arrays[name], dtype="<f8")
        nb = name.encode("utf-8")
        chunks.append(np.uint32(len(nb)).tobytes())
        chunks.append(nb)
        chunks.append(np.uint32(arr.ndim).tobytes())
        chunks.append(np.array(arr.shape, dtype="<u8").tobytes())
        chunks.append(arr.tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def load_params(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"truncated checkpoint: needed {n} bytes at offset {pos}")
        out = data[pos:pos + n]
        pos += n
        return out

    if take(len(MAGIC)) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version = int(np.frombuffer(take(4), dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"format version {version} != supported {FORMAT_VERSION}")
    config_hash = take(32)
    count = int(np.frombuffer(take(4), dtype="<u4")[0])
    arrays = {}
    for _ in range(count):
        name_len = int(np.frombuffer(take(4), dtype="<u4")[0])
        name = take(name_len).decode("utf-8")
        rank = int(np.frombuffer(take(4), dtype="<u4")[0])
        shape = tuple(int(d) for d in np.frombuffer(take(8 * rank), dtype="<u8"))
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).copy()
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after last section")
    return Checkpoint(config_hash=config_hash, arrays=arrays)
