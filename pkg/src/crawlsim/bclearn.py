"""End-to-end behavior cloning from depth images.

A small convolutional front-end (two stride-2 3x3 convs) feeds a
256-128-64-2 fully connected head with rectifier activations everywhere
but the output; the two outputs are the commanded linear velocity and
steering angle.  Everything — forward pass, analytic gradients of the
H-weighted regression loss, and the Adam trainer — is implemented here
in float64 numpy so training is bit-deterministic under a fixed seed and
the analytic gradient can be validated against finite differences to
tight tolerance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .render import DepthImage, MAX_RANGE
from .rng import SplitMix64, derive_seed
from .vehicle import Action

INPUT_SIDE = 32


@dataclass(frozen=True)
class ConvSpec:
    out_ch: int
    kernel: int
    stride: int


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description; the default is the canonical policy net."""

    input_side: int = INPUT_SIDE
    conv: tuple[ConvSpec, ...] = (ConvSpec(8, 3, 2), ConvSpec(16, 3, 2))
    fc: tuple[int, ...] = (256, 128, 64, 2)

    def conv_sides(self) -> list[int]:
        """Spatial side length after each conv layer."""
        sides = [self.input_side]
        for c in self.conv:
            side = (sides[-1] - c.kernel) // c.stride + 1
            if side < 1:
                raise ParameterError("conv stack collapses the image")
            sides.append(side)
        return sides

    def flat_features(self) -> int:
        sides = self.conv_sides()
        ch = self.conv[-1].out_ch if self.conv else 1
        return ch * sides[-1] * sides[-1]

    def layout(self) -> list[tuple[str, tuple[int, ...], int]]:
        """(name, shape, offset) for every weight/bias block, in order."""
        out: list[tuple[str, tuple[int, ...], int]] = []
        offset = 0

        def add(name, shape):
            nonlocal offset
            out.append((name, shape, offset))
            offset += int(np.prod(shape))

        in_ch = 1
        for i, c in enumerate(self.conv):
            add(f"conv{i}_w", (c.out_ch, in_ch, c.kernel, c.kernel))
            add(f"conv{i}_b", (c.out_ch,))
            in_ch = c.out_ch
        prev = self.flat_features()
        for i, width in enumerate(self.fc):
            add(f"fc{i}_w", (width, prev))
            add(f"fc{i}_b", (width,))
            prev = width
        return out

    def n_params(self) -> int:
        name, shape, offset = self.layout()[-1]
        return offset + int(np.prod(shape))


@dataclass
class BcParams:
    """Flat float64 parameter vector plus its architecture."""

    spec: NetworkSpec
    vec: np.ndarray

    def __post_init__(self):
        self.vec = np.asarray(self.vec, dtype=np.float64)
        if self.vec.shape != (self.spec.n_params(),):
            raise ShapeError(
                f"parameter vector has {self.vec.shape}, expected "
                f"({self.spec.n_params()},)"
            )
        if self.spec.fc[-1] != 2:
            raise ParameterError("network must output exactly (v, omega)")
        if not np.all(np.isfinite(self.vec)):
            raise ParameterError("parameters must be finite")

    def view(self, name: str) -> np.ndarray:
        for n, shape, offset in self.spec.layout():
            if n == name:
                return self.vec[offset : offset + int(np.prod(shape))].reshape(shape)
        raise KeyError(name)

    def views(self) -> dict[str, np.ndarray]:
        return {
            n: self.vec[o : o + int(np.prod(s))].reshape(s)
            for n, s, o in self.spec.layout()
        }

    def copy(self) -> "BcParams":
        return BcParams(self.spec, self.vec.copy())


def zero_params(spec: NetworkSpec = NetworkSpec()) -> BcParams:
    return BcParams(spec, np.zeros(spec.n_params()))


def constant_params(v: float, omega: float, spec: NetworkSpec = NetworkSpec()) -> BcParams:
    """Zero network whose output bias pins a constant (v, omega)."""
    p = zero_params(spec)
    p.view(f"fc{len(spec.fc) - 1}_b")[:] = (v, omega)
    return p


def init_params(seed: int, spec: NetworkSpec = NetworkSpec()) -> BcParams:
    """Seeded Glorot-uniform weights (biases zero)."""
    p = zero_params(spec)
    gen = SplitMix64(derive_seed(seed, 0xB0))
    views = p.views()
    in_ch = 1
    for i, c in enumerate(spec.conv):
        fan_in = in_ch * c.kernel * c.kernel
        fan_out = c.out_ch * c.kernel * c.kernel
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = views[f"conv{i}_w"]
        w.flat[:] = gen.uniforms(w.size, -limit, limit)
        in_ch = c.out_ch
    prev = spec.flat_features()
    for i, width in enumerate(spec.fc):
        limit = np.sqrt(6.0 / (prev + width))
        w = views[f"fc{i}_w"]
        w.flat[:] = gen.uniforms(w.size, -limit, limit)
        prev = width
    return p


@dataclass(frozen=True)
class TrainConfig:
    h: tuple[float, float] = (1.0, 1.0)  # diagonal action weights
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if min(self.h) <= 0 or self.learning_rate <= 0 or self.batch_size < 1:
            raise ParameterError("TrainConfig values must be positive")
        if self.epochs < 0:
            raise ParameterError("epochs must be non-negative")


def preprocess(depth) -> np.ndarray:
    """Area-average a square depth image down to 32x32 and normalize by the
    camera range so values lie in (0, 1]."""
    data = depth.data if isinstance(depth, DepthImage) else np.asarray(depth)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ShapeError(f"depth image must be square, got {data.shape}")
    side = data.shape[0]
    if side < INPUT_SIDE or side % INPUT_SIDE != 0:
        raise ShapeError(
            f"depth side {side} must be a multiple of {INPUT_SIDE}"
        )
    block = side // INPUT_SIDE
    pooled = data.reshape(INPUT_SIDE, block, INPUT_SIDE, block).mean(axis=(1, 3))
    return pooled / MAX_RANGE


def _im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """(C, H, W) -> (C*k*k, Ho*Wo) patch matrix."""
    c, h, w = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    cols = np.empty((c, k, k, ho, wo), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = x[:, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * k * k, ho * wo)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int], k: int, stride: int) -> np.ndarray:
    c, h, w = shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    dcols = dcols.reshape(c, k, k, ho, wo)
    dx = np.zeros(shape, dtype=np.float64)
    for i in range(k):
        for j in range(k):
            dx[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
    return dx


def _forward_trace(params: BcParams, x: np.ndarray):
    """Forward pass keeping every intermediate needed for backprop."""
    spec = params.spec
    views = params.views()
    if x.shape != (spec.input_side, spec.input_side):
        raise ShapeError(f"input shape {x.shape}, expected square {spec.input_side}")
    act = np.asarray(x, dtype=np.float64)[None, :, :]  # (1, H, W)
    conv_cols = []
    conv_pre = []
    conv_in_shapes = []
    for i, c in enumerate(spec.conv):
        cols = _im2col(act, c.kernel, c.stride)
        w = views[f"conv{i}_w"].reshape(c.out_ch, -1)
        side = (act.shape[1] - c.kernel) // c.stride + 1
        z = w @ cols + views[f"conv{i}_b"][:, None]
        conv_cols.append(cols)
        conv_pre.append(z)
        conv_in_shapes.append(act.shape)
        act = np.maximum(z, 0.0).reshape(c.out_ch, side, side)
    flat = act.reshape(-1)
    fc_pre = []
    fc_in = []
    n_fc = len(spec.fc)
    a = flat
    for i in range(n_fc):
        fc_in.append(a)
        z = views[f"fc{i}_w"] @ a + views[f"fc{i}_b"]
        fc_pre.append(z)
        a = z if i == n_fc - 1 else np.maximum(z, 0.0)
    return a, (conv_cols, conv_pre, conv_in_shapes, fc_pre, fc_in)


def forward(params: BcParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the policy network; returns raw (v, omega), unclamped."""
    out, _ = _forward_trace(params, x)
    return out


def loss(params: BcParams, batch, h=(1.0, 1.0)) -> float:
    """Sum over the batch of (a_demo - f(x))^T H (a_demo - f(x))."""
    if len(batch) == 0:
        raise DataError("loss needs a non-empty batch")
    hv = np.asarray(h, dtype=np.float64)
    total = 0.0
    for x, a_demo in batch:
        r = np.asarray(a_demo, dtype=np.float64) - forward(params, x)
        total += float(np.dot(hv * r, r))
    return total


def _backward_sample(params: BcParams, trace, out, a_demo, hv, grad_vec: np.ndarray):
    """Accumulate d(loss_sample)/d(params) into grad_vec."""
    spec = params.spec
    views = params.views()
    gviews = BcParams(spec, grad_vec).views()
    conv_cols, conv_pre, conv_in_shapes, fc_pre, fc_in = trace

    r = np.asarray(a_demo, dtype=np.float64) - out
    delta = -2.0 * hv * r  # dL/d(output)
    n_fc = len(spec.fc)
    for i in range(n_fc - 1, -1, -1):
        if i != n_fc - 1:
            delta = delta * (fc_pre[i] > 0.0)
        gviews[f"fc{i}_w"] += np.outer(delta, fc_in[i])
        gviews[f"fc{i}_b"] += delta
        delta = views[f"fc{i}_w"].T @ delta

    if not spec.conv:
        return
    sides = spec.conv_sides()
    ch = spec.conv[-1].out_ch
    delta = delta.reshape(ch, sides[-1] * sides[-1])
    for i in range(len(spec.conv) - 1, -1, -1):
        c = spec.conv[i]
        delta = delta * (conv_pre[i] > 0.0)
        gviews[f"conv{i}_w"] += (delta @ conv_cols[i].T).reshape(
            c.out_ch, -1, c.kernel, c.kernel
        )
        gviews[f"conv{i}_b"] += delta.sum(axis=1)
        if i > 0:
            w = views[f"conv{i}_w"].reshape(c.out_ch, -1)
            dcols = w.T @ delta
            dx = _col2im(dcols, conv_in_shapes[i], c.kernel, c.stride)
            prev_side = sides[i]
            delta = dx.reshape(spec.conv[i - 1].out_ch, prev_side * prev_side)


def gradient(params: BcParams, batch, h=(1.0, 1.0)) -> BcParams:
    """Exact analytic gradient of loss(); per-sample gradients are
    accumulated in batch order, so the batch gradient equals the ordered
    sum of per-sample gradients bit-for-bit."""
    if len(batch) == 0:
        raise DataError("gradient needs a non-empty batch")
    hv = np.asarray(h, dtype=np.float64)
    grad_vec = np.zeros_like(params.vec)
    for x, a_demo in batch:
        out, trace = _forward_trace(params, x)
        _backward_sample(params, trace, out, a_demo, hv, grad_vec)
    return BcParams(params.spec, grad_vec)


def extract_samples(demos) -> list[tuple[np.ndarray, np.ndarray]]:
    """Flatten demonstrations into (preprocessed image, (v, omega)) pairs."""
    samples = []
    for demo in demos:
        for i, frame in enumerate(demo.frames):
            depth = demo.depth(i)
            samples.append(
                (preprocess(depth), np.array([frame.v, frame.omega], dtype=np.float64))
            )
    return samples


def train(dataset, cfg: TrainConfig, spec: NetworkSpec = NetworkSpec()):
    """Adam-train a policy on demonstration samples.

    dataset is either a list of (image, action) pairs (images already
    preprocessed or raw square depth arrays) or anything accepted by
    extract_samples.  Returns (BcParams, per-epoch loss curve); seeded
    shuffling makes the result bit-deterministic.
    """
    if dataset and hasattr(dataset[0], "frames"):
        samples = extract_samples(dataset)
    else:
        samples = [
            (
                x if (np.ndim(x) == 2 and np.shape(x)[0] == spec.input_side) else preprocess(x),
                np.asarray(a, dtype=np.float64),
            )
            for x, a in dataset
        ]
    if not samples:
        raise DataError("training needs at least one frame")

    params = init_params(cfg.seed, spec)
    hv = np.asarray(cfg.h, dtype=np.float64)
    m = np.zeros_like(params.vec)
    v = np.zeros_like(params.vec)
    step_count = 0
    order = list(range(len(samples)))
    shuffler = SplitMix64(derive_seed(cfg.seed, 0x5F))
    curve: list[float] = []

    for _ in range(cfg.epochs):
        shuffler.shuffle(order)
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[lo : lo + cfg.batch_size]]
            grad = gradient(params, batch, hv).vec
            epoch_loss += loss(params, batch, hv)
            step_count += 1
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
            m_hat = m / (1.0 - cfg.beta1**step_count)
            v_hat = v / (1.0 - cfg.beta2**step_count)
            params.vec -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        curve.append(epoch_loss)
    return params, curve


def bc_act(params: BcParams, obs) -> Action:
    """Clamp the network output into an Action; locks engaged, low gear."""
    if obs.depth is None:
        raise DataError("behavior-cloning controller requires a depth image")
    out = forward(params, preprocess(obs.depth))
    return Action(v=float(out[0]), omega=float(out[1]), d=(True, True), s=True)


class BcController:
    """Harness-facing wrapper for a trained policy."""

    needs_depth = True

    def __init__(self, params: BcParams, label: str = "BC"):
        self.params = params
        self.id = label

    def reset(self) -> None:
        pass

    def act(self, obs) -> Action:
        return bc_act(self.params, obs)


_MAGIC = b"VWBC1"


def save_bc_params(params: BcParams, path) -> None:
    """Binary format: magic, shape header, then raw little-endian float64."""
    spec = params.spec
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", spec.input_side))
        f.write(struct.pack("<Q", len(spec.conv)))
        for c in spec.conv:
            f.write(struct.pack("<QQQ", c.out_ch, c.kernel, c.stride))
        f.write(struct.pack("<Q", len(spec.fc)))
        for width in spec.fc:
            f.write(struct.pack("<Q", width))
        f.write(struct.pack("<Q", params.vec.size))
        f.write(params.vec.astype("<f8").tobytes())


def load_bc_params(path) -> BcParams:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise DataError(f"{path}: bad magic, not a policy parameter file")
        (input_side,) = struct.unpack("<Q", f.read(8))
        (n_conv,) = struct.unpack("<Q", f.read(8))
        conv = tuple(
            ConvSpec(*struct.unpack("<QQQ", f.read(24))) for _ in range(n_conv)
        )
        (n_fc,) = struct.unpack("<Q", f.read(8))
        fc = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(n_fc))
        (size,) = struct.unpack("<Q", f.read(8))
        vec = np.frombuffer(f.read(8 * size), dtype="<f8").astype(np.float64)
    spec = NetworkSpec(input_side=input_side, conv=conv, fc=fc)
    if size != spec.n_params():
        raise DataError(f"{path}: parameter count mismatch")
    return BcParams(spec, vec)
