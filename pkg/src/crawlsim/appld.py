"""Demonstration-driven parameter adaptation for the rule-based controller
(the APPLD pipeline: segment, fit per segment, classify, select online).

A teleoperated demonstration is split into behaviorally cohesive segments
by binary changepoint detection on the commanded (v, omega) series.  For
each segment, black-box optimization fits the rule-based controller's
parameter vector so that replaying the controller over the segment's
observations reproduces the demonstrated commands (the controller is
treated strictly as a black box).  A softmax classifier learns to map
sensor features to segment ids, and at run time a mode filter over its
recent per-frame predictions selects which parameter set drives the
controller.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import cma
from .controllers import (
    FIT_PARAM_NAMES,
    FsmState,
    Observation,
    RbParams,
    rb_act,
)
from .errors import CrawlsimError, DataError, ParameterError
from .render import MAX_RANGE
from .rng import derive_seed
from .vehicle import Action, GroundSpeed

MIN_SEG_LEN = 20  # frames
SPLIT_PENALTY = 4.0
MODE_FILTER_WINDOW = 10  # frames

# box constraints for fitting RbParams; defaults all lie inside
DEFAULT_BOUNDS: dict[str, tuple[float, float]] = {
    "v_nominal": (0.05, 1.0),
    "v_boost": (0.05, 1.0),
    "t_stuck": (0.5, 5.0),
    "t_ramp_fail": (0.5, 5.0),
    "t_backup": (0.5, 5.0),
    "v_backup": (0.05, 1.0),
    "steer_recover": (0.05, 0.35),
    "t_steer": (0.5, 5.0),
    "stuck_speed_eps": (0.005, 0.1),
}

FEATURE_DIM = 71  # 8x8 pooled depth + 4 wheel speeds + (dx, dy, clearance)


class LibraryError(CrawlsimError, KeyError):
    """Context id missing from the parameter library."""


@dataclass(frozen=True)
class Changepoints:
    """Segment boundaries: taus are the 0-based start indices of segments
    2..K; segment k (1-based) covers frames [tau_{k-1}, tau_k) with the
    implicit tau_0 = 0 and tau_K = n_frames."""

    n_frames: int
    taus: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.taus) + 1

    def segments(self) -> list[tuple[int, int]]:
        edges = (0, *self.taus, self.n_frames)
        return list(zip(edges[:-1], edges[1:]))

    def labels(self) -> np.ndarray:
        """Per-frame context id, 1..K."""
        out = np.empty(self.n_frames, dtype=np.int64)
        for k, (lo, hi) in enumerate(self.segments(), start=1):
            out[lo:hi] = k
        return out


def _action_series(demo) -> np.ndarray:
    if hasattr(demo, "frames"):
        return np.array([[f.v, f.omega] for f in demo.frames], dtype=np.float64)
    return np.asarray(demo, dtype=np.float64)


def segment(
    demo, min_seg_len: int = MIN_SEG_LEN, penalty: float = SPLIT_PENALTY
) -> Changepoints:
    """Binary segmentation of the demonstrated (v, omega) series.

    Recursively splits at the index minimizing total within-segment squared
    deviation from segment means.  A split is kept when the cost reduction
    exceeds a BIC-style threshold penalty * sigma2 * channels * ln(N),
    where sigma2 is the mean squared deviation per scalar in the segment
    being split (the variance scaling makes the criterion unit-free; an
    unscaled threshold would refuse even noiseless mean shifts).
    """
    series = _action_series(demo)
    n, channels = series.shape
    if n < 2 * min_seg_len:
        raise DataError(f"demonstration too short to segment ({n} frames)")

    s1 = np.vstack([np.zeros(channels), np.cumsum(series, axis=0)])
    s2 = np.vstack([np.zeros(channels), np.cumsum(series * series, axis=0)])

    def sse(lo: int, hi: int) -> float:
        length = hi - lo
        sums = s1[hi] - s1[lo]
        sqs = s2[hi] - s2[lo]
        return float(np.sum(sqs - sums * sums / length))

    log_n_total = math.log(n)
    taus: list[int] = []

    def recurse(lo: int, hi: int) -> None:
        length = hi - lo
        if length < 2 * min_seg_len:
            return
        splits = np.arange(lo + min_seg_len, hi - min_seg_len + 1)
        left_n = (splits - lo).astype(np.float64)
        right_n = (hi - splits).astype(np.float64)
        lsum = s1[splits] - s1[lo]
        lsq = s2[splits] - s2[lo]
        rsum = s1[hi] - s1[splits]
        rsq = s2[hi] - s2[splits]
        cost = np.sum(lsq - lsum * lsum / left_n[:, None], axis=1) + np.sum(
            rsq - rsum * rsum / right_n[:, None], axis=1
        )
        best = int(np.argmin(cost))  # ties resolve to the smallest index
        total = sse(lo, hi)
        reduction = total - float(cost[best])
        sigma2 = total / (length * channels)
        threshold = max(penalty * sigma2 * channels * log_n_total, 1e-12)
        if reduction > threshold:
            split = int(splits[best])
            recurse(lo, split)
            taus.append(split)
            recurse(split, hi)

    recurse(0, n)
    return Changepoints(n_frames=n, taus=tuple(sorted(taus)))


@dataclass(frozen=True)
class ParamLibrary:
    """Mapping from context id (1..K) to fitted controller parameters."""

    entries: dict[int, RbParams]

    def __post_init__(self):
        ids = sorted(self.entries)
        if ids != list(range(1, len(ids) + 1)):
            raise ParameterError(f"library ids must be exactly 1..K, got {ids}")

    def __getitem__(self, context: int) -> RbParams:
        try:
            return self.entries[context]
        except KeyError:
            raise LibraryError(f"no parameters for context {context}") from None


def frames_to_observations(frames) -> list[Observation]:
    """Demonstration frames -> controller observations (no depth needed)."""
    return [
        Observation(
            depth=None,
            w=tuple(f.w),
            g=GroundSpeed(f.g[0], f.g[1], f.g[2], f.g[3], f.g[4]),
            t=f.t,
        )
        for f in frames
    ]


def replay_loss(observations, demo_actions, params: RbParams, h=(1.0, 1.0)) -> float:
    """H-weighted squared error of the controller replayed over a segment.

    The FSM is reset at the segment start and fed the recorded
    observations in order; only the emitted (v, omega) are compared.
    """
    hv, hw = float(h[0]), float(h[1])
    fsm = FsmState(mode_entry_time=observations[0].t)
    total = 0.0
    for obs, (v_demo, w_demo) in zip(observations, demo_actions):
        action, fsm = rb_act(obs, fsm, params)
        dv = v_demo - action.v
        dw = w_demo - action.omega
        total += hv * dv * dv + hw * dw * dw
    return total


def _vec_to_params(vec: np.ndarray) -> RbParams:
    values = dict(zip(FIT_PARAM_NAMES, (float(v) for v in vec)))
    # candidates may violate the boost >= nominal invariant; repair upward
    values["v_boost"] = max(values["v_boost"], values["v_nominal"])
    return RbParams(**values)


@dataclass
class FitResult:
    params: RbParams
    loss: float
    evaluations: int


def fit_segment_params(
    frames,
    bounds: dict[str, tuple[float, float]] | None = None,
    budget: int = 2000,
    seed: int = 0,
    h=(1.0, 1.0),
) -> FitResult:
    """Fit RbParams to one demonstration segment by CMA-ES.

    The controller is evaluated purely through replay_loss (black box);
    the returned parameters are the best evaluated candidate.
    """
    if len(frames) == 0:
        raise DataError("cannot fit parameters to an empty segment")
    bounds = dict(DEFAULT_BOUNDS, **(bounds or {}))
    lo = np.array([bounds[k][0] for k in FIT_PARAM_NAMES])
    hi = np.array([bounds[k][1] for k in FIT_PARAM_NAMES])
    if np.any(hi <= lo):
        raise ParameterError("invalid RbParams bounds")
    observations = frames_to_observations(frames)
    actions = [(f.v, f.omega) for f in frames]

    def objective(vec: np.ndarray) -> float:
        return replay_loss(observations, actions, _vec_to_params(vec), h)

    result = cma.minimize(objective, lo, hi, budget=budget, seed=seed)
    return FitResult(
        params=_vec_to_params(result.x), loss=result.loss, evaluations=result.evaluations
    )


def featurize(depth_image, w, g: GroundSpeed) -> np.ndarray:
    """Sensor frame -> 71-dim classifier feature: 8x8 area-pooled depth
    (normalized by camera range), wheel speeds, planar ground speeds and
    clearance."""
    data = depth_image.data if hasattr(depth_image, "data") else np.asarray(depth_image)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] % 8 != 0:
        raise DataError(f"classifier depth must be square with side % 8 == 0, got {data.shape}")
    block = data.shape[0] // 8
    pooled = data.reshape(8, block, 8, block).mean(axis=(1, 3)) / MAX_RANGE
    return np.concatenate([pooled.reshape(-1), np.asarray(w, dtype=np.float64), [g.dx, g.dy, g.z_clearance]])


def featurize_observation(obs: Observation) -> np.ndarray:
    if obs.depth is None:
        raise DataError("context features require a depth image")
    return featurize(obs.depth, obs.w, obs.g)


@dataclass
class ContextModel:
    """Multinomial logistic context classifier plus mode-filter length.

    Features are standardized with the training statistics; weights has
    shape (K, FEATURE_DIM).
    """

    weights: np.ndarray
    bias: np.ndarray
    feature_mean: np.ndarray
    feature_std: np.ndarray
    p: int = MODE_FILTER_WINDOW

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.bias.size:
            raise ParameterError("inconsistent classifier shapes")
        if self.p < 1 or self.weights.shape[0] < 1:
            raise ParameterError("need K >= 1 and p >= 1")

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    def predict_frame(self, feature: np.ndarray) -> int:
        """Per-frame context id in 1..K (argmax of the linear scores)."""
        x = (np.asarray(feature, dtype=np.float64) - self.feature_mean) / self.feature_std
        scores = self.weights @ x + self.bias
        return int(np.argmax(scores)) + 1


def train_context_classifier(
    features,
    labels,
    p: int = MODE_FILTER_WINDOW,
    iterations: int = 500,
    learning_rate: float = 0.1,
    min_class_count: int = MIN_SEG_LEN,
) -> ContextModel:
    """Full-batch gradient ascent on the mean softmax log-likelihood.

    Deterministic: weights start at zero and features are standardized
    per-feature with the training statistics.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DataError("features/labels shape mismatch")
    k = int(y.max())
    if sorted(set(y.tolist())) != list(range(1, k + 1)):
        raise DataError("labels must cover 1..K")
    counts = np.bincount(y, minlength=k + 1)[1:]
    if np.any(counts < min_class_count):
        raise DataError(
            f"every class needs >= {min_class_count} examples, got {counts.tolist()}"
        )

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    xs = (x - mean) / std
    onehot = np.zeros((y.size, k))
    onehot[np.arange(y.size), y - 1] = 1.0

    w = np.zeros((k, xs.shape[1]))
    b = np.zeros(k)
    n = float(y.size)
    for _ in range(iterations):
        scores = xs @ w.T + b
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        probs = e / e.sum(axis=1, keepdims=True)
        diff = onehot - probs
        w += learning_rate * (diff.T @ xs) / n
        b += learning_rate * diff.mean(axis=0)
    return ContextModel(weights=w, bias=b, feature_mean=mean, feature_std=std, p=p)


def mode_with_recency(window_preds) -> int:
    """Mode of the window; ties go to the candidate whose latest occurrence
    is most recent (in particular, to the newest frame's prediction when it
    is among the tied)."""
    preds = list(window_preds)
    if not preds:
        raise DataError("mode filter needs a non-empty window")
    counts: dict[int, int] = {}
    last_seen: dict[int, int] = {}
    for i, c in enumerate(preds):
        counts[c] = counts.get(c, 0) + 1
        last_seen[c] = i
    best_count = max(counts.values())
    candidates = [c for c, cnt in counts.items() if cnt == best_count]
    return max(candidates, key=lambda c: last_seen[c])


def predict_context(model: ContextModel, window_features) -> int:
    """Mode-filtered context over the most recent <= p frame features."""
    feats = list(window_features)[-model.p :]
    if not feats:
        raise DataError("predict_context needs at least one frame")
    return mode_with_recency([model.predict_frame(f) for f in feats])


def appld_act(
    obs: Observation,
    model: ContextModel,
    library: ParamLibrary,
    fsm: FsmState,
    window_features,
) -> tuple[Action, FsmState, int]:
    """Select the context's parameters and delegate to the rule-based
    controller.  FsmState carries over across context switches (mode and
    timers preserved)."""
    context = predict_context(model, window_features)
    action, fsm2 = rb_act(obs, fsm, library[context])
    return action, fsm2, context


class ApplController:
    """Harness-facing wrapper: rolling feature window + FSM state."""

    needs_depth = True

    def __init__(self, model: ContextModel, library: ParamLibrary, label: str = "APPLD"):
        self.model = model
        self.library = library
        self.id = label
        self.reset()

    def reset(self) -> None:
        self._window: list[np.ndarray] = []
        self._fsm = FsmState()
        self._started = False

    def act(self, obs: Observation) -> Action:
        if not self._started:
            self._fsm = FsmState(mode_entry_time=obs.t)
            self._started = True
        self._window.append(featurize_observation(obs))
        if len(self._window) > self.model.p:
            self._window.pop(0)
        action, self._fsm, _ = appld_act(
            obs, self.model, self.library, self._fsm, self._window
        )
        return action


def fit_library(
    demo,
    changepoints: Changepoints,
    budget: int = 2000,
    seed: int = 0,
    h=(1.0, 1.0),
) -> tuple[ParamLibrary, list[FitResult]]:
    """Fit one parameter vector per segment (Algorithm: loop over contexts)."""
    results = []
    entries = {}
    for k, (lo, hi) in enumerate(changepoints.segments(), start=1):
        fit = fit_segment_params(
            demo.frames[lo:hi], budget=budget, seed=derive_seed(seed, k), h=h
        )
        entries[k] = fit.params
        results.append(fit)
    return ParamLibrary(entries), results


# --- serialization ---------------------------------------------------------

_CTX_MAGIC = b"VWCX1"


def save_library(library: ParamLibrary, path) -> None:
    data = {
        str(k): {name: getattr(v, name) for name in FIT_PARAM_NAMES}
        for k, v in sorted(library.entries.items())
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def load_library(path) -> ParamLibrary:
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    return ParamLibrary({int(k): RbParams(**v) for k, v in raw.items()})


def save_context_model(model: ContextModel, path) -> None:
    """Header (JSON) + VWCX1 binary blob of the float64 arrays."""
    path = str(path)
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(
            {"k": model.k, "features": int(model.weights.shape[1]), "p": model.p},
            f,
            indent=2,
        )
        f.write("\n")
    with open(path, "wb") as f:
        f.write(_CTX_MAGIC)
        f.write(struct.pack("<QQQ", model.k, model.weights.shape[1], model.p))
        for arr in (model.weights, model.bias, model.feature_mean, model.feature_std):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_context_model(path) -> ContextModel:
    with open(str(path), "rb") as f:
        if f.read(len(_CTX_MAGIC)) != _CTX_MAGIC:
            raise DataError(f"{path}: bad magic, not a context model")
        k, nf, p = struct.unpack("<QQQ", f.read(24))
        data = np.frombuffer(f.read(), dtype="<f8")
    need = k * nf + k + nf + nf
    if data.size != need:
        raise DataError(f"{path}: context model payload size mismatch")
    weights = data[: k * nf].reshape(k, nf).copy()
    rest = data[k * nf :]
    bias = rest[:k].copy()
    mean = rest[k : k + nf].copy()
    std = rest[k + nf :].copy()
    return ContextModel(weights, bias, mean, std, p=int(p))
