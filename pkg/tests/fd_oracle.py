"""Independent finite-difference oracle for the policy-network gradient.

Central differences (step h) of the behavior-cloning loss over EVERY
parameter coordinate.  A naive implementation would re-run the full
forward pass twice per coordinate (~half a million forwards); instead the
oracle exploits that a single-coordinate perturbation leaves all upstream
activations untouched:

* conv coordinates (few): plain re-forward of the whole network;
* fc weight/bias coordinates: the perturbation shifts exactly one
  pre-activation unit, so the next layer's pre-activations move by a
  rank-one update W_next[:, i] * (act'(z_i) - act(z_i)) -- an algebraic
  identity, not an approximation -- and only strictly-downstream layers
  are recomputed, batched over all perturbed coordinates.

The oracle implements its own forward pass; it never touches the analytic
gradient code it is checking.  A random subsample of coordinates is
cross-checked against fully naive central differences to validate the
incremental algebra itself.
"""

from __future__ import annotations

import numpy as np

from crawlsim.bclearn import BcParams


def oracle_forward(params: BcParams, x: np.ndarray):
    """Straightforward re-implementation of the network forward pass.

    Returns (output, fc pre-activations, fc inputs, all pre-activations).
    """
    spec = params.spec
    views = params.views()
    act = np.asarray(x, dtype=np.float64)[None, :, :]
    all_pre = []
    for i, c in enumerate(spec.conv):
        w = views[f"conv{i}_w"]
        b = views[f"conv{i}_b"]
        windows = np.lib.stride_tricks.sliding_window_view(act, (c.kernel, c.kernel), axis=(1, 2))
        windows = windows[:, :: c.stride, :: c.stride]  # (C, Ho, Wo, k, k)
        z = np.einsum("chwkl,ockl->ohw", windows, w) + b[:, None, None]
        all_pre.append(z)
        act = np.maximum(z, 0.0)
    a = act.reshape(-1)
    fc_pre = []
    fc_in = []
    n_fc = len(spec.fc)
    for i in range(n_fc):
        fc_in.append(a)
        z = views[f"fc{i}_w"] @ a + views[f"fc{i}_b"]
        fc_pre.append(z)
        all_pre.append(z)
        a = z if i == n_fc - 1 else np.maximum(z, 0.0)
    return a, fc_pre, fc_in, all_pre


def kink_margin(params: BcParams, batch) -> float:
    """Smallest |pre-activation| over the batch.

    Central differences are only a valid derivative estimate where the
    loss is locally smooth; a rectifier unit within ~h of zero breaks
    that.  Fixtures assert this margin is comfortably above the FD step.
    """
    margin = np.inf
    for x, _ in batch:
        _, _, _, all_pre = oracle_forward(params, x)
        for z in all_pre:
            margin = min(margin, float(np.abs(z).min()))
    return margin


def oracle_loss(params: BcParams, batch, hv) -> float:
    total = 0.0
    for x, a_demo in batch:
        out, *_ = oracle_forward(params, x)
        r = np.asarray(a_demo) - out
        total += float(np.dot(hv * r, r))
    return total


def _losses(outs: np.ndarray, demos: np.ndarray, hv: np.ndarray) -> np.ndarray:
    """outs (n_evals, n_samples, 2), demos (n_samples, 2) -> (n_evals,)"""
    r = demos[None, :, :] - outs
    return np.einsum("esk,k,esk->e", r, hv, r)


def fd_gradient(params: BcParams, batch, hv, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient over every coordinate."""
    spec = params.spec
    grad = np.empty(params.vec.size)
    hv = np.asarray(hv, dtype=np.float64)
    demos = np.stack([np.asarray(a, dtype=np.float64) for _, a in batch])
    n_samples = len(batch)
    n_fc = len(spec.fc)

    traces = [oracle_forward(params, x) for x, _ in batch]
    fc_pre = [t[1] for t in traces]
    fc_in = [t[2] for t in traces]
    views = params.views()

    def downstream(cur: np.ndarray, first_layer: int) -> np.ndarray:
        """Recompute from pre-activations of first_layer to the output.

        cur has shape (n_evals, n_samples, width(first_layer)); all layers
        before the last use the rectifier, the last is linear.
        """
        e, s, d = cur.shape
        flat = cur.reshape(e * s, d)
        layer = first_layer
        while layer < n_fc - 1:
            a = np.maximum(flat, 0.0)
            flat = a @ views[f"fc{layer + 1}_w"].T + views[f"fc{layer + 1}_b"]
            layer += 1
        return flat.reshape(e, s, -1)

    for name, shape, offset in spec.layout():
        size = int(np.prod(shape))
        if name.startswith("conv"):
            for k in range(size):
                i = offset + k
                pp = params.copy()
                pp.vec[i] += h
                lp = oracle_loss(pp, batch, hv)
                pp.vec[i] -= 2 * h
                lm = oracle_loss(pp, batch, hv)
                grad[i] = (lp - lm) / (2.0 * h)
            continue

        layer = int(name[2:].split("_")[0])
        is_bias = name.endswith("_b")
        is_last = layer == n_fc - 1
        n_out = spec.fc[layer]
        n_in = fc_in[0][layer].size

        for i in range(n_out):
            if is_bias:
                dz = np.array([[h] * n_samples, [-h] * n_samples])  # (2, s)
            else:
                a_in = np.stack([fc_in[s][layer] for s in range(n_samples)])  # (s, n_in)
                dz = np.concatenate([h * a_in.T, -h * a_in.T])  # (2*n_in, s)
            n_evals = dz.shape[0]

            z_i = np.array([fc_pre[s][layer][i] for s in range(n_samples)])  # (s,)
            z_new = z_i[None, :] + dz  # (e, s)
            if is_last:
                base = np.stack([fc_pre[s][n_fc - 1] for s in range(n_samples)])
                outs = np.broadcast_to(base, (n_evals,) + base.shape).copy()
                outs[:, :, i] = z_new
            else:
                da = np.maximum(z_new, 0.0) - np.maximum(z_i, 0.0)[None, :]  # (e, s)
                z_next = np.stack([fc_pre[s][layer + 1] for s in range(n_samples)])
                col = views[f"fc{layer + 1}_w"][:, i]
                cur = z_next[None, :, :] + da[:, :, None] * col[None, None, :]
                outs = downstream(cur, layer + 1)

            fd = _losses(outs, demos, hv)
            half = n_evals // 2
            fd = (fd[:half] - fd[half:]) / (2.0 * h)
            if is_bias:
                grad[offset + i] = fd[0]
            else:
                grad[offset + i * n_in : offset + (i + 1) * n_in] = fd
    return grad


def fd_gradient_naive(params: BcParams, batch, hv, coords, h: float = 1e-6) -> np.ndarray:
    """Fully naive central differences at selected coordinates."""
    hv = np.asarray(hv, dtype=np.float64)
    out = np.empty(len(coords))
    for k, i in enumerate(coords):
        pp = params.copy()
        pp.vec[i] += h
        lp = oracle_loss(pp, batch, hv)
        pp.vec[i] -= 2 * h
        lm = oracle_loss(pp, batch, hv)
        out[k] = (lp - lm) / (2.0 * h)
    return out
