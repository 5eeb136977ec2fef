"""NumPy kernels: the portable fallback for the compiled core.

Both backends implement the same two per-slot kernels; see ``_core.pyx`` for
the compiled versions and ``benchmarks/bench_backends.py`` for the speed
comparison.  Results agree to floating-point tolerance, not bitwise.
Batched training math intentionally stays on NumPy/BLAS in both backends.
"""

import numpy as np


def link_grid(oru_xy, user_xy, excess_db, owner, power_mw,
              intercept_db, slope_db, noise_mw, rbg_bw_hz, csi_clamp):
    """Per-slot channel statistics for the whole (O-RU, RBG) grid.

    oru_xy: (B, 2) site positions; user_xy: (U, 2); excess_db: (B, U) excess
    attenuation (shadowing plus any fast-fading term, dB); owner: (B, R) user
    ids; power_mw: (B, R) transmit powers.  Distances are clamped at 1 m.
    Returns (gain (B, U), csi (B, R), sinr (B, R), capacity_bps (B, R)).
    Co-channel interference is summed over the same RBG index at other O-RUs.
    """
    num_orus = oru_xy.shape[0]
    diff = oru_xy[:, None, :] - user_xy[None, :, :]
    dist_m = np.sqrt((diff * diff).sum(axis=2))
    dist_km = np.maximum(dist_m, 1.0) / 1000.0
    loss_db = intercept_db + slope_db * np.log10(dist_km) + excess_db
    gain = 10.0 ** (-loss_db / 10.0)

    # gain_to_owner[src, b, r] = gain from O-RU src to the owner of (b, r)
    gain_to_owner = gain[:, owner]
    diag = np.arange(num_orus)
    rx = gain_to_owner * power_mw[:, None, :]
    own_rx = rx[diag, diag, :].copy()
    serve_gain = gain_to_owner[diag, diag, :].copy()
    # sum interference with the own term masked out (not subtracted) so tiny
    # interference next to a dominant serving link keeps full precision
    rx[diag, diag, :] = 0.0
    interference = rx.sum(axis=0)
    sinr = own_rx / (interference + noise_mw)
    capacity_bps = rbg_bw_hz * np.log2(1.0 + sinr)

    cross_gain = gain_to_owner.copy()
    cross_gain[diag, diag, :] = 0.0
    other_gain = cross_gain.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        csi = np.log2(1.0 + other_gain / serve_gain)
    csi = np.where(np.isfinite(csi), csi, csi_clamp)
    csi = np.minimum(csi, csi_clamp)
    return gain, csi, sinr, capacity_bps


def actor_step(weights, biases, x, head_count, head_size, uniforms):
    """One policy inference: forward pass, per-head softmax, pick one option.

    ``uniforms`` is an (head_count,) array of U[0,1) draws for inverse-CDF
    sampling, or None for the greedy choice (ties to the lowest index).
    Returns (indices (head_count,) int64, joint log-probability).
    """
    h = np.asarray(x, dtype=np.float64)
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    logits = h.reshape(head_count, head_size)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    if uniforms is None:
        idx = np.argmax(probs, axis=1).astype(np.int64)
    else:
        cdf = np.cumsum(probs, axis=1)
        idx = np.minimum((cdf < np.asarray(uniforms)[:, None]).sum(axis=1),
                         head_size - 1).astype(np.int64)
    log_prob = float(np.log(probs[np.arange(head_count), idx]).sum())
    return idx, log_prob
