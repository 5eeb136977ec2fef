# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the hot per-slot loops.

Two kernels carry the rollout cost: the link grid (channel, SINR, capacity
for every (O-RU, RBG)) and the fused policy step (dense forward, per-head
softmax, sample or argmax in one call).  Mirrors ``pure.py``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log2, log10, pow, sqrt, tanh

cnp.import_array()

DEF MAX_WIDTH = 4096


def link_grid(oru_xy, user_xy, excess_db, owner, power_mw,
              double intercept_db, double slope_db, double noise_mw,
              double rbg_bw_hz, double csi_clamp):
    """Per-slot channel statistics for the whole (O-RU, RBG) grid.

    See ``pure.link_grid`` for the full contract.
    """
    cdef double[:, ::1] sitev = np.ascontiguousarray(oru_xy, dtype=np.float64)
    cdef double[:, ::1] posv = np.ascontiguousarray(user_xy, dtype=np.float64)
    cdef double[:, ::1] exv = np.ascontiguousarray(excess_db, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] ownv = np.ascontiguousarray(owner, dtype=np.int64)
    cdef double[:, ::1] pv = np.ascontiguousarray(power_mw, dtype=np.float64)
    cdef Py_ssize_t num_orus = sitev.shape[0], num_users = posv.shape[0]
    cdef Py_ssize_t rbgs = ownv.shape[1]

    gain = np.empty((num_orus, num_users), dtype=np.float64)
    csi = np.empty((num_orus, rbgs), dtype=np.float64)
    sinr = np.empty((num_orus, rbgs), dtype=np.float64)
    cap = np.empty((num_orus, rbgs), dtype=np.float64)
    cdef double[:, ::1] gv = gain
    cdef double[:, ::1] cv = csi
    cdef double[:, ::1] sv = sinr
    cdef double[:, ::1] capv = cap

    cdef Py_ssize_t b, u, r, src
    cdef double dx, dy, dist_km, loss_db, serve, interference, other, ratio, value
    cdef cnp.int64_t own_user

    for b in range(num_orus):
        for u in range(num_users):
            dx = sitev[b, 0] - posv[u, 0]
            dy = sitev[b, 1] - posv[u, 1]
            dist_km = sqrt(dx * dx + dy * dy)
            if dist_km < 1.0:
                dist_km = 1.0
            dist_km = dist_km / 1000.0
            loss_db = intercept_db + slope_db * log10(dist_km) + exv[b, u]
            gv[b, u] = pow(10.0, -loss_db / 10.0)

    for b in range(num_orus):
        for r in range(rbgs):
            own_user = ownv[b, r]
            serve = gv[b, own_user] * pv[b, r]
            interference = 0.0
            other = 0.0
            for src in range(num_orus):
                if src == b:
                    continue
                interference += gv[src, own_user] * pv[src, r]
                other += gv[src, own_user]
            value = serve / (interference + noise_mw)
            sv[b, r] = value
            capv[b, r] = rbg_bw_hz * log2(1.0 + value)
            if gv[b, own_user] > 0.0:
                ratio = other / gv[b, own_user]
                value = log2(1.0 + ratio)
                if value > csi_clamp:
                    value = csi_clamp
            else:
                value = csi_clamp
            cv[b, r] = value
    return gain, csi, sinr, cap


def actor_step(weights, biases, x, Py_ssize_t head_count, Py_ssize_t head_size,
               uniforms):
    """One policy inference: forward pass, per-head softmax, pick one option.

    See ``pure.actor_step`` for the full contract.
    """
    cdef Py_ssize_t num_layers = len(weights)
    cdef double[::1] buf_a = np.empty(MAX_WIDTH, dtype=np.float64)
    cdef double[::1] buf_b = np.empty(MAX_WIDTH, dtype=np.float64)
    cdef double[::1] cur = buf_a
    cdef double[::1] nxt = buf_b
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] wv
    cdef double[::1] bv
    cdef Py_ssize_t layer, i, o, n_in, n_out
    cdef double acc, xi

    n_in = xv.shape[0]
    if n_in > MAX_WIDTH:
        raise ValueError("input wider than the compiled kernel buffer")
    for i in range(n_in):
        cur[i] = xv[i]

    for layer in range(num_layers):
        wv = np.ascontiguousarray(weights[layer], dtype=np.float64)
        bv = np.ascontiguousarray(biases[layer], dtype=np.float64)
        if wv.shape[0] != n_in:
            raise ValueError("layer input width mismatch")
        n_out = wv.shape[1]
        if n_out > MAX_WIDTH:
            raise ValueError("layer wider than the compiled kernel buffer")
        for o in range(n_out):
            nxt[o] = bv[o]
        for i in range(n_in):
            xi = cur[i]
            for o in range(n_out):
                nxt[o] += xi * wv[i, o]
        if layer < num_layers - 1:
            for o in range(n_out):
                nxt[o] = tanh(nxt[o])
        cur, nxt = nxt, cur
        n_in = n_out

    if n_in != head_count * head_size:
        raise ValueError("logit width does not match the head layout")

    indices = np.empty(head_count, dtype=np.int64)
    cdef cnp.int64_t[::1] idxv = indices
    cdef double[::1] uv
    cdef bint greedy = uniforms is None
    if not greedy:
        uv = np.ascontiguousarray(uniforms, dtype=np.float64)
        if uv.shape[0] != head_count:
            raise ValueError("need one uniform draw per head")

    cdef Py_ssize_t h, k, best, lo
    cdef double zmax, total, u, prob, log_prob = 0.0
    cdef double[::1] probs = nxt  # reuse the scratch buffer per head

    for h in range(head_count):
        lo = h * head_size
        zmax = cur[lo]
        for k in range(1, head_size):
            if cur[lo + k] > zmax:
                zmax = cur[lo + k]
        total = 0.0
        for k in range(head_size):
            probs[k] = exp(cur[lo + k] - zmax)
            total += probs[k]
        if greedy:
            best = 0
            for k in range(1, head_size):
                if probs[k] > probs[best]:
                    best = k
        else:
            u = uv[h]
            best = head_size - 1
            acc = 0.0
            for k in range(head_size):
                acc += probs[k] / total
                if acc >= u:
                    best = k
                    break
        idxv[h] = best
        prob = probs[best] / total
        log_prob += log(prob)
    return indices, log_prob
