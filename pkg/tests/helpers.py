"""Shared builders for crafting simulator states in tests."""

import math

import numpy as np

from xsched.env import LinkGrid, NetworkState, oru_positions, power_set_for


def zero_links(cfg):
    B, U, R = cfg.num_orus, cfg.num_users, cfg.rbgs_per_oru
    return LinkGrid(
        gain=np.zeros((B, U)),
        csi=np.zeros((B, R)),
        sinr=np.zeros((B, R)),
        capacity_bps=np.zeros((B, R)),
        arrivals_bits=np.zeros((B, R), dtype=np.int64),
        sent_bits=np.zeros((B, R), dtype=np.int64),
        leftover_bits=np.zeros((B, R), dtype=np.int64),
        rate_bps=np.zeros((B, R)),
    )


def craft_state(cfg, pos=None, shadow_db=None, owner=None, power_idx=None,
                speed=None, direction=None, d_e=3e6, mean_speed=10.0):
    """NetworkState with hand-picked fields; unspecified fields are benign defaults."""
    B, U, R = cfg.num_orus, cfg.num_users, cfg.rbgs_per_oru
    power_set = power_set_for(cfg)
    oru_xy = oru_positions(cfg)
    serving = np.repeat(np.arange(B, dtype=np.int64), U // B)
    if pos is None:
        pos = oru_xy[serving] + np.array([200.0, 0.0])
    if shadow_db is None:
        shadow_db = np.zeros((B, U))
    if owner is None:
        owner = np.arange(B, dtype=np.int64)[:, None] * (U // B) \
            + np.arange(R, dtype=np.int64)[None, :] % (U // B)
    if power_idx is None:
        power_idx = np.full((B, R), power_set.num_levels - 1, dtype=np.int64)
    if speed is None:
        speed = np.full(U, mean_speed)
    if direction is None:
        direction = np.zeros(U)
    return NetworkState(
        cfg=cfg, power_set=power_set, t=0, d_e=d_e, mean_speed=mean_speed,
        oru_xy=oru_xy, pos=np.asarray(pos, dtype=float),
        speed=np.asarray(speed, dtype=float),
        direction=np.asarray(direction, dtype=float),
        serving=serving, owner=np.asarray(owner, dtype=np.int64),
        power_idx=np.asarray(power_idx, dtype=np.int64),
        shadow_db=np.asarray(shadow_db, dtype=float),
        links=zero_links(cfg),
    )


def unit_gain_shadow(cfg, pos, oru_xy):
    """Shadowing that cancels pathloss, forcing every linear gain to 1."""
    B, U = cfg.num_orus, cfg.num_users
    shadow = np.empty((B, U))
    for b in range(B):
        for u in range(U):
            dist_km = max(math.hypot(pos[u][0] - oru_xy[b][0],
                                     pos[u][1] - oru_xy[b][1]), 1.0) / 1000.0
            shadow[b, u] = -(cfg.pathloss_intercept_db
                             + cfg.pathloss_slope_db * math.log10(dist_km))
    return shadow
