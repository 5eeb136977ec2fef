"""Seeded discrete-time simulator of the multi-cell downlink system.

One episode = ``slots_per_episode`` slots.  Per slot: the standing allocation
transmits (Poisson arrivals, pathloss/shadowing channel, co-channel SINR,
Shannon capacity, discard of traffic beyond capacity), then users move.
All randomness flows through an explicit ``numpy.random.Generator`` so that
identical (config, seed) pairs give bit-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels as kernels
from .config import NetworkConfig
from .errors import ConfigError, InvariantError

TWO_PI = 2.0 * math.pi

# Spread of per-user speeds around the episode mean (m/s).
SPEED_SPREAD_MPS = 5.0


@dataclass(frozen=True)
class PowerSet:
    """Feasible transmit power levels in mW: 0 plus a geometric ladder."""

    levels_mw: np.ndarray

    @property
    def num_levels(self) -> int:
        return len(self.levels_mw)

    @property
    def ratio(self) -> float:
        """Common ratio between consecutive nonzero levels."""
        if self.num_levels <= 2:
            return 1.0
        return float(self.levels_mw[2] / self.levels_mw[1])


def build_power_set(p_min_mw: float, p_max_mw: float, num_levels: int) -> PowerSet:
    """Quantize [p_min, p_max] into num_levels powers: {0} plus a geometric grid.

    The nonzero levels are p_min * ratio**k for k = 0..num_levels-2 with
    ratio = (p_max/p_min)**(1/(num_levels-2)), so level 1 is p_min and the top
    level is p_max.
    """
    if p_min_mw <= 0.0:
        raise ValueError("p_min_mw must be positive")
    if p_max_mw < p_min_mw:
        raise ValueError("p_max_mw must be >= p_min_mw")
    if num_levels < 2:
        raise ValueError("num_levels must be >= 2")
    if num_levels == 2:
        if p_max_mw != p_min_mw:
            raise ValueError("num_levels=2 only supports p_min_mw == p_max_mw")
        levels = np.array([0.0, p_min_mw])
    else:
        ratio = (p_max_mw / p_min_mw) ** (1.0 / (num_levels - 2))
        ladder = p_min_mw * ratio ** np.arange(num_levels - 1)
        ladder[-1] = p_max_mw  # pin the endpoint against rounding drift
        levels = np.concatenate(([0.0], ladder))
    return PowerSet(levels_mw=levels)


def power_set_for(cfg: NetworkConfig) -> PowerSet:
    return build_power_set(cfg.p_min_mw, cfg.p_max_mw, cfg.power_levels)


@dataclass
class Allocation:
    """Standing control decision: one owning user and one power level per (O-RU, RBG)."""

    owner: np.ndarray      # (B, R) int64, global user ids
    power_idx: np.ndarray  # (B, R) int64 indices into the PowerSet

    def validate(self, cfg: NetworkConfig, power_set: PowerSet) -> None:
        expected = (cfg.num_orus, cfg.rbgs_per_oru)
        if self.owner.shape != expected or self.power_idx.shape != expected:
            raise InvariantError(f"allocation grids must have shape {expected}")
        # any out-of-range or foreign user id lands on the wrong O-RU row
        oru_of_owner = self.owner // cfg.users_per_oru
        if (oru_of_owner != np.arange(cfg.num_orus)[:, None]).any():
            raise InvariantError("allocation assigns an RBG outside the O-RU's user pool")
        if ((self.power_idx < 0) | (self.power_idx >= power_set.num_levels)).any():
            raise InvariantError("allocation power index out of range")

    def copy(self) -> "Allocation":
        return Allocation(owner=self.owner.copy(), power_idx=self.power_idx.copy())


@dataclass
class LinkGrid:
    """Per-(O-RU, RBG) statistics of the most recent slot.

    Traffic quantities are integer bits so that the discard accounting is
    exact: arrivals_bits == sent_bits + leftover_bits always holds.
    rate_bps is the derived transmission rate sent_bits / slot_duration.
    """

    gain: np.ndarray            # (B, U) linear channel gains
    csi: np.ndarray             # (B, R) log-normalized interference-to-serving ratio
    sinr: np.ndarray            # (B, R) linear
    capacity_bps: np.ndarray    # (B, R)
    arrivals_bits: np.ndarray   # (B, R) int64
    sent_bits: np.ndarray       # (B, R) int64
    leftover_bits: np.ndarray   # (B, R) int64
    rate_bps: np.ndarray        # (B, R)


@dataclass
class NetworkState:
    """Full simulator state after ``t`` completed slots of one episode."""

    cfg: NetworkConfig
    power_set: PowerSet
    t: int
    d_e: float                  # episode mean arrival rate per RBG (bits/s)
    mean_speed: float           # episode mean user speed (m/s)
    oru_xy: np.ndarray          # (B, 2)
    pos: np.ndarray             # (U, 2)
    speed: np.ndarray           # (U,)
    direction: np.ndarray       # (U,) radians in [0, 2*pi)
    serving: np.ndarray         # (U,) serving O-RU per user (fixed within episode)
    owner: np.ndarray           # (B, R) current owners
    power_idx: np.ndarray       # (B, R) current power levels
    shadow_db: np.ndarray       # (B, U) per-episode shadowing
    links: LinkGrid

    @property
    def allocation(self) -> Allocation:
        return Allocation(owner=self.owner, power_idx=self.power_idx)


def oru_positions(cfg: NetworkConfig) -> np.ndarray:
    """O-RU sites on a square grid with inter_site_distance spacing."""
    cols = math.ceil(math.sqrt(cfg.num_orus))
    idx = np.arange(cfg.num_orus)
    xy = np.stack([(idx % cols), (idx // cols)], axis=1).astype(float)
    return xy * cfg.inter_site_distance_m


def deployment_box(cfg: NetworkConfig, oru_xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned closed-world box: O-RU hull plus the max placement radius."""
    margin = cfg.initial_distance_max_m
    lo = oru_xy.min(axis=0) - margin
    hi = oru_xy.max(axis=0) + margin
    return lo, hi


def connected_users(cfg: NetworkConfig, oru: int) -> np.ndarray:
    """User ids served by one O-RU (contiguous blocks, fixed for an episode)."""
    per = cfg.users_per_oru
    return np.arange(oru * per, (oru + 1) * per, dtype=np.int64)


def equal_rbg_owner(cfg: NetworkConfig) -> np.ndarray:
    """Round-robin split of each O-RU's RBGs over its connected users."""
    per = cfg.users_per_oru
    rbg = np.arange(cfg.rbgs_per_oru, dtype=np.int64)
    base = np.arange(cfg.num_orus, dtype=np.int64)[:, None] * per
    return base + rbg[None, :] % per


def equal_power_index(power_set: PowerSet) -> int:
    """Index of the level closest to the geometric midpoint of the nonzero range."""
    mid = math.sqrt(power_set.levels_mw[1] * power_set.levels_mw[-1])
    return int(np.argmin(np.abs(power_set.levels_mw - mid)))


def channel_gain(cfg: NetworkConfig, oru_xy, user_xy, shadow_db: float) -> float:
    """Linear gain of one O-RU-to-user link (distance clamped at 1 m)."""
    dist_m = max(float(np.hypot(user_xy[0] - oru_xy[0], user_xy[1] - oru_xy[1])), 1.0)
    loss_db = (cfg.pathloss_intercept_db
               + cfg.pathloss_slope_db * math.log10(dist_m / 1000.0)
               + shadow_db)
    return 10.0 ** (-loss_db / 10.0)


def draw_arrivals(rng: np.random.Generator, d_e: float, slot_duration_s: float,
                  shape: tuple[int, int]) -> np.ndarray:
    """Poisson traffic (integer bits) for every allocated (O-RU, RBG)."""
    if d_e < 0.0:
        raise ValueError("d_e must be >= 0")
    return rng.poisson(d_e * slot_duration_s, shape).astype(np.int64)


def _link_grid_stats(state: NetworkState, owner: np.ndarray, power_idx: np.ndarray,
                     excess_db: np.ndarray):
    cfg = state.cfg
    power_mw = state.power_set.levels_mw[power_idx]
    return kernels.link_grid(
        state.oru_xy, state.pos, excess_db, owner, power_mw,
        cfg.pathloss_intercept_db, cfg.pathloss_slope_db,
        cfg.noise_power_mw, cfg.bandwidth_per_rbg_hz, cfg.csi_clamp,
    )


def compute_csi(state: NetworkState) -> np.ndarray:
    """Log-normalized CSI per (O-RU, RBG) under the state's current allocation."""
    _, csi, _, _ = _link_grid_stats(state, state.owner, state.power_idx, state.shadow_db)
    return csi


def compute_sinr_capacity(state: NetworkState, power_set: PowerSet):
    """SINR and Shannon capacity per (O-RU, RBG) under the current allocation."""
    cfg = state.cfg
    power_mw = power_set.levels_mw[state.power_idx]
    _, _, sinr, cap = kernels.link_grid(
        state.oru_xy, state.pos, state.shadow_db, state.owner, power_mw,
        cfg.pathloss_intercept_db, cfg.pathloss_slope_db,
        cfg.noise_power_mw, cfg.bandwidth_per_rbg_hz, cfg.csi_clamp,
    )
    return sinr, cap


def _deliver(arrivals_bits: np.ndarray, capacity_bps: np.ndarray, slot_duration_s: float):
    """Discard rule: traffic beyond the slot's capacity (in whole bits) is dropped."""
    cap_bits = np.floor(capacity_bps * slot_duration_s).astype(np.int64)
    sent = np.minimum(arrivals_bits, cap_bits)
    leftover = arrivals_bits - sent
    rate_bps = sent / slot_duration_s
    return sent, leftover, rate_bps


def transmit(state: NetworkState):
    """Apply the discard rule to the state's current arrivals and capacities.

    Returns (rate_bps grid, leftover_bits grid, slot_throughput_bps).
    """
    sent, leftover, rate = _deliver(
        state.links.arrivals_bits, state.links.capacity_bps, state.cfg.slot_duration_s
    )
    return rate, leftover, float(rate.sum())


def _reflect(pos: np.ndarray, direction: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Fold positions back into the deployment box, mirroring headings at walls."""
    if not ((pos < lo) | (pos > hi)).any():  # common case: nobody hit a wall
        return pos, direction
    pos = pos.copy()
    direction = direction.copy()
    for axis in range(2):
        for _ in range(16):  # per-slot displacement is far below the box size
            below = pos[:, axis] < lo[axis]
            above = pos[:, axis] > hi[axis]
            if not (below.any() or above.any()):
                break
            pos[below, axis] = 2.0 * lo[axis] - pos[below, axis]
            pos[above, axis] = 2.0 * hi[axis] - pos[above, axis]
            bounced = below | above
            if axis == 0:
                direction[bounced] = math.pi - direction[bounced]
            else:
                direction[bounced] = -direction[bounced]
    return pos, np.mod(direction, TWO_PI)


def _advance_kinematics(cfg: NetworkConfig, pos, speed, direction, oru_xy,
                        rng: np.random.Generator):
    """Move users one slot along their headings, reflect, redraw directions.

    Both random draws happen every slot so the stream layout is fixed
    regardless of the turn outcomes.
    """
    step = speed * cfg.slot_duration_s
    new_pos = np.empty_like(pos)
    new_pos[:, 0] = pos[:, 0] + step * np.cos(direction)
    new_pos[:, 1] = pos[:, 1] + step * np.sin(direction)
    lo, hi = deployment_box(cfg, oru_xy)
    new_pos, direction = _reflect(new_pos, direction, lo, hi)

    change = rng.random(cfg.num_users) < cfg.direction_change_prob
    delta = rng.uniform(0.0, TWO_PI, cfg.num_users)
    direction = np.mod(np.where(change, direction + delta, direction), TWO_PI)
    return new_pos, direction


def step_mobility(state: NetworkState, rng: np.random.Generator) -> NetworkState:
    """Advance users along their headings for one slot, then redraw directions.

    Positions move by speed * slot_duration along the current heading and
    reflect at the deployment box.  Each user then keeps its heading with
    probability 1 - direction_change_prob, else turns by a uniform angle.
    """
    pos, direction = _advance_kinematics(state.cfg, state.pos, state.speed,
                                         state.direction, state.oru_xy, rng)
    return replace(state, pos=pos, direction=direction)


def reset_episode(cfg: NetworkConfig, d_e: float, mean_speed: float,
                  rng: np.random.Generator) -> NetworkState:
    """Fresh episode: placement, kinematics, shadowing, equal-split allocation.

    Users are split evenly across O-RUs and placed at a uniform distance in
    [initial_distance_min, initial_distance_max] of their serving site.  The
    initial allocation is the equal division (round-robin RBG ownership, the
    mid-ladder power level).  No traffic has flowed yet, so all traffic
    statistics in the link grid are zero.
    """
    cfg.validate()
    if d_e <= 0.0:
        raise ConfigError("d_e must be positive")
    if mean_speed <= 0.0:
        raise ConfigError("mean_speed must be positive")
    power_set = power_set_for(cfg)
    num_orus, num_users, rbgs = cfg.num_orus, cfg.num_users, cfg.rbgs_per_oru
    oru_xy = oru_positions(cfg)
    serving = np.repeat(np.arange(num_orus, dtype=np.int64), cfg.users_per_oru)

    radius = rng.uniform(cfg.initial_distance_min_m, cfg.initial_distance_max_m, num_users)
    angle = rng.uniform(0.0, TWO_PI, num_users)
    pos = oru_xy[serving] + np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)

    speed_lo = max(cfg.speed_min_mps, mean_speed - SPEED_SPREAD_MPS)
    speed_hi = min(cfg.speed_max_mps, mean_speed + SPEED_SPREAD_MPS)
    speed = rng.uniform(speed_lo, speed_hi, num_users)
    direction = rng.uniform(0.0, TWO_PI, num_users)
    shadow_db = rng.normal(0.0, cfg.shadowing_std_db, (num_orus, num_users))

    owner = equal_rbg_owner(cfg)
    power_idx = np.full((num_orus, rbgs), equal_power_index(power_set), dtype=np.int64)

    state = NetworkState(
        cfg=cfg, power_set=power_set, t=0, d_e=d_e, mean_speed=mean_speed,
        oru_xy=oru_xy, pos=pos, speed=speed, direction=direction, serving=serving,
        owner=owner, power_idx=power_idx, shadow_db=shadow_db,
        links=LinkGrid(
            gain=np.zeros((num_orus, num_users)),
            csi=np.zeros((num_orus, rbgs)),
            sinr=np.zeros((num_orus, rbgs)),
            capacity_bps=np.zeros((num_orus, rbgs)),
            arrivals_bits=np.zeros((num_orus, rbgs), dtype=np.int64),
            sent_bits=np.zeros((num_orus, rbgs), dtype=np.int64),
            leftover_bits=np.zeros((num_orus, rbgs), dtype=np.int64),
            rate_bps=np.zeros((num_orus, rbgs)),
        ),
    )
    gain, csi, _, _ = _link_grid_stats(state, owner, power_idx, shadow_db)
    state.links.gain = gain
    state.links.csi = csi
    return state


def step_env(state: NetworkState, allocation: Allocation, rng: np.random.Generator):
    """Run one slot under ``allocation``: transmit, then move users.

    Returns (next_state, slot_throughput_bps, total_leftover_bits).  Pure in
    the sense that the input state is not mutated; the draw order per slot is
    fixed (arrivals, optional fading, mobility) so paired-seed runs consume
    identical randomness regardless of the policy in charge.
    """
    cfg = state.cfg
    if state.t >= cfg.slots_per_episode:
        raise InvariantError("episode already ran its configured number of slots")
    allocation.validate(cfg, state.power_set)

    arrivals = draw_arrivals(rng, state.d_e, cfg.slot_duration_s,
                             (cfg.num_orus, cfg.rbgs_per_oru))
    excess_db = state.shadow_db
    if cfg.fast_fading:
        # unit-mean Rayleigh power factor, applied as extra attenuation in dB
        factor = rng.exponential(1.0, excess_db.shape)
        excess_db = excess_db - 10.0 * np.log10(np.maximum(factor, 1e-12))

    owner = allocation.owner.copy()
    power_idx = allocation.power_idx.copy()
    gain, csi, sinr, capacity = _link_grid_stats(state, owner, power_idx, excess_db)
    sent, leftover, rate = _deliver(arrivals, capacity, cfg.slot_duration_s)
    pos, direction = _advance_kinematics(cfg, state.pos, state.speed,
                                         state.direction, state.oru_xy, rng)
    next_state = NetworkState(
        cfg=cfg, power_set=state.power_set, t=state.t + 1,
        d_e=state.d_e, mean_speed=state.mean_speed, oru_xy=state.oru_xy,
        pos=pos, speed=state.speed, direction=direction, serving=state.serving,
        owner=owner, power_idx=power_idx, shadow_db=state.shadow_db,
        links=LinkGrid(
            gain=gain, csi=csi, sinr=sinr, capacity_bps=capacity,
            arrivals_bits=arrivals, sent_bits=sent, leftover_bits=leftover,
            rate_bps=rate,
        ),
    )
    return next_state, float(rate.sum()), int(leftover.sum())
