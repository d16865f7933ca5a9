"""3D Gauss-Markov mobility with reflecting boundaries."""
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class NodeState:
    id: int
    position: tuple
    velocity: tuple
    is_attacker: bool = False
    is_gbs: bool = False


def gm_update(pos, vel, mean_vel, alpha, noise_std, dt, lo, hi, xi):
    """Vectorised Gauss-Markov step.

    All arrays are ``(n, 3)`` except ``alpha`` and ``noise_std`` which are
    ``(n,)``. ``xi`` holds standard normal draws. Returns new
    ``(pos, vel, mean_vel)``; the mean velocity component is reflected along
    with the velocity so nodes do not pile up against the walls.
    """
    alpha = np.asarray(alpha, dtype=float)[:, None]
    noise_std = np.asarray(noise_std, dtype=float)[:, None]
    vel = alpha * vel + (1.0 - alpha) * mean_vel + np.sqrt(1.0 - alpha ** 2) * noise_std * xi
    pos = pos + vel * dt
    mean_vel = np.array(mean_vel, dtype=float, copy=True)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    # a step longer than the box needs more than one fold
    for _ in range(8):
        over = pos > hi
        under = pos < lo
        if not (over.any() or under.any()):
            break
        pos = np.where(over, 2 * hi - pos, pos)
        pos = np.where(under, 2 * lo - pos, pos)
        flip = over | under
        vel = np.where(flip, -vel, vel)
        mean_vel = np.where(flip, -mean_vel, mean_vel)
    pos = np.clip(pos, lo, hi)
    return pos, vel, mean_vel


def gm_step(node, alpha, mean_speed, dt, rng, mean_velocity=None, bounds=((0, 0, 0), (12000, 12000, 300)),
            noise_scale=1.0):
    """Advance one node by ``dt`` seconds.

    ``mean_velocity`` defaults to ``mean_speed`` along +x. The Gaussian
    noise per axis has standard deviation ``noise_scale * mean_speed``.
    The ground station never moves.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if node.is_gbs:
        return node
    if mean_velocity is None:
        mean_velocity = (mean_speed, 0.0, 0.0)
    xi = rng.standard_normal((1, 3))
    pos, vel, _ = gm_update(np.array([node.position], dtype=float), np.array([node.velocity], dtype=float),
                            np.array([mean_velocity], dtype=float), [alpha], [noise_scale * mean_speed],
                            dt, bounds[0], bounds[1], xi)
    return replace(node, position=tuple(pos[0].tolist()), velocity=tuple(vel[0].tolist()))


def initial_motion(rng, n, mean_speed, lo, hi):
    """Uniform positions; mean heading uniform in the horizontal plane."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pos = lo + rng.random((n, 3)) * (hi - lo)
    theta = rng.random(n) * 2 * np.pi
    mean_vel = np.stack([mean_speed * np.cos(theta), mean_speed * np.sin(theta), np.zeros(n)], axis=1)
    return pos, mean_vel.copy(), mean_vel


def neighbor_matrix(positions, tx_range_m):
    """Boolean adjacency, distance <= range inclusive, no self loops."""
    diff = positions[:, None, :] - positions[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    adj = d2 <= tx_range_m * tx_range_m
    np.fill_diagonal(adj, False)
    return adj


def neighbors_of(node_id, all_nodes, tx_range_m):
    """Ids of nodes within ``tx_range_m`` (3D Euclidean, inclusive) of ``node_id``."""
    ids = [n.id for n in all_nodes]
    try:
        me = ids.index(node_id)
    except ValueError:
        raise KeyError(f"unknown node id {node_id}") from None
    pos = np.array([n.position for n in all_nodes], dtype=float)
    d2 = ((pos - pos[me]) ** 2).sum(axis=1)
    return {ids[i] for i in range(len(ids)) if i != me and d2[i] <= tx_range_m * tx_range_m}
