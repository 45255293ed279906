"""Vectorised interval algebra along rays.

A batch of rays x + t*d (t >= 0) meets a planar set in a finite union of
parameter intervals. We store those as two float arrays ``(start, end)`` of
shape (N, m): row i lists the intervals of ray i sorted by start, padded with
empty slots encoded as (inf, inf). Every radial integral in the package
(perimeter, curvature, Poisson extension) is a closed-form function of these
endpoints, so only the angular variable is ever integrated numerically.
"""
import numpy as np

INF = np.inf


def empty(n, m=1):
    return np.full((n, m), INF), np.full((n, m), INF)


def normalize(start, end):
    """Drop empty or reversed slots and sort each row by start."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    bad = ~(end > start)
    start = np.where(bad, INF, np.maximum(start, 0.0))
    end = np.where(bad, INF, end)
    if start.shape[1] == 1:
        return start, end
    order = np.argsort(start, axis=1, kind="stable")
    start = np.take_along_axis(start, order, axis=1)
    end = np.take_along_axis(end, order, axis=1)
    keep = np.isfinite(start).any(axis=0)
    if not keep.any():
        return start[:, :1], end[:, :1]
    last = np.nonzero(keep)[0][-1] + 1
    return start[:, :last], end[:, :last]


def complement(start, end):
    """Complement within [0, inf)."""
    n = start.shape[0]
    zeros = np.zeros((n, 1))
    infs = np.full((n, 1), INF)
    new_start = np.concatenate([zeros, end], axis=1)
    new_end = np.concatenate([start, infs], axis=1)
    # a gap that starts at inf is empty
    new_end = np.where(np.isinf(new_start), INF, new_end)
    return normalize(new_start, new_end)


def intersect(s1, e1, s2, e2):
    start = np.maximum(s1[:, :, None], s2[:, None, :]).reshape(s1.shape[0], -1)
    end = np.minimum(e1[:, :, None], e2[:, None, :]).reshape(s1.shape[0], -1)
    return normalize(start, end)


def union(s1, e1, s2, e2):
    c1 = complement(s1, e1)
    c2 = complement(s2, e2)
    return complement(*intersect(*c1, *c2))


def clip(start, end, tmax):
    """Restrict to [0, tmax] with tmax broadcast per ray."""
    tmax = np.broadcast_to(np.asarray(tmax, dtype=float), (start.shape[0],))[:, None]
    return normalize(np.minimum(start, tmax), np.minimum(end, tmax))


def total_length(start, end):
    finite = np.isfinite(start)
    return np.where(finite, end - start, 0.0).sum(axis=1)


def power_antiderivative(t, s):
    """t^(-s)/s with the conventions inf -> 0 and 0 -> 0 (finite part)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where((t > 0) & np.isfinite(t), t ** (-s) / s, 0.0)
    return out


def kernel_mass(start, end, s):
    """Row sums of int_a^b t^(-1-s) dt over the stored intervals.

    Intervals starting at t = 0 contribute only their finite part; callers
    that need the principal value account for the dropped t = 0 term.
    """
    return (power_antiderivative(start, s) - power_antiderivative(end, s)).sum(axis=1)


def directions(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
