"""Fixed quadrature rules shared by the angular and radial integrators."""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_jacobi_left(n, alpha):
    """Rule on [0, 1] exact for p(w) * w**alpha (singularity at w = 0).

    Weights include the factor w**alpha, so integrate f(w) w**alpha as
    sum(weights * f(nodes)).
    """
    # roots_jacobi uses weight (1-x)^a (1+x)^b on [-1, 1]
    x, w = roots_jacobi(n, 0.0, alpha)
    nodes = 0.5 * (x + 1.0)
    weights = w * 0.5 ** (1.0 + alpha)
    return nodes, weights


def composite_nodes(breaks, n):
    """Composite Gauss-Legendre rule over consecutive panels of ``breaks``.

    ``breaks`` has shape (..., m + 1) and must be increasing along the last
    axis. Returns nodes and weights of shape (..., m * n).
    """
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(n)
    lo = breaks[..., :-1, None]
    width = np.diff(breaks, axis=-1)[..., None]
    nodes = lo + width * x
    weights = width * w
    shape = breaks.shape[:-1] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def singular_panel_rule(a, b, s, n):
    """Rule on [a, b] for integrands behaving like |t - a|^(-s) |t - b|^(-s).

    The panel is halved and each half carries a Gauss-Jacobi rule whose
    weight absorbs the endpoint power; the weights returned already divide
    that power back out, so ``sum(w * f(t))`` integrates f directly.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = 0.5 * (a + b)
    half = (m - a)[..., None]
    xj, wj = gauss_jacobi_left(n, -s)
    # left half: t = a + half * w, weight half^{1-s} * wj / (half*w)^{-s}
    tl = a[..., None] + half * xj
    tr = b[..., None] - half * xj
    wl = half * wj * xj ** s
    nodes = np.concatenate([tl, tr], axis=-1)
    weights = np.concatenate([wl, wl], axis=-1)
    return nodes, weights


@lru_cache(maxsize=None)
def sidi_rule(n, q=3):
    """Gauss-Legendre pulled through u^q / (u^q + (1-u)^q).

    Clusters nodes at both ends of [0, 1] so that integrands with algebraic
    endpoint behaviour (|t|^beta, beta > -1/q) are integrated to high order.
    """
    u, w = gauss_legendre(n)
    a = u ** q
    b = (1.0 - u) ** q
    x = a / (a + b)
    dx = q * (u * (1.0 - u)) ** (q - 1) / (a + b) ** 2
    return x, w * dx


@lru_cache(maxsize=None)
def graded_end_rule(n, s, levels, sigma=0.15):
    """Rule on [0, 1] graded geometrically towards 0.

    Panels [sigma^(k+1), sigma^k] get n-point Gauss-Legendre; the innermost
    panel [0, sigma^levels] gets either Gauss-Jacobi with weight w^(-s)
    (returned as the singular variant) or Legendre (regular variant). Both
    variants have the same length so callers can pick per element.
    """
    x, w = gauss_legendre(n)
    nodes, weights = [], []
    for k in range(levels):
        lo, hi = sigma ** (k + 1), sigma ** k
        nodes.append(lo + (hi - lo) * x)
        weights.append((hi - lo) * w)
    eps = sigma ** levels
    xj, wj = gauss_jacobi_left(n, -s)
    sing_n = eps * xj
    sing_w = eps * wj * xj ** s
    reg_n = eps * x
    reg_w = eps * w
    outer_n = np.concatenate(nodes)
    outer_w = np.concatenate(weights)
    return (
        np.concatenate([sing_n, outer_n]),
        np.concatenate([sing_w, outer_w]),
        np.concatenate([reg_n, outer_n]),
        np.concatenate([reg_w, outer_w]),
    )


def two_sided_rule(a, b, sing_a, sing_b, n, s, levels):
    """Nodes/weights on [a, b] (broadcast arrays) graded towards both ends.

    ``sing_a``/``sing_b`` flag ends where the integrand blows up like
    distance^(-s); those get the Jacobi inner panel. Also returns the
    distances of each node to a and to b, accurate near the respective end.
    """
    sn, sw, rn, rw = graded_end_rule(n, float(s), levels)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    sa = np.asarray(sing_a, dtype=bool)[..., None]
    sb = np.asarray(sing_b, dtype=bool)[..., None]
    xl = np.where(sa, sn, rn)
    wl = np.where(sa, sw, rw)
    xr = np.where(sb, sn, rn)
    wr = np.where(sb, sw, rw)
    nodes = np.concatenate([a + half * xl, b - half * xr], axis=-1)
    weights = np.concatenate([half * wl, half * wr], axis=-1)
    # distances to the ends, kept exact near each end
    dist_a = np.concatenate([half * xl, 2.0 * half - half * xr], axis=-1)
    dist_b = np.concatenate([2.0 * half - half * xl, half * xr], axis=-1)
    return nodes, weights, dist_a, dist_b
