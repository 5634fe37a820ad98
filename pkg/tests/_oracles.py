"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np


def random_qp(rng, n_affine=1):
    """Random 2-dim instance: PSD Q, linear c, ball radius and feasible affine rows."""
    m = rng.normal(size=(2, 2))
    Q = m @ m.T * rng.uniform(0.1, 2.0)
    c = rng.normal(size=2) * 2
    radius = rng.uniform(0.5, 2.0)
    A = rng.normal(size=(n_affine, 2))
    x0 = rng.normal(size=2)
    x0 *= rng.uniform(0.2, 0.9) * np.sqrt(radius) / np.linalg.norm(x0)
    b = A @ x0 - rng.uniform(0.0, 0.5, n_affine)
    return Q, c, radius, A, b


def _objective(Q, c, X, Y):
    return Q[0, 0] * X**2 + 2 * Q[0, 1] * X * Y + Q[1, 1] * Y**2 + c[0] * X + c[1] * Y


def _feasible(radius, A, b, X, Y, slack=0.0):
    ok = X**2 + Y**2 <= radius * (1 + slack)
    for a, bi in zip(A, b):
        ok &= a[0] * X + a[1] * Y >= bi - slack
    return ok


def _curve_min(Q, c, radius, A, b, point, lo, hi, n):
    """Minimum along a parametrised boundary curve, sampled then zoomed."""
    best = (np.inf, None)
    for _ in range(2):
        t = np.linspace(lo, hi, n)
        X, Y = point(t)
        val = np.where(_feasible(radius, A, b, X, Y, 1e-12), _objective(Q, c, X, Y), np.inf)
        i = int(np.argmin(val))
        if val[i] < best[0]:
            best = (float(val[i]), np.array([X[i], Y[i]]))
        step = t[1] - t[0]
        lo, hi = t[i] - 2 * step, t[i] + 2 * step
    return best


def grid_min(Q, c, radius, A, b, n=2000, zoom=True):
    """Brute-force minimum: an n x n grid over the ball (refined around its best
    point), plus 50 n samples (then a zoom) along the sphere and along each affine chord so that
    boundary optima are resolved as finely as interior ones."""
    r = np.sqrt(radius)

    def search(cx, cy, half):
        xs = np.linspace(cx - half, cx + half, n)
        ys = np.linspace(cy - half, cy + half, n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        val = np.where(_feasible(radius, A, b, X, Y), _objective(Q, c, X, Y), np.inf)
        i = np.unravel_index(np.argmin(val), val.shape)
        return float(val[i]), xs[i[0]], ys[i[1]], xs[1] - xs[0]

    best, x, y, step = search(0.0, 0.0, r)
    if zoom:
        best, x, y, _ = search(x, y, 2 * step)
    cands = [(best, np.array([x, y]))]
    if zoom:
        cands.append(_curve_min(Q, c, radius, A, b, lambda t: (r * np.cos(t), r * np.sin(t)),
                                -np.pi, np.pi, 50 * n))
        for a, bi in zip(A, b):
            # chord {x : a.x = bi} inside the ball
            na = np.linalg.norm(a)
            foot = a * bi / na**2
            half2 = radius - foot @ foot
            if half2 <= 0:
                continue
            d = np.array([-a[1], a[0]]) / na
            h = np.sqrt(half2)
            cands.append(_curve_min(Q, c, radius, A, b, lambda t: (foot[0] + t * d[0], foot[1] + t * d[1]),
                                    -h, h, 50 * n))
    return min(cands, key=lambda v: v[0])
