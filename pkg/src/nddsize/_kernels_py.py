"""Pure-numpy twin of the compiled kernel module."""

import numpy as np

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_BLOCK = 64


def gauss_sum_sorted(xs, grid, h, cutoff):
    """Density of ``xs`` (sorted ascending) at each ``grid`` point.

    Grid points are handled in blocks; each block only touches the sample
    slab within ``cutoff * h`` of its extreme points.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    n = xs.shape[0]
    reach = cutoff * h
    out = np.empty(grid.shape[0], dtype=np.float64)
    for start in range(0, grid.shape[0], _BLOCK):
        g = grid[start:start + _BLOCK]
        lo = np.searchsorted(xs, g.min() - reach, side="left")
        hi = np.searchsorted(xs, g.max() + reach, side="right")
        if hi <= lo:
            out[start:start + _BLOCK] = 0.0
            continue
        u = (g[:, None] - xs[None, lo:hi]) / h
        # outside-window terms inside the slab are below exp(-cutoff**2/2)
        out[start:start + _BLOCK] = np.exp(-0.5 * u * u).sum(axis=1)
    return out * (_INV_SQRT_2PI / (n * h))


_CHUNK = 8192


def gauss_product_scatter(xs, axes, sizes, h, cutoff):
    """Product-Gaussian density of the rows of ``xs``, flattened C order.

    Same contract as the compiled kernel. Here the dimensions are split into
    two groups and the outer products of their kernel tables are contracted
    with a matrix product; table entries beyond ``cutoff * h`` are zeroed so
    both backends sum the same terms.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    sizes = [int(s) for s in sizes]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    grid_axes = [np.asarray(axes[bounds[d]:bounds[d + 1]], dtype=np.float64)
                 for d in range(len(sizes))]
    n, dim = xs.shape
    split = dim // 2
    acc = np.zeros((int(np.prod(sizes[:split])), int(np.prod(sizes[split:]))))
    for start in range(0, n, _CHUNK):
        chunk = xs[start:start + _CHUNK]
        tables = []
        for d in range(dim):
            u = (grid_axes[d][:, None] - chunk[None, :, d]) / h[d]
            t = np.exp(-0.5 * u * u)
            t[np.abs(u) > cutoff] = 0.0
            tables.append(t)
        acc += outer_rows(tables[:split], chunk.shape[0]) @ outer_rows(tables[split:], chunk.shape[0]).T
    norm = np.prod(_INV_SQRT_2PI / h) / n
    return (acc * norm).ravel()


def outer_rows(tables, n):
    """Row-wise outer product of per-dimension tables: (prod G_d, n)."""
    out = np.ones((1, n))
    for t in tables:
        out = (out[:, None, :] * t[None, :, :]).reshape(-1, n)
    return out
