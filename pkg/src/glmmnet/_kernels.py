"""Hot numeric loops, each with a numba and a pure-numpy implementation.

The active backend is chosen once at import time.  Set ``GLMMNET_NUMBA=0``
to force the numpy path (numba is also skipped when it cannot be imported).
Both implementations are always reachable as ``numpy_kernels`` and
``numba_kernels`` so they can be compared directly.
"""

import math
import os
from types import SimpleNamespace

import numpy as np
from scipy import special

_FLAG = os.environ.get("GLMMNET_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")

_SQRT_HALF = 1.0 / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _segment_sum_np(values, index, size):
    values = np.asarray(values, dtype=np.float64)
    index = np.asarray(index, dtype=np.int64)
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=size)[:size].astype(np.float64)
    out = np.zeros((size, values.shape[1]))
    np.add.at(out, index, values)
    return out


def _linear_deposit_np(values, lo, step, m):
    values = np.asarray(values, dtype=np.float64)
    if m == 1 or step <= 0.0:
        out = np.zeros(m)
        out[0] = 1.0
        return out
    pos = (values - lo) / step
    left = np.clip(np.floor(pos).astype(np.int64), 0, m - 2)
    frac = np.clip(pos - left, 0.0, 1.0)
    out = np.bincount(left, weights=1.0 - frac, minlength=m)
    out += np.bincount(left + 1, weights=frac, minlength=m)
    return out[:m] / values.size


def _gauss_mixture_cdf_np(points, centers, weights, scale, chunk=4096):
    points = np.asarray(points, dtype=np.float64)
    out = np.empty(points.size)
    for start in range(0, points.size, chunk):
        z = (points[start:start + chunk, None] - centers[None, :]) / scale
        out[start:start + chunk] = special.ndtr(z) @ weights
    return out


def _signed_rank_null_np(doubled_ranks):
    doubled_ranks = np.asarray(doubled_ranks, dtype=np.int64)
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    reach = 0
    for r in doubled_ranks:
        r = int(r)
        counts[r:reach + r + 1] += counts[:reach + 1].copy()
        reach += r
    return counts


numpy_kernels = SimpleNamespace(
    segment_sum=_segment_sum_np,
    linear_deposit=_linear_deposit_np,
    gauss_mixture_cdf=_gauss_mixture_cdf_np,
    signed_rank_null=_signed_rank_null_np,
    name="numpy",
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def _segment_sum_1d(values, index, size):
        out = np.zeros(size)
        for i in range(values.shape[0]):
            out[index[i]] += values[i]
        return out

    @njit
    def _segment_sum_2d(values, index, size):
        out = np.zeros((size, values.shape[1]))
        for i in range(values.shape[0]):
            j = index[i]
            for k in range(values.shape[1]):
                out[j, k] += values[i, k]
        return out

    def _segment_sum_nb(values, index, size):
        values = np.ascontiguousarray(values, dtype=np.float64)
        index = np.ascontiguousarray(index, dtype=np.int64)
        if values.ndim == 1:
            return _segment_sum_1d(values, index, size)
        return _segment_sum_2d(values, index, size)

    @njit
    def _linear_deposit_kernel(values, lo, step, m):
        out = np.zeros(m)
        if m == 1 or step <= 0.0:
            out[0] = 1.0
            return out
        inv = 1.0 / values.shape[0]
        for i in range(values.shape[0]):
            pos = (values[i] - lo) / step
            left = int(math.floor(pos))
            if left < 0:
                left = 0
            elif left > m - 2:
                left = m - 2
            frac = pos - left
            if frac < 0.0:
                frac = 0.0
            elif frac > 1.0:
                frac = 1.0
            out[left] += (1.0 - frac) * inv
            out[left + 1] += frac * inv
        return out

    def _linear_deposit_nb(values, lo, step, m):
        return _linear_deposit_kernel(np.ascontiguousarray(values, dtype=np.float64),
                                      float(lo), float(step), int(m))

    @njit
    def _gauss_mixture_cdf_kernel(points, centers, weights, scale):
        out = np.empty(points.shape[0])
        c = _SQRT_HALF / scale
        for g in range(points.shape[0]):
            acc = 0.0
            p = points[g]
            for m in range(centers.shape[0]):
                w = weights[m]
                if w != 0.0:
                    acc += w * 0.5 * math.erfc(-(p - centers[m]) * c)
            out[g] = acc
        return out

    def _gauss_mixture_cdf_nb(points, centers, weights, scale):
        return _gauss_mixture_cdf_kernel(np.ascontiguousarray(points, dtype=np.float64),
                                         np.ascontiguousarray(centers, dtype=np.float64),
                                         np.ascontiguousarray(weights, dtype=np.float64),
                                         float(scale))

    @njit
    def _signed_rank_null_kernel(doubled_ranks):
        total = 0
        for r in doubled_ranks:
            total += r
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        reach = 0
        for r in doubled_ranks:
            for s in range(reach, -1, -1):
                counts[s + r] += counts[s]
            reach += r
        return counts

    def _signed_rank_null_nb(doubled_ranks):
        return _signed_rank_null_kernel(np.ascontiguousarray(doubled_ranks, dtype=np.int64))

    numba_kernels = SimpleNamespace(
        segment_sum=_segment_sum_nb,
        linear_deposit=_linear_deposit_nb,
        gauss_mixture_cdf=_gauss_mixture_cdf_nb,
        signed_rank_null=_signed_rank_null_nb,
        name="numba",
    )
else:  # pragma: no cover
    numba_kernels = None


active = numba_kernels if USE_NUMBA else numpy_kernels

segment_sum = active.segment_sum
linear_deposit = active.linear_deposit
gauss_mixture_cdf = active.gauss_mixture_cdf
signed_rank_null = active.signed_rank_null
BACKEND = active.name
