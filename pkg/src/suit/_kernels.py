"""Hot scatter kernels with a numba fast path and a pure-numpy fallback.

Backend selection via the SUIT_BACKEND environment variable:
  - "auto"  (default): numba if importable, else numpy
  - "numba": require numba, fail loudly if missing
  - "numpy": force the fallback (useful for debugging and benchmarking)

Both paths accumulate in the identical (sample, window, patch) loop order,
so results are bitwise equal and runs stay deterministic.
"""

from __future__ import annotations

import os

import numpy as np


def _warp_scatter_loops(locs, scores, win_off, patch_off, patch_feats, q,
                        heat, weight, feat):
    n = locs.shape[0]
    k = win_off.shape[0]
    j = patch_off.shape[0]
    h, w = heat.shape
    for i in range(n):
        s = scores[i]
        for ki in range(k):
            wgt = q[i, ki] * s
            cx = locs[i, 0] + win_off[ki, 0]
            cy = locs[i, 1] + win_off[ki, 1]
            if 0 <= cx < w and 0 <= cy < h:
                heat[cy, cx] += wgt
            for ji in range(j):
                px = cx + patch_off[ji, 0]
                py = cy + patch_off[ji, 1]
                if 0 <= px < w and 0 <= py < h:
                    weight[py, px] += wgt
                    for c in range(patch_feats.shape[2]):
                        feat[py, px, c] += wgt * patch_feats[i, ji, c]


def _warp_scatter_numpy(locs, scores, win_off, patch_off, patch_feats, q,
                        heat, weight, feat):
    """Vectorized fallback; accumulation order matches the loop kernel
    ((sample, window, patch), k-major) so results are bitwise identical."""
    h, w = heat.shape
    n, k = q.shape
    j = patch_off.shape[0]
    for i in range(n):
        wgt = q[i] * scores[i]                       # (K,)
        cx = locs[i, 0] + win_off[:, 0]
        cy = locs[i, 1] + win_off[:, 1]
        m = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
        np.add.at(heat, (cy[m], cx[m]), wgt[m])
        px = (cx[:, None] + patch_off[None, :, 0]).ravel()
        py = (cy[:, None] + patch_off[None, :, 1]).ravel()
        pm = (px >= 0) & (px < w) & (py >= 0) & (py < h)
        wk = np.repeat(wgt, j)
        np.add.at(weight, (py[pm], px[pm]), wk[pm])
        vals = wk[:, None] * np.tile(patch_feats[i], (k, 1))
        np.add.at(feat, (py[pm], px[pm]), vals[pm])


_HAS_NUMBA = False
_warp_scatter_numba = None
_requested = os.environ.get("SUIT_BACKEND", "auto").lower()
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"SUIT_BACKEND must be auto|numba|numpy, got {_requested!r}")

if _requested in ("auto", "numba"):
    try:
        import numba

        _warp_scatter_numba = numba.njit(cache=True)(_warp_scatter_loops)
        _HAS_NUMBA = True
    except ImportError:
        if _requested == "numba":
            raise RuntimeError("SUIT_BACKEND=numba but numba is not installed")


def active_backend() -> str:
    return "numba" if (_HAS_NUMBA and _requested != "numpy") else "numpy"


def warp_scatter(locs: np.ndarray, scores: np.ndarray, win_off: np.ndarray,
                 patch_off: np.ndarray, patch_feats: np.ndarray, q: np.ndarray,
                 height: int, width: int, channels: int,
                 backend: str | None = None):
    """Scatter-accumulate samples into (heatmap, weight, features) grids.

    locs (n, 2) int64 cell xy; scores (n,); win_off (K, 2) window offsets;
    patch_off (J, 2) patch cell offsets; patch_feats (n, J, C); q (n, K).
    Per sample i and window offset k, weight q[i,k]*scores[i] lands on the
    heatmap at loc+win_off[k] and on (weight, features) over the patch
    footprint around that cell. Returns raw accumulators (no normalization).
    """
    heat = np.zeros((height, width), dtype=np.float64)
    weight = np.zeros((height, width), dtype=np.float64)
    feat = np.zeros((height, width, channels), dtype=np.float64)
    if locs.shape[0]:
        use = backend or active_backend()
        if use == "numba":
            _warp_scatter_numba(
                np.ascontiguousarray(locs, dtype=np.int64),
                np.ascontiguousarray(scores, dtype=np.float64),
                np.ascontiguousarray(win_off, dtype=np.int64),
                np.ascontiguousarray(patch_off, dtype=np.int64),
                np.ascontiguousarray(patch_feats, dtype=np.float64),
                np.ascontiguousarray(q, dtype=np.float64),
                heat, weight, feat)
        else:
            _warp_scatter_numpy(locs.astype(np.int64), scores.astype(np.float64),
                                win_off.astype(np.int64), patch_off.astype(np.int64),
                                patch_feats.astype(np.float64), q.astype(np.float64),
                                heat, weight, feat)
    return heat, weight, feat
