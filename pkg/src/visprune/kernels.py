"""Dense numeric primitives shared by the model and the test oracles.

Matrices are plain 2-D numpy arrays. Additive masks use ``0.0`` for an open
position and ``-inf`` for a blocked one.
"""

import numpy as np

NEG_INF = -np.inf

DTYPES = {"single": np.float32, "double": np.float64}


def dtype_for(precision: str) -> np.dtype:
    try:
        return np.dtype(DTYPES[precision])
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}, expected one of {sorted(DTYPES)}") from None


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def mask_from_allowed(allowed: np.ndarray) -> np.ndarray:
    """Turn a boolean "may attend" matrix into an additive mask."""
    mask = np.zeros(allowed.shape, dtype=np.float64)
    mask[~allowed] = NEG_INF
    return mask


def check_mask(mask: np.ndarray) -> None:
    if mask.ndim != 2:
        raise ValueError("additive mask must be 2-D")
    open_ = mask == 0.0
    if not np.all(open_ | (mask == NEG_INF)):
        raise ValueError("additive mask entries must be 0 or -inf")
    empty = np.flatnonzero(~open_.any(axis=1))
    if empty.size:
        raise ValueError(f"additive mask has fully masked rows: {empty.tolist()}")


def masked_softmax(scores: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise softmax of ``scores + mask``.

    Blocked positions come out exactly 0. A row with no open position is an
    error rather than a NaN row.
    """
    if scores.ndim != 2:
        raise ValueError("masked_softmax expects a 2-D score matrix")
    if mask is None:
        open_ = np.ones(scores.shape, dtype=bool)
    else:
        if mask.shape != scores.shape:
            raise ValueError(f"mask shape {mask.shape} does not match scores {scores.shape}")
        check_mask(mask)
        open_ = mask == 0.0
    if scores.shape[1] == 0:
        raise ValueError("masked_softmax needs at least one column")

    shifted = np.where(open_, scores, -np.inf)
    row_max = shifted.max(axis=1, keepdims=True)
    e = np.where(open_, np.exp(shifted - row_max), 0.0).astype(scores.dtype, copy=False)
    return e / e.sum(axis=1, keepdims=True)


def silu(x: np.ndarray) -> np.ndarray:
    # x * sigmoid(x), written to avoid overflow for large negative x
    return x * (0.5 * (1.0 + np.tanh(0.5 * x)))


def rms_normalize(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    rms = np.sqrt(np.mean(x * x, axis=1, keepdims=True) + eps)
    return x / rms
