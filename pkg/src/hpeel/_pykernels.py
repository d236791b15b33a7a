"""Pure-numpy batched block products; reference twin of ``_ckernels``."""


def gemm_batch(A, a_off, a_rows, a_cols, trans, X, x_row, Y, y_row, k):
    """For each item t: ``Y[y_row[t]:, :] += op(A_t) @ X[x_row[t]:, :]``.

    ``A`` is a flat float64 buffer holding row-major blocks of shape
    ``(a_rows[t], a_cols[t])`` at ``a_off[t]``; ``op`` transposes when
    ``trans[t]`` is set.  ``X`` and ``Y`` are C-contiguous ``(rows, k)``.
    """
    for t in range(len(a_off)):
        ar, ac = int(a_rows[t]), int(a_cols[t])
        if ar == 0 or ac == 0:
            continue
        blk = A[a_off[t]:a_off[t] + ar * ac].reshape(ar, ac)
        if trans[t]:
            blk = blk.T
        xr, yr = x_row[t], y_row[t]
        Y[yr:yr + blk.shape[0]] += blk @ X[xr:xr + blk.shape[1]]
