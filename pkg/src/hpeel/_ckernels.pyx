# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Batched small GEMMs through the BLAS that scipy links against."""
from scipy.linalg.cython_blas cimport dgemm


def gemm_batch(const double[::1] A, const long long[::1] a_off,
               const long long[::1] a_rows, const long long[::1] a_cols,
               const unsigned char[::1] trans,
               const double[:, ::1] X, const long long[::1] x_row,
               double[:, ::1] Y, const long long[::1] y_row, int k):
    """For each item t: ``Y[y_row[t]:, :] += op(A_t) @ X[x_row[t]:, :]``."""
    cdef Py_ssize_t t, nitems = a_off.shape[0]
    cdef int ar, ac, rows_out, inner, lda, ldb
    cdef double one = 1.0
    cdef char transn = b'N'
    cdef char transb
    if k == 0:
        return
    lda = k
    with nogil:
        for t in range(nitems):
            ar = <int>a_rows[t]
            ac = <int>a_cols[t]
            if ar == 0 or ac == 0:
                continue
            # row-major (rows, k) is column-major (k, rows): Y^T += X^T op(A)^T
            if trans[t]:
                transb = b'T'
                rows_out = ac
                inner = ar
            else:
                transb = b'N'
                rows_out = ar
                inner = ac
            ldb = ac
            dgemm(&transn, &transb, &k, &rows_out, &inner, &one,
                  <double*>&X[x_row[t], 0], &lda, <double*>&A[a_off[t]], &ldb,
                  &one, &Y[y_row[t], 0], &lda)
