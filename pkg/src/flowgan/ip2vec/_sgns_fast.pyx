# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled negative-sampling update kernel (see ``_sgns_py`` for semantics)."""

from libc.math cimport exp, log1p, fabs
from libc.stdlib cimport malloc, free


cdef inline double log_sigmoid(double x) noexcept nogil:
    # log(1 / (1 + exp(-x))), stable for both signs
    if x >= 0:
        return -log1p(exp(-x))
    return x - log1p(exp(x))


cdef inline double sigmoid(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def train_chunk(double[:, ::1] w_in, double[:, ::1] w_out,
                const long long[::1] inputs, const long long[::1] outputs,
                const long long[:, ::1] negatives, const double[::1] lrs):
    cdef Py_ssize_t n = inputs.shape[0]
    cdef Py_ssize_t k = negatives.shape[1]
    cdef Py_ssize_t m = w_in.shape[1]
    cdef Py_ssize_t p, t, j, nt
    cdef long long i, o, tgt
    cdef double s, total = 0.0, lr
    cdef long long *targets = <long long *> malloc((k + 1) * sizeof(long long))
    cdef double *g = <double *> malloc((k + 1) * sizeof(double))
    cdef double *v = <double *> malloc(m * sizeof(double))
    cdef double *neu1e = <double *> malloc(m * sizeof(double))
    if targets == NULL or g == NULL or v == NULL or neu1e == NULL:
        free(targets); free(g); free(v); free(neu1e)
        raise MemoryError()
    try:
        with nogil:
            for p in range(n):
                i = inputs[p]
                o = outputs[p]
                lr = lrs[p]
                targets[0] = o
                nt = 1
                for t in range(k):
                    if negatives[p, t] != o:
                        targets[nt] = negatives[p, t]
                        nt += 1
                for j in range(m):
                    v[j] = w_in[i, j]
                    neu1e[j] = 0.0
                for t in range(nt):
                    tgt = targets[t]
                    s = 0.0
                    for j in range(m):
                        s = s + w_out[tgt, j] * v[j]
                    if t == 0:
                        total = total - log_sigmoid(s)
                        g[t] = (1.0 - sigmoid(s)) * lr
                    else:
                        total = total - log_sigmoid(-s)
                        g[t] = (0.0 - sigmoid(s)) * lr
                    for j in range(m):
                        neu1e[j] = neu1e[j] + g[t] * w_out[tgt, j]
                for t in range(nt):
                    tgt = targets[t]
                    for j in range(m):
                        w_out[tgt, j] = w_out[tgt, j] + g[t] * v[j]
                for j in range(m):
                    w_in[i, j] = w_in[i, j] + neu1e[j]
    finally:
        free(targets); free(g); free(v); free(neu1e)
    return total
