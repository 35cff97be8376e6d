# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled GIS expectation kernel; see ``_gis_py.accumulate_shard`` for the contract.

Most outcomes of a context only carry the shared ``gbase`` score, so the
partition function is the global sum corrected for the few outcomes the
context touches.  Work per context is proportional to its sparse entries,
not to the vocabulary.  When the correction would cancel most of the
global sum the untouched mass is re-added exactly.
"""

from libc.math cimport exp, log
from libc.stdlib cimport calloc, free, malloc


def accumulate_shard(const long long[:] ctx_ptr, const int[:] ent_y, const int[:] ent_f,
                     const double[:] ctx_n, const long long[:] obs_ptr, const int[:] obs_y,
                     const double[:] obs_n, const double[:] weights, const double[:] gbase,
                     Py_ssize_t c0, Py_ssize_t c1, double[:] feat_out, double[:] glob_out):
    cdef Py_ssize_t V = gbase.shape[0]
    cdef Py_ssize_t c, y, e, i, nt
    cdef double mg, zg, mc, scale, rem, zt, z, logz, q, n, p, acc = 0.0, ll = 0.0
    cdef double *s
    cdef double *eg
    cdef double *pt
    cdef int *tl
    cdef char *mark
    if c1 <= c0:
        return 0.0
    s = <double *> malloc(V * sizeof(double))
    eg = <double *> malloc(V * sizeof(double))
    pt = <double *> malloc(V * sizeof(double))
    tl = <int *> malloc(V * sizeof(int))
    mark = <char *> calloc(V, sizeof(char))
    if s == NULL or eg == NULL or pt == NULL or tl == NULL or mark == NULL:
        free(s); free(eg); free(pt); free(tl); free(mark)
        raise MemoryError()
    with nogil:
        mg = gbase[0]
        for y in range(1, V):
            if gbase[y] > mg:
                mg = gbase[y]
        zg = 0.0
        for y in range(V):
            s[y] = gbase[y]
            eg[y] = exp(gbase[y] - mg)
            zg += eg[y]
        for c in range(c0, c1):
            nt = 0
            for e in range(ctx_ptr[c], ctx_ptr[c + 1]):
                y = ent_y[e]
                if not mark[y]:
                    mark[y] = 1
                    tl[nt] = <int> y
                    nt += 1
                s[y] += weights[ent_f[e]]
            mc = mg
            rem = zg
            for i in range(nt):
                y = tl[i]
                if s[y] > mc:
                    mc = s[y]
                rem -= eg[y]
            if rem < 1e-8 * zg:
                rem = 0.0
                for y in range(V):
                    if not mark[y]:
                        rem += eg[y]
            scale = exp(mg - mc)
            zt = 0.0
            for i in range(nt):
                zt += exp(s[tl[i]] - mc)
            z = scale * rem + zt
            logz = mc + log(z)
            n = ctx_n[c]
            for e in range(obs_ptr[c], obs_ptr[c + 1]):
                ll += obs_n[e] * (s[obs_y[e]] - logz)
            q = scale / z
            acc += n * q
            for i in range(nt):
                y = tl[i]
                p = exp(s[y] - logz)
                pt[y] = p
                glob_out[y] += n * (p - eg[y] * q)
            for e in range(ctx_ptr[c], ctx_ptr[c + 1]):
                feat_out[ent_f[e]] += n * pt[ent_y[e]]
            for i in range(nt):
                y = tl[i]
                s[y] = gbase[y]
                mark[y] = 0
        for y in range(V):
            glob_out[y] += eg[y] * acc
    free(s); free(eg); free(pt); free(tl); free(mark)
    return ll
