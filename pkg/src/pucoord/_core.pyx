# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled sweep kernel for memory-hazard detection.

Mirrors the pure-Python sweep in ``pucoord.sim.hazards``; the caller
sorts records by (t0, t1) and passes parallel arrays.  Returns index
pairs (earlier, later) of conflicting accesses.
"""

from libc.stdlib cimport free, malloc


def hazard_pairs(double[::1] t0, double[::1] t1,
                 long long[::1] addr, long long[::1] nbytes,
                 unsigned char[::1] is_write, int limit):
    cdef Py_ssize_t n = t0.shape[0]
    cdef Py_ssize_t i, j, k, m
    cdef double eps = 1e-9
    cdef double cut
    cdef list out = []
    cdef Py_ssize_t* active = NULL
    cdef Py_ssize_t nactive = 0

    if n == 0:
        return out
    active = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    if active == NULL:
        raise MemoryError()
    try:
        for i in range(n):
            cut = t0[i] + eps
            m = 0
            for k in range(nactive):
                j = active[k]
                if t1[j] > cut:
                    active[m] = j
                    m += 1
            nactive = m
            for k in range(nactive):
                j = active[k]
                if not (is_write[i] or is_write[j]):
                    continue
                if addr[i] < addr[j] + nbytes[j] and \
                        addr[j] < addr[i] + nbytes[i]:
                    out.append((j, i))
                    if len(out) >= limit:
                        return out
            active[nactive] = i
            nactive += 1
    finally:
        free(active)
    return out
