# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-port propagation through a packed block list."""
import numpy as np
from libc.math cimport cos, sin, sqrt

cdef enum:
    MAX_MODES = 64


cdef class MeshEvaluator:
    """Evaluates output powers of one mesh for varying phase vectors."""
    cdef int[::1] top, pidx, side
    cdef double[::1] c, s
    cdef readonly int n_modes
    cdef Py_ssize_t n_blocks

    def __init__(self, top, c, s, pidx, side, int n_modes):
        if n_modes > MAX_MODES:
            raise ValueError(f"compiled kernel supports at most {MAX_MODES} modes")
        self.top = np.ascontiguousarray(top, dtype=np.intc)
        self.pidx = np.ascontiguousarray(pidx, dtype=np.intc)
        self.side = np.ascontiguousarray(side, dtype=np.intc)
        self.c = np.ascontiguousarray(c, dtype=np.float64)
        self.s = np.ascontiguousarray(s, dtype=np.float64)
        self.n_modes = n_modes
        self.n_blocks = self.top.shape[0]

    cdef void _run(self, const double[::1] phases, int port,
                   double* re, double* im) noexcept nogil:
        cdef Py_ssize_t j
        cdef int m, k
        cdef double ar, ai, br, bi, nar, nai, nbr, nbi, cp, sp, cc, ss, t
        for j in range(self.n_modes):
            re[j] = 0.0
            im[j] = 0.0
        re[port] = 1.0
        for j in range(self.n_blocks):
            m = self.top[j]
            k = self.pidx[j]
            ar = re[m]; ai = im[m]; br = re[m + 1]; bi = im[m + 1]
            if k >= 0 and self.side[j] == 1:
                cp = cos(phases[k]); sp = sin(phases[k])
                t = ar * cp - ai * sp
                ai = ar * sp + ai * cp
                ar = t
            cc = self.c[j]; ss = self.s[j]
            nar = cc * ar - ss * bi
            nai = cc * ai + ss * br
            nbr = cc * br - ss * ai
            nbi = cc * bi + ss * ar
            if k >= 0 and self.side[j] == 0:
                cp = cos(phases[k]); sp = sin(phases[k])
                t = nar * cp - nai * sp
                nai = nar * sp + nai * cp
                nar = t
            re[m] = nar; im[m] = nai; re[m + 1] = nbr; im[m + 1] = nbi

    def powers(self, const double[::1] phases, int port):
        out = np.empty(self.n_modes, dtype=np.float64)
        cdef double[::1] o = out
        cdef double[MAX_MODES] re
        cdef double[MAX_MODES] im
        cdef double total = 0.0
        cdef Py_ssize_t j
        with nogil:
            self._run(phases, port, re, im)
            for j in range(self.n_modes):
                o[j] = re[j] * re[j] + im[j] * im[j]
                total += o[j]
            for j in range(self.n_modes):
                o[j] /= total
        return out

    def infidelity(self, const double[::1] phases, int port,
                   const double[::1] target):
        cdef double[MAX_MODES] re
        cdef double[MAX_MODES] im
        cdef double total = 0.0, acc = 0.0, p
        cdef Py_ssize_t j
        with nogil:
            self._run(phases, port, re, im)
            for j in range(self.n_modes):
                total += re[j] * re[j] + im[j] * im[j]
            for j in range(self.n_modes):
                p = (re[j] * re[j] + im[j] * im[j]) / total
                acc += sqrt(p * target[j])
        return 1.0 - acc * acc
