# cython: language_level=3
"""Compiled kernels for small dense statevectors (same contract as _kernels_py)."""
import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy

cnp.import_array()


cdef inline cnp.ndarray _as_c128(cnp.ndarray a):
    # the common case (contiguous complex128) costs nothing
    if cnp.PyArray_TYPE(a) == cnp.NPY_COMPLEX128 and cnp.PyArray_IS_C_CONTIGUOUS(a):
        return a
    return np.ascontiguousarray(a, dtype=np.complex128)


cdef void _offsets(int num_qubits, tuple targets, Py_ssize_t* offs, Py_ssize_t* mask):
    cdef int k = len(targets)
    cdef Py_ssize_t j, t, bit
    mask[0] = 0
    for t in range(k):
        mask[0] |= (<Py_ssize_t>1) << (num_qubits - 1 - <int>targets[t])
    for j in range(1 << k):
        offs[j] = 0
        for t in range(k):
            bit = (j >> (k - 1 - t)) & 1
            if bit:
                offs[j] |= (<Py_ssize_t>1) << (num_qubits - 1 - <int>targets[t])


cdef int _shifts(int num_qubits, tuple targets, int* shifts) except -1:
    cdef int k = len(targets)
    cdef int t
    if k > 8:
        raise ValueError("at most 8 target qubits")
    for t in range(k):
        shifts[t] = num_qubits - 1 - <int>targets[t]
    return k


def apply_matrix(cnp.ndarray amps_in, int num_qubits, tuple targets, cnp.ndarray matrix_in):
    cdef int k = len(targets)
    if k < 1 or k > 3:
        raise ValueError("kernel supports 1 to 3 target qubits")
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << num_qubits
    cdef Py_ssize_t sub = (<Py_ssize_t>1) << k
    cdef Py_ssize_t offs[8]
    cdef Py_ssize_t mask
    cdef double complex buf[8]
    cdef double complex acc
    cdef Py_ssize_t base, r, c
    cdef cnp.ndarray src = _as_c128(amps_in)
    cdef cnp.ndarray mat = _as_c128(matrix_in)
    cdef const double complex* amps = <const double complex*>cnp.PyArray_DATA(src)
    cdef const double complex* m = <const double complex*>cnp.PyArray_DATA(mat)
    cdef cnp.ndarray out_arr = np.empty(dim, dtype=np.complex128)
    cdef double complex* out = <double complex*>cnp.PyArray_DATA(out_arr)
    memcpy(out, amps, dim * sizeof(double complex))
    _offsets(num_qubits, targets, offs, &mask)
    for base in range(dim):
        if base & mask:
            continue
        for c in range(sub):
            buf[c] = amps[base | offs[c]]
        for r in range(sub):
            acc = 0
            for c in range(sub):
                acc = acc + m[r * sub + c] * buf[c]
            out[base | offs[r]] = acc
    return out_arr


def marginal_probabilities(cnp.ndarray amps_in, int num_qubits, tuple targets):
    cdef int shifts[8]
    cdef int k = _shifts(num_qubits, targets, shifts)
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << num_qubits
    cdef Py_ssize_t i, t, idx
    cdef double complex a
    cdef cnp.ndarray src = _as_c128(amps_in)
    cdef const double complex* amps = <const double complex*>cnp.PyArray_DATA(src)
    cdef cnp.ndarray probs_arr = np.zeros((<Py_ssize_t>1) << k, dtype=np.float64)
    cdef double* probs = <double*>cnp.PyArray_DATA(probs_arr)
    for i in range(dim):
        a = amps[i]
        if a.real == 0 and a.imag == 0:
            continue
        idx = 0
        for t in range(k):
            idx = (idx << 1) | ((i >> shifts[t]) & 1)
        probs[idx] += a.real * a.real + a.imag * a.imag
    return probs_arr


def project(cnp.ndarray amps_in, int num_qubits, tuple targets, Py_ssize_t outcome):
    cdef int shifts[8]
    cdef int k = _shifts(num_qubits, targets, shifts)
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << num_qubits
    cdef Py_ssize_t i, t, idx
    cdef cnp.ndarray src = _as_c128(amps_in)
    cdef const double complex* amps = <const double complex*>cnp.PyArray_DATA(src)
    cdef cnp.ndarray out_arr = np.zeros(dim, dtype=np.complex128)
    cdef double complex* out = <double complex*>cnp.PyArray_DATA(out_arr)
    for i in range(dim):
        idx = 0
        for t in range(k):
            idx = (idx << 1) | ((i >> shifts[t]) & 1)
        if idx == outcome:
            out[i] = amps[i]
    return out_arr
