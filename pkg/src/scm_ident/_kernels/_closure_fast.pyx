#cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled closure and enumeration kernels.

Fast twin of :mod:`scm_ident._kernels.pure`; both backends expose the same
functions with identical semantics and the test suite cross-checks their
outputs. See the pure module for the matrix encoding convention.
"""

from cpython.mem cimport PyMem_Free, PyMem_Malloc
from libc.stdint cimport uint32_t, uint64_t
from libc.string cimport memset

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #define SCM_POPCOUNT64(x) __builtin_popcountll(x)
    #else
    static int SCM_POPCOUNT64(unsigned long long x)
    { int c = 0; while (x) { x &= x - 1; c++; } return c; }
    #endif
    """
    int SCM_POPCOUNT64(unsigned long long x) nogil

BACKEND_NAME = "fast"

# Union-of-column-classes argument bounds the family by 2**min(n, 2**m);
# for the enumerable range (m * n <= 20) that is at most 64. Kept generous.
DEF MAX_FAMILY = 4096
# m * n <= 30 also keeps the epoch counter below uint32 range (one epoch
# per matrix) and the stamp table below 16 MiB.
DEF MAX_DIM = 22


def closure_members(parent_masks, int n):
    """Subtraction closure of the seed family, as masks in insertion order.

    Same contract as the pure backend: seeds are the empty set, the
    universal set and the per-task parent sets; the family is closed under
    both directions of pairwise subtraction.
    """
    if n < 1 or n > 64:
        raise ValueError(f"latent count must be in 1..64, got {n}")
    cdef uint64_t universal
    if n == 64:
        universal = <uint64_t>0xFFFFFFFFFFFFFFFF
    else:
        universal = (<uint64_t>1 << n) - 1
    members = [0, int(universal)]
    seen = {0, int(universal)}
    cdef uint64_t x, y, d1, d2
    cdef Py_ssize_t i, j
    for mask in parent_masks:
        value = int(mask)
        if value not in seen:
            seen.add(value)
            members.append(value)
    i = 0
    while i < len(members):
        x = <uint64_t>(<object>members[i])
        for j in range(i):
            y = <uint64_t>(<object>members[j])
            d1 = x & ~y
            d2 = y & ~x
            if int(d1) not in seen:
                seen.add(int(d1))
                members.append(int(d1))
            if int(d2) not in seen:
                seen.add(int(d2))
                members.append(int(d2))
        i += 1
    return members


def audit_shape(int m, int n):
    """Decide every binary m x n adjacency three independent ways.

    Returns ``(total, identifiable, closure_vs_agreement,
    agreement_vs_distinct)``; see the pure backend for the definitions.
    """
    if m < 1 or n < 1:
        raise ValueError("matrix dimensions must be positive")
    if m > MAX_DIM or n > MAX_DIM or m * n > 30:
        raise ValueError(f"shape {m}x{n} exceeds the enumerable range")

    cdef uint64_t total = <uint64_t>1 << (m * n)
    cdef uint64_t row_field = (<uint64_t>1 << n) - 1
    cdef uint64_t universal = row_field
    cdef Py_ssize_t table_size = (<Py_ssize_t>1) << n

    # Membership of a mask in the current family is stamp[mask] == epoch;
    # bumping the epoch clears the table in O(1) between matrices.
    cdef uint32_t* stamp = <uint32_t*>PyMem_Malloc(table_size * sizeof(uint32_t))
    if stamp == NULL:
        raise MemoryError()
    memset(stamp, 0, table_size * sizeof(uint32_t))

    cdef uint64_t family[MAX_FAMILY]
    cdef uint64_t rows[MAX_DIM]
    cdef uint64_t cols[MAX_DIM]
    cdef uint32_t epoch = 0
    cdef uint64_t enc, x, y, d, col
    cdef Py_ssize_t count, i, j, k, jp
    cdef int found, same
    cdef bint agreement_ok, distinct_ok, closure_ok
    cdef uint64_t identifiable = 0

    closure_vs_agreement = []
    agreement_vs_distinct = []

    try:
        for enc in range(total):
            for k in range(m):
                rows[k] = (enc >> (k * n)) & row_field

            # column-agreement decider: any pair agreeing on every task?
            for j in range(n):
                col = 0
                for k in range(m):
                    col |= ((rows[k] >> j) & 1) << k
                cols[j] = col
            agreement_ok = True
            for j in range(n):
                for jp in range(j + 1, n):
                    same = m - SCM_POPCOUNT64(cols[j] ^ cols[jp])
                    if same == m:
                        agreement_ok = False
                        break
                if not agreement_ok:
                    break

            # direct column distinctness
            distinct_ok = True
            for j in range(n):
                for jp in range(j + 1, n):
                    if cols[j] == cols[jp]:
                        distinct_ok = False
                        break
                if not distinct_ok:
                    break

            # closure decider with early exit on full singleton coverage
            epoch += 1
            count = 0
            found = 0
            for k in range(-2, m):
                if k == -2:
                    x = 0
                elif k == -1:
                    x = universal
                else:
                    x = rows[k]
                if stamp[x] != epoch:
                    stamp[x] = epoch
                    family[count] = x
                    count += 1
                    if x != 0 and (x & (x - 1)) == 0:
                        found += 1
            closure_ok = found == n
            i = 0
            while not closure_ok and i < count:
                x = family[i]
                for j in range(i):
                    y = family[j]
                    if count >= MAX_FAMILY - 2:
                        raise RuntimeError("closure family overflow")
                    d = x & ~y
                    if stamp[d] != epoch:
                        stamp[d] = epoch
                        family[count] = d
                        count += 1
                        if d != 0 and (d & (d - 1)) == 0:
                            found += 1
                    d = y & ~x
                    if stamp[d] != epoch:
                        stamp[d] = epoch
                        family[count] = d
                        count += 1
                        if d != 0 and (d & (d - 1)) == 0:
                            found += 1
                if found == n:
                    closure_ok = True
                i += 1

            if agreement_ok:
                identifiable += 1
            if closure_ok != agreement_ok:
                closure_vs_agreement.append(int(enc))
            if agreement_ok != distinct_ok:
                agreement_vs_distinct.append(int(enc))
    finally:
        PyMem_Free(stamp)

    return int(total), int(identifiable), closure_vs_agreement, agreement_vs_distinct
