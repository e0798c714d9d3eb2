"""Pure-Python closure and enumeration kernels.

This is the fallback backend; ``scm_ident._kernels._closure_fast`` is the
compiled twin with identical semantics. Keep the two in lockstep — the
test suite cross-checks them output-for-output.

Matrix encoding used by :func:`audit_shape`: an m x n binary adjacency is
packed into an integer with bit ``k * n + j`` holding entry ``(k, j)``.
"""

BACKEND_NAME = "pure"


def closure_members(parent_masks, n: int) -> list[int]:
    """Subtraction closure of the seed family, as masks in insertion order.

    Seeds are the empty set, the universal set over ``n`` latents, and one
    parent set per task. The family is then closed under both directions
    of pairwise set subtraction until a fixpoint; the fixpoint is unique,
    so insertion order affects only the ordering of the result.
    """
    universal = (1 << n) - 1
    members = [0, universal]
    seen = {0, universal}
    for mask in parent_masks:
        mask = int(mask)
        if mask not in seen:
            seen.add(mask)
            members.append(mask)
    i = 0
    while i < len(members):
        x = members[i]
        for j in range(i):
            y = members[j]
            for d in (x & ~y, y & ~x):
                if d not in seen:
                    seen.add(d)
                    members.append(d)
        i += 1
    return members


def _closure_has_all_singletons(row_masks, n: int) -> bool:
    """Closure decider with early exit once every singleton is present."""
    universal = (1 << n) - 1
    members = [0, universal]
    seen = {0, universal}
    found = 1 if n == 1 else 0  # universal set is the singleton when n == 1
    for mask in row_masks:
        if mask not in seen:
            seen.add(mask)
            members.append(mask)
            if mask and (mask & (mask - 1)) == 0:
                found += 1
    if found == n:
        return True
    i = 0
    while i < len(members):
        x = members[i]
        for j in range(i):
            y = members[j]
            for d in (x & ~y, y & ~x):
                if d not in seen:
                    seen.add(d)
                    members.append(d)
                    if d and (d & (d - 1)) == 0:
                        found += 1
                        if found == n:
                            return True
        i += 1
    return False


def audit_shape(m: int, n: int):
    """Decide every binary m x n adjacency three independent ways.

    Per matrix: (a) the closure decider, (b) the pairwise column-agreement
    decider (agreement count equal to m for some pair means a violation),
    and (c) direct column-distinctness. Returns ``(total, identifiable,
    closure_vs_agreement, agreement_vs_distinct)`` where the last two are
    lists of encodings of disagreeing matrices (both empty in a correct
    build).
    """
    total = 1 << (m * n)
    row_field = (1 << n) - 1
    closure_vs_agreement = []
    agreement_vs_distinct = []
    identifiable = 0
    for enc in range(total):
        rows = [(enc >> (k * n)) & row_field for k in range(m)]
        cols = [
            sum(((rows[k] >> j) & 1) << k for k in range(m))
            for j in range(n)
        ]
        agreement_ok = True
        for j in range(n):
            for jp in range(j + 1, n):
                same = m - (cols[j] ^ cols[jp]).bit_count()
                if same == m:
                    agreement_ok = False
                    break
            if not agreement_ok:
                break
        distinct_ok = len(set(cols)) == n
        closure_ok = _closure_has_all_singletons(rows, n)
        if agreement_ok:
            identifiable += 1
        if closure_ok != agreement_ok:
            closure_vs_agreement.append(enc)
        if agreement_ok != distinct_ok:
            agreement_vs_distinct.append(enc)
    return total, identifiable, closure_vs_agreement, agreement_vs_distinct
