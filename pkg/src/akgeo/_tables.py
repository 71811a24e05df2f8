"""Combinatorial tables for exterior algebra on a 4-dimensional coordinate frame.

Form components are stored on strictly increasing index tuples (0-based).
Component order for each degree is lexicographic:

    degree 1: (0,) (1,) (2,) (3,)
    degree 2: (0,1) (0,2) (0,3) (1,2) (1,3) (2,3)
    degree 3: (0,1,2) (0,1,3) (0,2,3) (1,2,3)

All tables below are built once at import time.
"""

from itertools import combinations

DIM = 4

#: increasing index tuples per degree
INC = {p: tuple(combinations(range(DIM), p)) for p in range(DIM + 1)}

#: number of components per degree
NCOMP = {p: len(INC[p]) for p in range(DIM + 1)}

#: tuple -> component position, per degree
POS = {p: {t: i for i, t in enumerate(INC[p])} for p in range(DIM + 1)}


def perm_sign(seq):
    """Sign of the permutation sorting ``seq``; 0 if it has repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _build_d_table(p):
    """(d psi)_K = sum_j sign * d_axis psi_I  for increasing (p+1)-tuples K.

    Returns, per output component, a list of (sign, axis, in_comp) with
    sign = (-1)^position of the axis inside K.
    """
    table = []
    for K in INC[p + 1]:
        terms = []
        for pos, axis in enumerate(K):
            I = tuple(i for i in K if i != axis)
            terms.append(((-1) ** pos, axis, POS[p][I]))
        table.append(terms)
    return table


#: derivative assembly, D_TABLE[p][out_comp] -> [(sign, axis, in_comp)]
D_TABLE = {p: _build_d_table(p) for p in range(DIM)}


def _build_wedge_table(p, q):
    """(a ^ b)_K = sum sign * a_I b_J over disjoint I, J with I u J = K."""
    table = []
    for i, I in enumerate(INC[p]):
        for j, J in enumerate(INC[q]):
            if set(I) & set(J):
                continue
            K = tuple(sorted(I + J))
            table.append((POS[p + q][K], perm_sign(I + J), i, j))
    return table


#: wedge assembly for degree pairs with p + q <= 4
WEDGE = {
    (p, q): _build_wedge_table(p, q)
    for p in range(DIM + 1)
    for q in range(DIM + 1)
    if p + q <= DIM
}

#: complement data: COMPL[p][comp] = (complement comp in degree 4-p, epsilon sign)
COMPL = {}
for p in range(DIM + 1):
    entries = []
    for I in INC[p]:
        J = tuple(i for i in range(DIM) if i not in I)
        entries.append((POS[DIM - p][J], perm_sign(I + J)))
    COMPL[p] = tuple(entries)
