"""Support-restricted CRB matrices, group downdates and oracle estimation.

For a candidate row set restricted to a known transform-domain support, the
covariance of any unbiased estimator is bounded below by the inverse of the
restricted Gram matrix.  This module builds that inverse for the full
candidate set, removes acquisition groups from it via the matrix inversion
lemma (a rank-C "downdate" that only inverts a C x C system), tracks the
trace recursively, and provides the support-aware least-squares estimator
that attains the bound.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .encoding import EncodingModel, group_rows
from .errors import InfeasibleDesignError
from .sparsity import SupportSet, TransformSpec, inverse_transform, restricted_rows

__all__ = [
    "COND_LIMIT",
    "CrbState",
    "GroupBlock",
    "restricted_block",
    "build_full_crb",
    "smw_downdate",
    "downdate_trace",
    "image_domain_crb_trace",
    "oracle_lsq_estimate",
]

# Condition number beyond which a Gram matrix is treated as singular
# (double precision rule of thumb).
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class CrbState:
    """Inverse restricted Gram matrix for one (exemplar, map-set) pair.

    ``inv_gram`` is S x S Hermitian, ``trace`` its real trace,
    ``active_groups`` the group indices still contributing rows, and
    ``cond`` the condition estimate of the underlying Gram matrix.
    """

    inv_gram: np.ndarray
    trace: float
    k: int
    t: int
    active_groups: frozenset[int]
    cond: float


@dataclass(frozen=True, eq=False)
class GroupBlock:
    """Support-restricted rows of one acquisition group, shape (C, S)."""

    b_tilde: np.ndarray
    group_index: int
    t: int
    k: int


def restricted_block(
    model: EncodingModel,
    support: SupportSet,
    spec: TransformSpec,
    group_index: int,
    t: int,
    k: int = 0,
) -> GroupBlock:
    """Build the (C, S) restricted row block of one group."""
    rows = group_rows(model, group_index, t)
    b = restricted_rows(rows, support, spec, model.grid.dims)
    return GroupBlock(b_tilde=b, group_index=group_index, t=t, k=k)


def _hermitian_inverse(gram: np.ndarray):
    """Eigendecomposition-based inverse; returns (inverse, trace, cond).

    Raises :class:`InfeasibleDesignError` when the matrix is singular or
    its condition number exceeds :data:`COND_LIMIT`.
    """
    w, v = np.linalg.eigh(gram)
    wmax = w[-1]
    if wmax <= 0 or w[0] <= 0 or wmax / w[0] > COND_LIMIT:
        cond = np.inf if w[0] <= 0 else wmax / w[0]
        raise InfeasibleDesignError(
            f"restricted Gram is singular or near-singular (cond ~ {cond:.3g})",
            cond=cond,
        )
    inv = (v / w) @ v.conj().T
    inv = 0.5 * (inv + inv.conj().T)
    return inv, float(np.trace(inv).real), float(wmax / w[0])


def build_full_crb(
    model: EncodingModel,
    support: SupportSet,
    spec: TransformSpec,
    t: int,
    k: int = 0,
    groups=None,
) -> CrbState:
    """CRB state for the candidate rows of ``groups`` (default: all groups).

    Accumulates the restricted Gram group by group and inverts it.  Raises
    :class:`InfeasibleDesignError` when the support cannot be identified
    from the given rows (rank deficiency or condition above 1e12).
    """
    cand = model.candidates
    group_list = sorted(range(cand.L)) if groups is None else sorted(groups)
    n_rows = sum(len(cand.groups[g]) for g in group_list)
    if support.S > n_rows:
        raise InfeasibleDesignError(
            f"support size {support.S} exceeds candidate row count {n_rows}"
        )
    s = support.S
    gram = np.zeros((s, s), dtype=complex)
    for g in group_list:
        b = restricted_block(model, support, spec, g, t, k).b_tilde
        gram += b.conj().T @ b
    gram = 0.5 * (gram + gram.conj().T)
    inv, trace, cond = _hermitian_inverse(gram)
    return CrbState(
        inv_gram=inv,
        trace=trace,
        k=k,
        t=t,
        active_groups=frozenset(group_list),
        cond=cond,
    )


def _check_block(state: CrbState, block: GroupBlock):
    if block.group_index not in state.active_groups:
        raise ValueError(f"group {block.group_index} is not active")
    if (block.k, block.t) != (state.k, state.t):
        raise ValueError(
            f"block for (k={block.k}, t={block.t}) applied to state "
            f"(k={state.k}, t={state.t})"
        )


def _downdate_pieces(state: CrbState, block: GroupBlock):
    """G = C B~^H and the C x C middle matrix I - B~ G, plus its spectrum.

    The middle matrix has eigenvalues in [0, 1] in exact arithmetic, so
    near-singularity is tested on an absolute scale.
    """
    g = state.inv_gram @ block.b_tilde.conj().T
    mid = np.eye(block.b_tilde.shape[0], dtype=complex) - block.b_tilde @ g
    mid = 0.5 * (mid + mid.conj().T)
    w = np.linalg.eigvalsh(mid)
    singular = w[0] <= 1.0 / COND_LIMIT
    return g, mid, singular


def smw_downdate(state: CrbState, block: GroupBlock) -> CrbState:
    """CRB state after removing one group, via the matrix inversion lemma.

    Equals re-inversion of the reduced Gram.  Raises
    :class:`InfeasibleDesignError` when removing the group destroys
    identifiability (the C x C system is singular within tolerance).
    """
    _check_block(state, block)
    g, mid, singular = _downdate_pieces(state, block)
    if singular:
        raise InfeasibleDesignError(
            f"removing group {block.group_index} makes the design singular"
        )
    update = g @ np.linalg.solve(mid, g.conj().T)
    inv = state.inv_gram + update
    inv = 0.5 * (inv + inv.conj().T)
    return replace(
        state,
        inv_gram=inv,
        trace=float(np.trace(inv).real),
        active_groups=state.active_groups - {block.group_index},
    )


def downdate_trace(state: CrbState, block: GroupBlock) -> float:
    """Trace of the CRB after removing one group, without the S x S update.

    Returns ``+inf`` when the group is mandatory (its removal makes the
    reduced Gram singular), which lets design loops skip it cheaply.
    """
    _check_block(state, block)
    g, mid, singular = _downdate_pieces(state, block)
    if singular:
        return np.inf
    x = np.linalg.solve(mid, g.conj().T)
    return state.trace + float(np.einsum("ij,ji->", g, x).real)


def image_domain_crb_trace(
    state: CrbState,
    support: SupportSet,
    spec: TransformSpec,
    dims: tuple[int, int],
) -> float:
    """Trace of the voxel-domain CRB matrix, computed explicitly.

    Synthesizes each supported coefficient back to the voxel domain and
    contracts against ``inv_gram``.  For an orthonormal transform this
    equals ``state.trace``; the explicit route makes that a checkable
    dual computation rather than an identity.
    """
    s = support.S
    basis = np.zeros((s, dims[0] * dims[1]), dtype=complex)
    unit = np.zeros(dims[0] * dims[1], dtype=complex)
    for j, idx in enumerate(support.indices):
        unit[:] = 0.0
        unit[idx] = 1.0
        basis[j] = inverse_transform(unit.reshape(dims), spec).ravel()
    # Trace[V^T C conj(V)] with V[j] the synthesized coefficient image.
    w = state.inv_gram @ np.conj(basis)
    return float(np.einsum("sn,sn->", basis, w).real)


def oracle_lsq_estimate(
    data: np.ndarray, rows: np.ndarray, support: SupportSet
) -> np.ndarray:
    """Least-squares coefficient estimate with known support, zero-filled.

    ``rows`` is the (M, S) stacked restricted row matrix actually used for
    acquisition.  The estimator is unbiased for data generated with the
    truth on the support, and its covariance attains the CRB.
    """
    rows = np.asarray(rows)
    if rows.shape[1] != support.S:
        raise ValueError(
            f"rows have {rows.shape[1]} columns, support has size {support.S}"
        )
    sol, _, rank, _ = np.linalg.lstsq(rows, np.asarray(data), rcond=None)
    if rank < support.S:
        raise InfeasibleDesignError(
            f"restricted row matrix is rank deficient ({rank} < {support.S})"
        )
    out = np.zeros(support.q, dtype=complex)
    out[support.indices] = sol
    return out
