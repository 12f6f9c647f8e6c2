"""
Per-point algebra of the ideal FDM Lagrangian in packed form.

    L(U, D) = U . M D + 1/2 D . B : (U (x) U) + 1/2 (U - Ubar) . a (U - Ubar)

U packs the primal point (13 slots) and D the dual gradients (51 slots); the
constant tables M (13 x 51) and B (51 x 13 x 13, symmetric in its last two
slots) are assembled once from the Lagrangian

    - v_i d_t lam_i - (v_i v_j - alpha_ki alpha_kj + p delta_ij) d_j lam_i
    - v_i d_i mu - alpha_ij d_t A_ij - e_pjr e_pms alpha_im v_s d_r A_ij

Indices are 0-based in code and 1-based in comments. All batched functions
take point-major arrays: U of shape (P, 13), D of shape (P, 51).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse
from cachetools import cached

# ---- slot layout -----------------------------------------------------------

U_SIZE = 13
D_SIZE = 51

V_SLOTS = (0, 1, 2)
P_SLOT = 12


def alpha_slot(i: int, j: int) -> int:
    return 3 + 3 * i + j


def dt_lambda_slot(i: int) -> int:
    return i


def grad_lambda_slot(i: int, j: int) -> int:
    """G_ij = d_j lam_i."""
    return 3 + 3 * i + j


def grad_mu_slot(i: int) -> int:
    return 12 + i


def dt_a_slot(i: int, j: int) -> int:
    return 15 + 3 * i + j


def grad_a_slot(i: int, j: int, r: int) -> int:
    """H_ijr = d_r A_ij, r fastest."""
    return 24 + 9 * i + 3 * j + r


DT_LAMBDA = slice(0, 3)
GRAD_LAMBDA = slice(3, 12)
GRAD_MU = slice(12, 15)
DT_A = slice(15, 24)
GRAD_A = slice(24, 51)


def u_slot_name(slot: int) -> str:
    if slot < 3:
        return f"v{slot + 1}"
    if slot == P_SLOT:
        return "p"
    i, j = divmod(slot - 3, 3)
    return f"alpha{i + 1}{j + 1}"


def d_slot_name(slot: int) -> str:
    if slot < 3:
        return f"dt_lambda{slot + 1}"
    if slot < 12:
        i, j = divmod(slot - 3, 3)
        return f"G{i + 1}{j + 1}"
    if slot < 15:
        return f"grad_mu{slot - 11}"
    if slot < 24:
        i, j = divmod(slot - 15, 3)
        return f"dt_A{i + 1}{j + 1}"
    i, rest = divmod(slot - 24, 9)
    j, r = divmod(rest, 3)
    return f"H{i + 1}{j + 1}{r + 1}"


def levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    return eps


EPS = levi_civita()


# ---- packing ---------------------------------------------------------------

def pack_u(v: np.ndarray, alpha: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Pack point-major (..., 3), (..., 3, 3), (...) into (..., 13)."""
    lead = np.shape(p)
    out = np.empty(lead + (U_SIZE,))
    out[..., 0:3] = v
    out[..., 3:12] = np.reshape(alpha, lead + (9,))
    out[..., 12] = p
    return out


def unpack_u(U: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lead = U.shape[:-1]
    return U[..., 0:3].copy(), U[..., 3:12].reshape(lead + (3, 3)).copy(), U[..., 12].copy()


def pack_d(
    dt_lambda: np.ndarray, grad_lambda: np.ndarray, grad_mu: np.ndarray, dt_a: np.ndarray, grad_a: np.ndarray
) -> np.ndarray:
    """Pack (..., 3), (..., 3, 3), (..., 3), (..., 3, 3), (..., 3, 3, 3) into (..., 51)."""
    lead = np.shape(dt_lambda)[:-1]
    out = np.empty(lead + (D_SIZE,))
    out[..., DT_LAMBDA] = dt_lambda
    out[..., GRAD_LAMBDA] = np.reshape(grad_lambda, lead + (9,))
    out[..., GRAD_MU] = grad_mu
    out[..., DT_A] = np.reshape(dt_a, lead + (9,))
    out[..., GRAD_A] = np.reshape(grad_a, lead + (27,))
    return out


def unpack_d(D: np.ndarray) -> tuple[np.ndarray, ...]:
    lead = D.shape[:-1]
    return (
        D[..., DT_LAMBDA].copy(),
        D[..., GRAD_LAMBDA].reshape(lead + (3, 3)).copy(),
        D[..., GRAD_MU].copy(),
        D[..., DT_A].reshape(lead + (3, 3)).copy(),
        D[..., GRAD_A].reshape(lead + (3, 3, 3)).copy(),
    )


def diagonal_a(a_v: float, a_alpha: float, a_p: float) -> np.ndarray:
    """The 13-vector diagonal of the quadratic potential."""
    return np.array([a_v] * 3 + [a_alpha] * 9 + [a_p], dtype=np.float64)


# ---- tables ----------------------------------------------------------------

@dataclass(frozen=True)
class OperatorTables:
    """
    Constant tables M and B as triplets.

    m_entries rows are (I, Gamma, value); b_entries rows are (Gamma, J, K, value)
    with every off-diagonal (J, K) entry stored together with its mirror.
    """

    m_entries: tuple[tuple[int, int, float], ...]
    b_entries: tuple[tuple[int, int, int, float], ...]

    @cached_property
    def M(self) -> scipy.sparse.csr_array:
        rows, cols, vals = zip(*self.m_entries)
        return scipy.sparse.csr_array((vals, (rows, cols)), shape=(U_SIZE, D_SIZE))

    @cached_property
    def B_flat(self) -> scipy.sparse.csr_array:
        """B reshaped to (51, 169) with column J * 13 + K."""
        gamma, j, k, vals = zip(*self.b_entries)
        cols = np.asarray(j) * U_SIZE + np.asarray(k)
        return scipy.sparse.csr_array((vals, (gamma, cols)), shape=(D_SIZE, U_SIZE * U_SIZE))

    @cached_property
    def B_flat_t(self) -> scipy.sparse.csr_array:
        return self.B_flat.T.tocsr()

    @cached_property
    def M_t(self) -> scipy.sparse.csr_array:
        return self.M.T.tocsr()

    @property
    def M_dense(self) -> np.ndarray:
        return self.M.toarray()

    @property
    def B_dense(self) -> np.ndarray:
        return self.B_flat.toarray().reshape(D_SIZE, U_SIZE, U_SIZE)

    def is_symmetric(self) -> bool:
        B = self.B_dense
        return bool(np.array_equal(B, np.swapaxes(B, 1, 2)))

    def with_entry_offset(self, gamma: int, j: int, k: int, delta: float) -> "OperatorTables":
        """Copy with B[gamma; j, k] and its mirror shifted by delta (fault injection)."""
        entries = list(self.b_entries) + [(gamma, j, k, delta)]
        if j != k:
            entries.append((gamma, k, j, delta))
        return OperatorTables(m_entries=self.m_entries, b_entries=tuple(entries))


def assemble_M() -> tuple[tuple[int, int, float], ...]:
    """Nonzeros of M read off the linear terms of the Lagrangian (18 entries)."""
    entries: list[tuple[int, int, float]] = []
    for i in range(3):
        entries.append((V_SLOTS[i], dt_lambda_slot(i), -1.0))       # -v_i d_t lam_i
        entries.append((V_SLOTS[i], grad_mu_slot(i), -1.0))         # -v_i d_i mu
        entries.append((P_SLOT, grad_lambda_slot(i, i), -1.0))      # -p delta_ij d_j lam_i
    for i in range(3):
        for j in range(3):
            entries.append((alpha_slot(i, j), dt_a_slot(i, j), -1.0))  # -alpha_ij d_t A_ij
    return tuple(entries)


def assemble_B() -> tuple[tuple[int, int, int, float], ...]:
    """
    Nonzeros of B so that 1/2 D . B : (U (x) U) is the quadratic part of the Lagrangian.
    """
    dense = np.zeros((D_SIZE, U_SIZE, U_SIZE))

    for i in range(3):
        for j in range(3):
            g = grad_lambda_slot(i, j)
            # -v_i v_j G_ij
            dense[g, V_SLOTS[i], V_SLOTS[j]] += -1.0
            dense[g, V_SLOTS[j], V_SLOTS[i]] += -1.0
            # +alpha_ki alpha_kj G_ij
            for k in range(3):
                dense[g, alpha_slot(k, i), alpha_slot(k, j)] += 1.0
                dense[g, alpha_slot(k, j), alpha_slot(k, i)] += 1.0

    # -e_pjr e_pms alpha_im v_s H_ijr
    contraction = np.einsum("pjr,pms->jrms", EPS, EPS)
    for i in range(3):
        for j in range(3):
            for r in range(3):
                h = grad_a_slot(i, j, r)
                for m in range(3):
                    for s in range(3):
                        c = -contraction[j, r, m, s]
                        if c == 0.0:
                            continue
                        dense[h, alpha_slot(i, m), V_SLOTS[s]] += c
                        dense[h, V_SLOTS[s], alpha_slot(i, m)] += c

    gamma, j_idx, k_idx = np.nonzero(dense)
    return tuple(
        (int(g), int(j), int(k), float(dense[g, j, k])) for g, j, k in zip(gamma, j_idx, k_idx)
    )


@cached(cache={})
def default_tables() -> OperatorTables:
    """The ideal FDM tables, assembled once per process."""
    return OperatorTables(m_entries=assemble_M(), b_entries=assemble_B())


# ---- evaluation ------------------------------------------------------------

def _as_points(x: np.ndarray, size: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(-1, size)


def linear_term(U: np.ndarray, D: np.ndarray, tables: OperatorTables) -> np.ndarray:
    """U . M D per point."""
    U = _as_points(U, U_SIZE)
    D = _as_points(D, D_SIZE)
    return np.sum((tables.M_t @ U.T).T * D, axis=1)


def outer_flat(U: np.ndarray) -> np.ndarray:
    return (U[:, :, None] * U[:, None, :]).reshape(U.shape[0], U_SIZE * U_SIZE)


def quadratic_term(U: np.ndarray, D: np.ndarray, tables: OperatorTables) -> np.ndarray:
    """1/2 D . B : (U (x) U) per point."""
    U = _as_points(U, U_SIZE)
    D = _as_points(D, D_SIZE)
    return 0.5 * np.sum((tables.B_flat @ outer_flat(U).T).T * D, axis=1)


def lagrangian_packed(
    U: np.ndarray, D: np.ndarray, U_bar: np.ndarray, a: np.ndarray, tables: OperatorTables | None = None
) -> np.ndarray:
    """Packed Lagrangian per point (scalar input gives a length-1 array)."""
    tables = tables or default_tables()
    U = _as_points(U, U_SIZE)
    shift = U - _as_points(U_bar, U_SIZE)
    return linear_term(U, D, tables) + quadratic_term(U, D, tables) + 0.5 * np.sum(a * shift * shift, axis=1)


def lagrangian_direct(U: np.ndarray, D: np.ndarray, U_bar: np.ndarray, a: np.ndarray) -> np.ndarray:
    """The Lagrangian summed term by term from its defining expression."""
    U = _as_points(U, U_SIZE)
    D = _as_points(D, D_SIZE)
    v, alpha, p = unpack_u(U)
    dt_lambda, G, grad_mu, dt_A, H = unpack_d(D)

    flux = np.einsum("ni,nj->nij", v, v) - np.einsum("nki,nkj->nij", alpha, alpha)
    flux = flux + p[:, None, None] * np.eye(3)[None]

    value = (
        -np.einsum("ni,ni->n", v, dt_lambda)
        - np.einsum("nij,nij->n", flux, G)
        - np.einsum("ni,ni->n", v, grad_mu)
        - np.einsum("nij,nij->n", alpha, dt_A)
        - np.einsum("pjr,pms,nim,ns,nijr->n", EPS, EPS, alpha, v, H)
    )
    shift = U - _as_points(U_bar, U_SIZE)
    return value + 0.5 * np.sum(a * shift * shift, axis=1)


def K_flat(D: np.ndarray, a: np.ndarray, tables: OperatorTables) -> np.ndarray:
    """K = diag(a) + D . B per point, shape (P, 13, 13)."""
    D = _as_points(D, D_SIZE)
    K = (tables.B_flat_t @ D.T).T.reshape(-1, U_SIZE, U_SIZE)
    K[:, np.arange(U_SIZE), np.arange(U_SIZE)] += a
    return K


def K_at(D: np.ndarray, a: np.ndarray, tables: OperatorTables | None = None) -> np.ndarray:
    """The 13 x 13 matrix K at one point (or a stack for point-major input)."""
    tables = tables or default_tables()
    D = np.asarray(D, dtype=np.float64)
    K = K_flat(D, a, tables)
    return K[0] if D.ndim == 1 else K


def envelope_dL_dD(U: np.ndarray, tables: OperatorTables | None = None) -> np.ndarray:
    """dL/dD at fixed U: U_I M_IG + 1/2 B_GJK U_J U_K, shape matching the input."""
    tables = tables or default_tables()
    U = np.asarray(U, dtype=np.float64)
    points = _as_points(U, U_SIZE)
    out = (tables.M_t @ points.T).T + 0.5 * (tables.B_flat @ outer_flat(points).T).T
    return out[0] if U.ndim == 1 else out


def coupling(U: np.ndarray, D: np.ndarray, tables: OperatorTables) -> np.ndarray:
    """(M_IG + B_GIK U_K) D_G per point: the D-linear part of dL/dU at U."""
    U = _as_points(U, U_SIZE)
    D = _as_points(D, D_SIZE)
    KB = (tables.B_flat_t @ D.T).T.reshape(-1, U_SIZE, U_SIZE)
    return (tables.M @ D.T).T + np.einsum("nij,nj->ni", KB, U)


def coupling_transpose(U: np.ndarray, W: np.ndarray, tables: OperatorTables) -> np.ndarray:
    """(M_IG + B_GIK U_K) W_I per point: maps a U-space vector back to D-space."""
    U = _as_points(U, U_SIZE)
    W = _as_points(W, U_SIZE)
    UW = (W[:, :, None] * U[:, None, :]).reshape(U.shape[0], U_SIZE * U_SIZE)
    return (tables.M_t @ W.T).T + (tables.B_flat @ UW.T).T
