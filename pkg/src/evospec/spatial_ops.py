"""Finite-dimensional spatial operators.

Discrete gradient/divergence pairs on a 1d interval, the skew-adjoint
first-order block built from them, and the range-reduced square gradient
factor used wherever an invertible C with a Poincare-type bound is needed.

The reduction works on the algebraic level: a rectangular difference
stencil D factors as D = Q C with orthonormal Q, and the square
upper-triangular C carries the full quadratic form (C^H C = D^T D when D
is injective).  Its smallest singular value is the sharp discrete
Poincare constant's reciprocal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import json

import numpy as np


class StructureHintViolation(ValueError):
    """A declared structure hint failed numerical verification."""


@dataclass(frozen=True)
class SpatialOperator:
    """Square matrix realization of a spatial operator with verified hints.

    hints may declare ``skew_adjoint`` / ``selfadjoint`` (bools) and
    ``accretive_constant`` (a real lower bound on the Hermitian part).
    Every declared hint is checked at construction time.
    """

    matrix: np.ndarray
    label: str = ""
    hints: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got shape {m.shape}")
        m = np.array(m, copy=True)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        scale = np.linalg.norm(m)
        if self.hints.get("skew_adjoint"):
            if np.linalg.norm(m + m.conj().T) > 1e-12 * scale:
                raise StructureHintViolation("matrix is not skew-adjoint")
        if self.hints.get("selfadjoint"):
            if np.linalg.norm(m - m.conj().T) > 1e-12 * scale:
                raise StructureHintViolation("matrix is not selfadjoint")
        if "accretive_constant" in self.hints:
            c = float(self.hints["accretive_constant"])
            have = accretivity_constant(m)
            if have < c - 1e-10 * max(1.0, scale):
                raise StructureHintViolation(
                    f"declared accretivity {c}, matrix has {have}"
                )

    @property
    def m(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ReducedGradient:
    """Square invertible factor C of a difference stencil.

    sigma_min is the smallest singular value of C; its reciprocal is the
    discrete Poincare constant and bounds ``norm(C^{-1})``.
    """

    C: np.ndarray
    sigma_min: float
    c_inv_norm: float

    def __post_init__(self):
        C = np.asarray(self.C, dtype=np.complex128)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("C must be square")
        C = np.array(C, copy=True)
        C.setflags(write=False)
        object.__setattr__(self, "C", C)
        if not self.sigma_min > 0:
            raise ValueError("sigma_min must be positive")

    @property
    def p(self) -> int:
        return self.C.shape[0]


def _reduce(D: np.ndarray) -> ReducedGradient:
    # injective D: economy QR, C = R made unique by positive diagonal.
    # rank-deficient D: restrict to the row space first so C stays square
    # and invertible
    D = np.asarray(D, dtype=np.complex128)
    rank = np.linalg.matrix_rank(D)
    if rank < D.shape[1]:
        _, _, vh = np.linalg.svd(D, full_matrices=False)
        D = D @ vh[:rank].conj().T
    q, r = np.linalg.qr(D)
    signs = np.sign(np.real(np.diag(r)))
    signs[signs == 0] = 1.0
    C = signs[:, None] * r
    sig = np.linalg.svd(C, compute_uv=False)
    smin = float(sig[-1])
    return ReducedGradient(C=C, sigma_min=smin, c_inv_norm=1.0 / smin)


def build_grad_div_1d(n_cells: int, length: float, bc: str):
    """Staggered first differences on (0, length) and their skew block.

    Returns (D, A, C): the rectangular stencil D, the operator
    A = [[0, -D^T], [D, 0]] with A^H = -A exactly, and the reduced
    square gradient factor C.

    bc = "dirichlet": n_cells interior values, zero boundary values,
    gradient lives on the n_cells+1 intervals of width length/(n_cells+1).
    bc = "neumann": n_cells cell averages, differences on the
    n_cells-1 interior faces, cell width length/n_cells.
    """
    if n_cells < 2 and bc == "neumann":
        raise ValueError("neumann stencil needs n_cells >= 2")
    if n_cells < 1:
        raise ValueError("n_cells must be positive")
    if not length > 0:
        raise ValueError("length must be positive")
    if bc == "dirichlet":
        h = length / (n_cells + 1)
        D = np.zeros((n_cells + 1, n_cells))
        for i in range(n_cells):
            D[i, i] = 1.0 / h
            D[i + 1, i] = -1.0 / h
    elif bc == "neumann":
        h = length / n_cells
        D = np.zeros((n_cells - 1, n_cells))
        for i in range(n_cells - 1):
            D[i, i] = -1.0 / h
            D[i, i + 1] = 1.0 / h
    else:
        raise ValueError(f"unknown bc {bc!r}")
    n, m = D.shape[1], D.shape[0]
    A = np.zeros((n + m, n + m))
    A[:n, n:] = -D.T
    A[n:, :n] = D
    op = SpatialOperator(
        matrix=A,
        label=f"grad_div_1d_{bc}_{n_cells}",
        hints={"skew_adjoint": True},
    )
    return D, op, _reduce(D)


def accretivity_constant(B: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part (B + B^H)/2.

    This is the sharp constant c with Re <Bx|x> >= c |x|^2.
    """
    B = np.asarray(B, dtype=np.complex128)
    herm = (B + B.conj().T) / 2.0
    return float(np.linalg.eigvalsh(herm)[0])


@dataclass(frozen=True)
class MAccretivityCertificate:
    passed: bool
    accretivity: float
    sigma_min_shifted: float
    resolvent_norm: float
    resolvent_bound: float
    resolvent_ok: bool


def is_m_accretive(A: SpatialOperator) -> MAccretivityCertificate:
    """Check accretivity plus bounded invertibility of 1 + A.

    In finite dimension accretive implies m-accretive; the certificate
    still evaluates norm((1+A)^{-1}) and compares it against the
    resolvent bound 1/(1 + max(0, c)).
    """
    c = accretivity_constant(A.matrix)
    shifted = np.eye(A.m) + A.matrix
    sig = np.linalg.svd(shifted, compute_uv=False)
    smin = float(sig[-1])
    res_norm = 1.0 / smin if smin > 0 else np.inf
    bound = 1.0 / (1.0 + max(0.0, c))
    res_ok = res_norm <= bound + 1e-10
    return MAccretivityCertificate(
        passed=(c >= -1e-12 and smin > 0),
        accretivity=c,
        sigma_min_shifted=smin,
        resolvent_norm=res_norm,
        resolvent_bound=bound,
        resolvent_ok=res_ok,
    )


def poincare_constant(C: ReducedGradient) -> float:
    """Sharp discrete constant c with |u| <= c |C u|."""
    return 1.0 / C.sigma_min


def save_operator(op: SpatialOperator, path: str) -> None:
    """Write the operator as a sparse JSON document."""
    entries = []
    m = op.matrix
    rows, cols = np.nonzero(m)
    for r, c in zip(rows.tolist(), cols.tolist()):
        v = m[r, c]
        entries.append([r, c, float(v.real), float(v.imag)])
    doc = {"label": op.label, "m": op.m, "entries": entries, "hints": op.hints}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_operator(path: str) -> SpatialOperator:
    with open(path) as fh:
        doc = json.load(fh)
    m = np.zeros((doc["m"], doc["m"]), dtype=np.complex128)
    for r, c, re, im in doc["entries"]:
        m[r, c] = re + 1j * im
    return SpatialOperator(matrix=m, label=doc["label"], hints=doc["hints"])
