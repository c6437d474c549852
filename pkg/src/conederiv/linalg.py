"""Vectors, subspaces and linear maps in the Euclidean norm.

Vectors are plain 1-D float arrays. A :class:`Subspace` stores an orthonormal
basis as the columns of an ``m x k`` matrix; a :class:`LinearMap` stores an
``n x k`` matrix acting on coordinates with respect to that basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

RANK_TOL = 1e-10
ORTHO_TOL = 1e-12


class DimensionMismatch(ValueError):
    pass


def as_vec(u: Any, m: int | None = None) -> np.ndarray:
    """Coerce ``u`` to a finite 1-D float array, optionally of length ``m``."""
    arr = np.asarray(u, dtype=float).reshape(-1)
    if m is not None and arr.shape[0] != m:
        raise DimensionMismatch(f"expected a vector of length {m}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class Subspace:
    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float).reshape(self.ambient_dim, -1)
        if self.ambient_dim < 1:
            raise ValueError("ambient_dim must be positive")
        k = basis.shape[1]
        if k > self.ambient_dim:
            raise ValueError("more basis vectors than ambient dimensions")
        if k and not np.allclose(basis.T @ basis, np.eye(k), rtol=0.0, atol=ORTHO_TOL):
            raise ValueError("basis columns are not orthonormal")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def full(cls, m: int) -> Subspace:
        return cls(m, np.eye(m))

    @classmethod
    def zero(cls, m: int) -> Subspace:
        return cls(m, np.zeros((m, 0)))

    @classmethod
    def span(cls, vectors: Sequence[Any], ambient_dim: int | None = None) -> Subspace:
        return orthonormalize(vectors, ambient_dim)

    def coords(self, u: Any) -> np.ndarray:
        """Coordinates of the projection of ``u`` in this basis."""
        return self.basis.T @ as_vec(u, self.ambient_dim)

    def project(self, u: Any) -> np.ndarray:
        return project(self, u)

    def dist(self, u: Any) -> float:
        return dist_to_subspace(self, u)

    def complement(self) -> Subspace:
        """Orthogonal complement, with a deterministic basis."""
        m, k = self.ambient_dim, self.dim
        if k == 0:
            return Subspace.full(m)
        if k == m:
            return Subspace.zero(m)
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return orthonormalize(list(u[:, k:].T), m)

    def contains(self, u: Any, tol: float = 1e-9) -> bool:
        u = as_vec(u, self.ambient_dim)
        return dist_to_subspace(self, u) <= tol * max(1.0, float(np.linalg.norm(u)))

    def to_dict(self) -> dict:
        return {"ambient_dim": self.ambient_dim, "basis": self.basis.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> Subspace:
        m = int(data["ambient_dim"])
        basis = np.asarray(data.get("basis", []), dtype=float)
        if basis.size == 0:
            return cls.zero(m)
        return cls(m, basis.reshape(m, -1))


@dataclass(frozen=True, eq=False)
class LinearMap:
    """A linear map on ``domain`` given by its matrix over the domain's basis."""

    domain: Subspace
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim == 1:
            mat = mat.reshape(-1, self.domain.dim) if self.domain.dim else mat.reshape(-1, 0)
        if mat.ndim != 2 or mat.shape[1] != self.domain.dim:
            raise DimensionMismatch(
                f"matrix shape {mat.shape} incompatible with domain of dimension {self.domain.dim}"
            )
        if not np.all(np.isfinite(mat)):
            raise ValueError("linear map has non-finite entries")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def zero(cls, domain: Subspace, n: int) -> LinearMap:
        return cls(domain, np.zeros((n, domain.dim)))

    @classmethod
    def from_ambient(cls, domain: Subspace, jacobian: Any) -> LinearMap:
        """Restrict an ``n x m`` ambient matrix to ``domain``."""
        jac = np.atleast_2d(np.asarray(jacobian, dtype=float))
        return cls(domain, jac @ domain.basis)

    def apply_coords(self, c: Any) -> np.ndarray:
        return self.matrix @ np.asarray(c, dtype=float)

    def apply(self, u: Any) -> np.ndarray:
        """Action on an ambient vector; ``u`` is assumed to lie in the domain."""
        return self.matrix @ self.domain.coords(u)

    def ambient_matrix(self) -> np.ndarray:
        """The ``n x m`` matrix ``L P_V`` in ambient coordinates."""
        return self.matrix @ self.domain.basis.T

    def image(self) -> Subspace:
        return orthonormalize(list(self.matrix.T), self.out_dim)

    def to_dict(self) -> dict:
        return {
            "ambient_dim": self.domain.ambient_dim,
            "basis": self.domain.basis.tolist(),
            "matrix": self.matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> LinearMap:
        domain = Subspace.from_dict(data)
        matrix = np.asarray(data["matrix"], dtype=float)
        if matrix.size == 0:
            matrix = np.zeros((len(data["matrix"]), domain.dim))
        return cls(domain, matrix)


def orthonormalize(spanning_vectors: Iterable[Any], ambient_dim: int | None = None) -> Subspace:
    """Orthonormal basis of the span, dropping directions below ``RANK_TOL``.

    Uses an SVD so that rank-deficient inputs reduce to the numerical rank.
    """
    vecs = [np.asarray(v, dtype=float).reshape(-1) for v in spanning_vectors]
    if not vecs:
        if ambient_dim is None:
            raise ValueError("ambient_dim is required for an empty span")
        return Subspace.zero(ambient_dim)
    m = vecs[0].shape[0] if ambient_dim is None else ambient_dim
    if any(v.shape[0] != m for v in vecs):
        raise DimensionMismatch("spanning vectors have different lengths")
    a = np.column_stack(vecs)
    if not np.all(np.isfinite(a)):
        raise ValueError("spanning vectors have non-finite entries")
    u, sv, _ = np.linalg.svd(a, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return Subspace.zero(m)
    rank = int(np.sum(sv > RANK_TOL * max(1.0, sv[0])))
    basis = u[:, :rank]
    # Deterministic orientation: largest-magnitude entry of each column positive.
    for j in range(rank):
        i = int(np.argmax(np.abs(basis[:, j])))
        if basis[i, j] < 0:
            basis[:, j] = -basis[:, j]
    # Re-orthonormalize to push the Gram error down to rounding level.
    if rank:
        q, r = np.linalg.qr(basis)
        q = q * np.sign(np.diag(r))
        basis = q
    return Subspace(m, basis)


def project(V: Subspace, u: Any) -> np.ndarray:
    u = as_vec(u, V.ambient_dim)
    return V.basis @ (V.basis.T @ u)


def dist_to_subspace(V: Subspace, u: Any) -> float:
    u = as_vec(u, V.ambient_dim)
    return float(np.linalg.norm(u - V.basis @ (V.basis.T @ u)))


def operator_norm(L: LinearMap) -> float:
    if L.matrix.size == 0:
        return 0.0
    return float(np.linalg.norm(L.matrix, 2))


def min_gain(L: LinearMap) -> float:
    """Smallest singular value over the domain; positive iff ``L`` is injective."""
    k = L.domain.dim
    if k == 0:
        return 0.0
    if L.out_dim < k:
        return 0.0
    return float(np.linalg.svd(L.matrix, compute_uv=False)[-1])
