"""Dense operator core on qubit registers.

Conventions: site 0 is the most significant tensor factor, so a basis index
``b_0 b_1 ... b_{n-1}`` of an n-qubit operator reads left to right. Operators
are plain complex ``numpy`` arrays; :class:`QOperator` wraps one with a site
register and metadata when an operator has to travel between modules or be
serialized.
"""
from __future__ import annotations

import itertools
import json
import string
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
PAULI_LABELS = ("I", "X", "Y", "Z")
# 4 x 2 x 2 stack in label order, used by the Pauli-basis transforms
PAULI_STACK = np.stack([PAULI[s] for s in PAULI_LABELS])

HERM_TOL = 1e-12


class SeriesDivergence(RuntimeError):
    """Raised when a truncated operator series stops decreasing."""


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QOperator:
    """Dense operator on an ordered register of qubit sites."""

    register: tuple[int, ...]
    data: np.ndarray
    hermitian: bool = False
    traceless: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        dim = 2 ** len(self.register)
        if data.shape != (dim, dim):
            raise ValueError(f"data shape {data.shape} does not match {len(self.register)} qubits")
        scale = max(1.0, np.abs(data).max(initial=0.0))
        if self.hermitian and np.abs(data - data.conj().T).max(initial=0.0) > HERM_TOL * scale:
            raise ValueError("operator flagged Hermitian is not Hermitian")
        if self.traceless and abs(np.trace(data)) > 1e-10 * scale:
            raise ValueError("operator flagged traceless has nonzero trace")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "register", tuple(int(s) for s in self.register))

    @property
    def n(self) -> int:
        return len(self.register)

    def norms(self) -> dict:
        return norms(self.data)

    def to_json(self) -> str:
        return json.dumps({
            "register": list(self.register),
            "hermitian": self.hermitian,
            "traceless": self.traceless,
            "real": self.data.real.tolist(),
            "imag": self.data.imag.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "QOperator":
        obj = json.loads(text)
        data = np.array(obj["real"]) + 1j * np.array(obj["imag"])
        return cls(tuple(obj["register"]), data, obj["hermitian"], obj["traceless"])


@dataclass(frozen=True)
class Superoperator:
    """Matrix of a linear map on row-major vectorized operators.

    ``vec(A X B) = (A kron B^T) vec(X)`` with ``vec = X.reshape(-1)``.
    """

    matrix: np.ndarray
    tag: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (self.matrix @ X.reshape(-1)).reshape(X.shape)

    def trace_row_defect(self) -> float:
        """Distance of ``vec(I)^T S`` from ``vec(I)^T`` (0 for trace preserving maps)."""
        row = np.eye(self.dim).reshape(-1)
        return float(np.abs(row @ self.matrix - row).max())

    def trace_defect(self) -> float:
        """Largest trace drift of the generator or channel on the identity row.

        For a channel the row should be preserved, for a generator annihilated;
        report whichever applies from the tag metadata.
        """
        row = np.eye(self.dim).reshape(-1)
        if self.meta.get("generator", False):
            return float(np.abs(row @ self.matrix).max())
        return self.trace_row_defect()


def left_right(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Superoperator matrix of ``X -> A X B``."""
    return np.kron(A, B.T)


def superop_from_map(fn: Callable[[np.ndarray], np.ndarray], dim: int, tag: str = "") -> Superoperator:
    """Tabulate a linear map on ``dim x dim`` matrices column by column."""
    cols = np.empty((dim * dim, dim * dim), dtype=complex)
    E = np.zeros((dim, dim), dtype=complex)
    for k in range(dim * dim):
        E.flat[k] = 1.0
        cols[:, k] = fn(E).reshape(-1)
        E.flat[k] = 0.0
    return Superoperator(cols, tag)


# ---------------------------------------------------------------------------
# Pauli algebra and embeddings
# ---------------------------------------------------------------------------

def num_qubits(X: np.ndarray) -> int:
    n = int(round(np.log2(X.shape[-1])))
    if 2 ** n != X.shape[-1]:
        raise ValueError(f"dimension {X.shape[-1]} is not a power of two")
    return n


def embed(op: np.ndarray, sites: Sequence[int], n: int) -> np.ndarray:
    """Place ``op`` acting on ``sites`` (in the given order) into an n-qubit register."""
    sites = list(sites)
    k = len(sites)
    if len(set(sites)) != k or any(s < 0 or s >= n for s in sites):
        raise ValueError(f"invalid sites {sites} for {n} qubits")
    if op.shape != (2 ** k, 2 ** k):
        raise ValueError("operator size does not match number of sites")
    rest = [s for s in range(n) if s not in sites]
    full = np.kron(op, np.eye(2 ** (n - k)))
    order = sites + rest  # tensor position -> site
    perm = np.argsort(order)
    t = full.reshape([2] * (2 * n))
    t = t.transpose(list(perm) + [n + p for p in perm])
    return t.reshape(2 ** n, 2 ** n)


def pauli(site: int, which: str, n: int) -> np.ndarray:
    """1-local Pauli ``which`` on ``site`` of an n-qubit register."""
    if not 0 <= site < n:
        raise ValueError(f"site {site} outside register of {n} qubits")
    return embed(PAULI[which], [site], n)


def pauli_string(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, PAULI[ch])
    return out


def pauli_labels(n: int) -> Iterable[str]:
    return ("".join(p) for p in itertools.product(PAULI_LABELS, repeat=n))


def pauli_basis(n: int) -> np.ndarray:
    """All 4^n Pauli strings stacked in lexicographic label order, shape (4^n, 2^n, 2^n)."""
    basis = PAULI_STACK
    for _ in range(n - 1):
        basis = np.einsum("aij,bkl->abikjl", basis, PAULI_STACK).reshape(
            basis.shape[0] * 4, basis.shape[1] * 2, basis.shape[2] * 2)
    return basis


def to_pauli(X: np.ndarray) -> np.ndarray:
    """Coefficients in the orthonormal basis ``P_s / sqrt(2^n)``.

    Accepts a single matrix or a batch (..., 2^n, 2^n); returns (..., 4^n).
    Coefficients are real for Hermitian input.
    """
    n = num_qubits(X)
    batch = X.shape[:-2]
    t = X.reshape(batch + (2,) * (2 * n))
    nb = len(batch)
    # pair row/column index of each qubit, contract with conj(P)/sqrt2
    basis = PAULI_STACK.conj() / np.sqrt(2)
    for q in range(n):
        # axes for qubit q are at nb + q (row) and nb + q + n (col) in the original,
        # but contracted axes move to the end, so track by counting
        row_ax = nb
        col_ax = nb + n - q
        t = np.tensordot(t, basis, axes=([row_ax, col_ax], [1, 2]))
    return t.reshape(batch + (4 ** n,))


def from_pauli(c: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`to_pauli`."""
    batch = c.shape[:-1]
    t = c.reshape(batch + (4,) * n)
    nb = len(batch)
    basis = PAULI_STACK / np.sqrt(2)
    for _ in range(n):
        t = np.tensordot(t, basis, axes=([nb], [0]))
    # axes now: batch, (r0,c0), (r1,c1), ...
    perm = list(range(nb)) + [nb + 2 * q for q in range(n)] + [nb + 2 * q + 1 for q in range(n)]
    return t.transpose(perm).reshape(batch + (2 ** n, 2 ** n))


def pauli_support_masks(n: int) -> np.ndarray:
    """Boolean (4^n, n) array: entry [s, i] is True when string s acts nontrivially on site i."""
    labels = np.array(list(itertools.product(range(4), repeat=n))) if n else np.zeros((1, 0), int)
    return labels != 0


# ---------------------------------------------------------------------------
# partial traces and supports
# ---------------------------------------------------------------------------

def partial_trace(X: np.ndarray, traced: Iterable[int], n: int | None = None) -> np.ndarray:
    """Trace out ``traced`` sites; the remaining sites keep their relative order."""
    if n is None:
        n = num_qubits(X)
    traced = sorted(set(traced))
    if any(s < 0 or s >= n for s in traced):
        raise ValueError(f"traced sites {traced} not in register of {n} qubits")
    keep = [s for s in range(n) if s not in traced]
    letters = string.ascii_letters
    rows = [letters[s] for s in range(n)]
    cols = [letters[s] if s in traced else letters[n + s] for s in range(n)]
    out = "".join(letters[s] for s in keep) + "".join(letters[n + s] for s in keep)
    t = X.reshape([2] * (2 * n))
    res = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    d = 2 ** len(keep)
    return res.reshape(d, d)


def reduced(X: np.ndarray, keep: Iterable[int], n: int | None = None) -> np.ndarray:
    if n is None:
        n = num_qubits(X)
    keep = set(keep)
    return partial_trace(X, [s for s in range(n) if s not in keep], n)


def extend_identity(op: np.ndarray, sites: Sequence[int], n: int, normalized: bool = False) -> np.ndarray:
    """``op`` on ``sites`` tensored with identity (or I/2^k if ``normalized``) elsewhere."""
    full = embed(op, sites, n)
    if normalized:
        full = full / 2 ** (n - len(sites))
    return full


def support_defect(X: np.ndarray, S: Iterable[int], n: int | None = None) -> float:
    """Operator-norm distance of X from the closest operator of the form Y_S (x) I."""
    if n is None:
        n = num_qubits(X)
    S = sorted(set(S))
    rest = [s for s in range(n) if s not in S]
    if not rest:
        return 0.0
    proj = extend_identity(partial_trace(X, rest, n), S, n, normalized=True)
    return op_norm(X - proj)


# ---------------------------------------------------------------------------
# norms and matrix functions
# ---------------------------------------------------------------------------

def is_hermitian(X: np.ndarray, tol: float = HERM_TOL) -> bool:
    scale = max(1.0, float(np.abs(X).max(initial=0.0)))
    return bool(np.abs(X - X.conj().T).max(initial=0.0) <= tol * scale)


def trace_norm(X: np.ndarray) -> float:
    if is_hermitian(X, 1e-13):
        return float(np.abs(np.linalg.eigvalsh((X + X.conj().T) / 2)).sum())
    return float(np.linalg.svd(X, compute_uv=False).sum())


def op_norm(X: np.ndarray) -> float:
    if X.size == 0:
        return 0.0
    if is_hermitian(X, 1e-13):
        return float(np.abs(np.linalg.eigvalsh((X + X.conj().T) / 2)).max())
    return float(np.linalg.svd(X, compute_uv=False)[0])


def norms(X: np.ndarray) -> dict:
    """Schatten 1, infinity and 2 norms."""
    if is_hermitian(X, 1e-13):
        s = np.abs(np.linalg.eigvalsh((X + X.conj().T) / 2))
    else:
        s = np.linalg.svd(X, compute_uv=False)
    return {"trace": float(s.sum()), "operator": float(s.max()), "frobenius": float(np.sqrt((s ** 2).sum()))}


def batch_trace_norm(Xs: np.ndarray) -> np.ndarray:
    """Trace norms of a stack of Hermitian matrices."""
    return np.abs(np.linalg.eigvalsh(Xs)).sum(axis=-1)


def matfun(X: np.ndarray, f: str | Callable[[np.ndarray], np.ndarray], power: float | None = None) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its eigendecomposition.

    ``f`` is ``"exp"``, ``"log"``, ``"power"`` (with ``power``) or a callable on
    the eigenvalue array.
    """
    if not is_hermitian(X, 1e-10):
        raise ValueError("matfun requires a Hermitian matrix")
    w, V = np.linalg.eigh((X + X.conj().T) / 2)
    if f == "exp":
        fw = np.exp(w)
    elif f == "log":
        if w.min() <= 0:
            raise ValueError("log of a matrix that is not positive definite")
        fw = np.log(w)
    elif f == "power":
        if power is None:
            raise ValueError("power requires an exponent")
        if power < 0 and w.min() <= 0:
            raise ValueError("negative power of a singular matrix")
        if power != int(power) and w.min() < 0:
            raise ValueError("fractional power of a matrix with negative eigenvalues")
        fw = np.abs(w) ** power if power != int(power) else w ** power
    elif callable(f):
        fw = f(w)
    else:
        raise ValueError(f"unknown function {f!r}")
    return (V * fw) @ V.conj().T


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B - B @ A


def anticommutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return A @ B + B @ A


def random_density_matrix(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    d = 2 ** n
    rank = d if rank is None else rank
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (G + G.conj().T) / 2


# ---------------------------------------------------------------------------
# Hadamard (nested commutator) series
# ---------------------------------------------------------------------------

@dataclass
class SeriesResult:
    value: np.ndarray
    term_norms: list[float]
    noncluster_residual: float
    supports: list[frozenset]


def nested_commutator_series(terms: Sequence[tuple[Sequence[int], np.ndarray]], X: np.ndarray,
                             X_support: Iterable[int], alpha: float, k_max: int,
                             n: int | None = None, guard: float = 1e6) -> SeriesResult:
    """Truncated series for ``e^{alpha H} X e^{-alpha H}`` with H the sum of ``terms``.

    Order k adds ``alpha^k/k! ad_H^k(X)``. Only terms touching the support
    reached after k-1 commutators are applied, which is the sum over clusters
    from ``supp(X)``. The commutator of the current order with all remaining
    terms is evaluated too and reported as ``noncluster_residual``; it must
    vanish.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    if n is None:
        n = num_qubits(X)
    supports = [frozenset(s) for s, _ in terms]
    full = [embed(m, list(s), n) for s, m in terms]
    reach = frozenset(X_support)
    current = X.astype(complex)
    total = current.copy()
    norms_k = [op_norm(X)]
    residual = 0.0
    reached = [reach]
    base = max(norms_k[0], 1e-300)
    for k in range(1, k_max + 1):
        near = [a for a, S in enumerate(supports) if S & reach]
        far = [a for a, S in enumerate(supports) if not S & reach]
        nxt = np.zeros_like(current)
        for a in near:
            nxt += commutator(full[a], current)
        if far:
            Hfar = sum(full[a] for a in far)
            residual = max(residual, op_norm(commutator(Hfar, current)))
        current = nxt
        for a in near:
            reach = reach | supports[a]
        reached.append(reach)
        term = current * alpha ** k / _factorial(k)
        tn = op_norm(term)
        norms_k.append(tn)
        if tn > guard * base:
            raise SeriesDivergence(f"order {k} term norm {tn:.3e} exceeds guard")
        total = total + term
    return SeriesResult(total, norms_k, residual, reached)


def _factorial(k: int) -> float:
    out = 1.0
    for j in range(2, k + 1):
        out *= j
    return out
