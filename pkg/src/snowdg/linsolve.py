"""SPD solves, generalized eigenpairs and condition numbers for the DG systems."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 3000


class NumericalFailure(RuntimeError):
    """Non-convergence or a detected indefinite matrix."""


@dataclass
class SolveReport:
    iterations: int
    residual: float
    wall_time: float


def block_jacobi(a, block: int):
    """Preconditioner applying the inverses of the diagonal ``block x block`` blocks."""
    a = sp.csr_matrix(a)
    n = a.shape[0]
    if n % block:
        raise ValueError("matrix size is not a multiple of the block size")
    nb = n // block
    diag = np.zeros((nb, block, block))
    for i in range(block):
        for j in range(block):
            diag[:, i, j] = a[i::block, j::block].diagonal()
    try:
        inv = np.linalg.inv(diag)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular diagonal block in preconditioner") from exc

    def apply(r):
        return np.einsum("kij,kj->ki", inv, r.reshape(nb, block)).ravel()

    return apply


def solve_spd(a, b, tol: float = 1e-10, block: int = 1, maxiter: int | None = None):
    """Preconditioned conjugate gradients.

    Stops when ``sqrt(r^T z) <= tol * sqrt(b^T B b)`` (``B`` the preconditioner).
    Raises NumericalFailure on a non-positive curvature or after
    ``20 sqrt(N)`` iterations.
    """
    t0 = time.perf_counter()
    a = sp.csr_matrix(a)
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxiter = maxiter or max(20, int(np.ceil(20 * np.sqrt(n))))
    prec = block_jacobi(a, block)
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, SolveReport(0, 0.0, time.perf_counter() - t0)
    r = b.copy()
    z = prec(r)
    rz = r @ z
    ref = np.sqrt(abs(rz))
    d = z.copy()
    it = 0
    while np.sqrt(abs(rz)) > tol * ref:
        if it >= maxiter:
            raise NumericalFailure(f"CG did not converge in {maxiter} iterations")
        ad = a @ d
        curv = d @ ad
        if curv <= 0:
            raise NumericalFailure("non-positive curvature in CG: matrix is not positive definite")
        alpha = rz / curv
        x += alpha * d
        r -= alpha * ad
        z = prec(r)
        rz_new = r @ z
        if rz_new < 0:
            raise NumericalFailure("preconditioned residual norm negative: preconditioner not SPD")
        d = z + (rz_new / rz) * d
        rz = rz_new
        it += 1
    res = np.linalg.norm(b - a @ x) / bnorm
    return x, SolveReport(it, float(res), time.perf_counter() - t0)


def solve_dense(a, b) -> np.ndarray:
    """Cholesky solve; raises NumericalFailure if ``a`` is not positive definite."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    try:
        c = sla.cho_factor(a)
    except sla.LinAlgError as exc:
        raise NumericalFailure("matrix is not positive definite") from exc
    return sla.cho_solve(c, b)


def check_positive_definite(a) -> float:
    """Smallest eigenvalue (dense); raises NumericalFailure if not positive."""
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    lam = float(sla.eigvalsh(a, subset_by_index=[0, 0])[0])
    if lam <= 0:
        raise NumericalFailure(f"matrix is indefinite (minimum eigenvalue {lam:.3e})")
    return lam


def _use_dense(method: str, n: int) -> bool:
    if method not in ("auto", "dense", "sparse"):
        raise ValueError(f"unknown method {method!r}")
    return method == "dense" or (method == "auto" and n <= DENSE_LIMIT)


def smallest_generalized_eigs(a, m, k: int = 10, tol: float = 1e-10, method: str = "auto"):
    """The ``k`` smallest eigenpairs of ``a x = lam m x``, M-orthonormal, ascending.

    ``method="auto"`` is dense up to ``N = 3000`` and shift-invert Lanczos beyond.
    """
    n = a.shape[0]
    if not 1 <= k <= min(20, n):
        raise ValueError(f"k must lie in [1, min(20, N)], got {k}")
    if _use_dense(method, n):
        ad = a.toarray() if sp.issparse(a) else np.asarray(a)
        md = m.toarray() if sp.issparse(m) else np.asarray(m)
        try:
            lam, vec = sla.eigh(ad, md, subset_by_index=[0, k - 1])
        except sla.LinAlgError as exc:
            raise NumericalFailure(str(exc)) from exc
    else:
        a = sp.csc_matrix(a)
        m = sp.csc_matrix(m)
        try:
            lam, vec = spla.eigsh(a, k=k, M=m, sigma=0.0, which="LM", tol=tol * 1e-2)
        except (spla.ArpackNoConvergence, RuntimeError) as exc:
            raise NumericalFailure(f"eigensolver failed: {exc}") from exc
        order = np.argsort(lam)
        lam, vec = lam[order], vec[:, order]
        # re-orthonormalise in the M inner product (degenerate pairs)
        g = vec.T @ (m @ vec)
        lchol = np.linalg.cholesky(g)
        vec = np.linalg.solve(lchol, vec.T).T
        h = vec.T @ (a @ vec)
        lam, rot = np.linalg.eigh(0.5 * (h + h.T))
        vec = vec @ rot
    res = eig_residuals(a, m, lam, vec)
    if np.any(lam <= 0):
        raise NumericalFailure("non-positive generalized eigenvalue: matrix is indefinite")
    if np.any(res > max(tol, 1e-8)):
        raise NumericalFailure(f"eigenpair residual {res.max():.2e} above tolerance")
    return lam, vec


def eig_residuals(a, m, lam, vec) -> np.ndarray:
    av = a @ vec
    r = av - (m @ vec) * lam
    return np.linalg.norm(r, axis=0) / np.maximum(np.linalg.norm(av, axis=0), 1e-300)


def condition_estimate(a, block: int = 1, tol: float = 1e-4, seed: int = 0, method: str = "auto") -> float:
    """2-norm condition number of an SPD matrix.

    Dense for ``N <= 3000``; otherwise power iteration for the largest
    eigenvalue and inverse iteration (inner CG) for the smallest.
    """
    n = a.shape[0]
    if _use_dense(method, n):
        ad = a.toarray() if sp.issparse(a) else np.asarray(a)
        lam = sla.eigvalsh(ad)
        if lam[0] <= 0:
            raise NumericalFailure("matrix is not positive definite")
        return float(lam[-1] / lam[0])
    a = sp.csr_matrix(a)
    rng = np.random.default_rng(seed)
    lmax = _power(lambda v: a @ v, rng.standard_normal(n), tol)
    lmin_inv = _power(lambda v: solve_spd(a, v, tol=1e-10, block=block, maxiter=50 * n)[0],
                      rng.standard_normal(n), tol)
    return float(lmax * lmin_inv)


def _power(op, v, tol: float, maxiter: int = 5000) -> float:
    v = v / np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = op(v)
        new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            raise NumericalFailure("power iteration hit the null space")
        v = w / nrm
        if lam and abs(new - lam) <= tol * abs(new):
            return new
        lam = new
    raise NumericalFailure("power iteration did not converge")


__all__ = ["NumericalFailure", "SolveReport", "solve_spd", "solve_dense", "check_positive_definite",
           "smallest_generalized_eigs", "condition_estimate", "block_jacobi", "eig_residuals"]
