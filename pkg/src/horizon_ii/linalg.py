"""Small dense eigen-solvers and helpers (n up to ~10)."""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "jacobi_eigh",
    "eig_general",
    "hessenberg",
    "left_annihilator",
    "spectral_abscissa",
    "ConvergenceError",
]


class ConvergenceError(RuntimeError):
    pass


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors
    (columns).  Sweeps stop once the off-diagonal Frobenius norm drops below
    ``tol`` times ``max(1, ||A||_F)``.
    """
    a = np.array(A, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.tril(a, -1) ** 2)) * 2.0)
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.array([[c, s], [-s, c]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ rot
                a[idx, :] = rot.T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ rot
    else:
        raise ConvergenceError("Jacobi sweeps did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def hessenberg(A) -> np.ndarray:
    """Upper Hessenberg form by Householder similarity transforms."""
    h = np.array(A, dtype=float)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1 :, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x
        v[0] += math.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        h[k + 1 :, k:] -= 2.0 * np.outer(v, v @ h[k + 1 :, k:])
        h[:, k + 1 :] -= 2.0 * np.outer(h[:, k + 1 :] @ v, v)
        h[k + 2 :, k] = 0.0
    return h


def eig_general(A, max_iter: int | None = None) -> np.ndarray:
    """Eigenvalues of a real square matrix (complex array, conjugate pairs kept).

    Hessenberg reduction followed by Francis double-shift QR with deflation.
    The total iteration budget defaults to ``100 n^2``.
    """
    a = hessenberg(A)
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=complex)
    cap = max_iter if max_iter is not None else 100 * n * n
    wr = np.zeros(n)
    wi = np.zeros(n)
    anorm = float(np.sum(np.abs(a)))
    nn = n - 1
    t = 0.0
    total = 0
    while nn >= 0:
        its = 0
        while True:
            # look for a single small subdiagonal element
            l = 0
            for ll in range(nn, 0, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn], wi[nn] = x + t, 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1], wi[nn] = -z, z
                nn -= 2
                break
            if total >= cap:
                raise ConvergenceError(f"QR iteration cap {cap} reached")
            if its in (10, 20):
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p, q, r = p / s, q / s, r / s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p, q, r = p / x, q / x, r / x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x, y, z = p / s, q / s, r / s
                q, r = q / p, r / p
                for j in range(k, nn + 1):
                    p = a[k, j] + q * a[k + 1, j]
                    if k != nn - 1:
                        p += r * a[k + 2, j]
                        a[k + 2, j] -= p * z
                    a[k + 1, j] -= p * y
                    a[k, j] -= p * x
                mmin = nn if nn < k + 3 else k + 3
                for i in range(l, mmin + 1):
                    p = x * a[i, k] + y * a[i, k + 1]
                    if k != nn - 1:
                        p += z * a[i, k + 2]
                        a[i, k + 2] -= p * r
                    a[i, k + 1] -= p * q
                    a[i, k] -= p
    eig = wr + 1j * wi
    order = np.lexsort((eig.imag, eig.real))
    return eig[order]


def spectral_abscissa(eigs) -> float:
    eigs = np.asarray(eigs)
    return float(np.max(eigs.real)) if eigs.size else -math.inf


def left_annihilator(G, rank_tol: float = 1e-10) -> np.ndarray:
    """Rows spanning the left null space of ``G`` (so ``N @ G == 0``), via QR."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = G.shape[0]
    q, r = np.linalg.qr(G, mode="complete")
    diag = np.abs(np.diag(r)) if r.size else np.zeros(0)
    scale = max(1.0, float(diag.max(initial=0.0)))
    rank = int(np.sum(diag > rank_tol * scale))
    if rank < min(G.shape) and rank < G.shape[1]:
        # rank-deficient G: fall back to SVD for a reliable basis
        u, sv, _ = np.linalg.svd(G)
        rank = int(np.sum(sv > rank_tol * max(1.0, sv.max(initial=0.0))))
        return u[:, rank:].T
    return q[:, rank:n].T
