"""Independent numerical oracles for the closed forms.

The joint chains (Q_p, Q_sp) and (Q_p, Q_s) are each Markov under the
randomized policy, so truncating them and solving for the stationary
distribution gives the exact means up to truncation error.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla


def _stationary(P: sp.csr_matrix) -> np.ndarray:
    n = P.shape[0]
    A = (P.T - sp.identity(n, format="csr")).tolil()
    A[0, :] = np.ones(n)
    b = np.zeros(n)
    b[0] = 1.0
    return sla.spsolve(A.tocsr(), b)


def joint_chain(f_pd, f_sd, f_ps, lambda_p, lambda_s, a, which, K=80, L=160):
    """Stationary moments of (Q_p, Q_other) with Q_other = 'sp' or 's'.

    Returns dict with mean_p, mean_other, p_empty (Q_p = 0) and
    both_empty (Q_p = Q_other = 0).
    """
    rows, cols, vals = [], [], []

    def add(i, j, ii, jj, p):
        rows.append(i * L + j)
        cols.append(min(ii, K - 1) * L + min(jj, L - 1))
        vals.append(p)

    for i in range(K):
        for j in range(L):
            moves = []
            if i > 0:
                moves.append((f_pd, i - 1, j))
                relay = (1 - f_pd) * f_ps
                moves.append((relay, i - 1, j + 1 if which == "sp" else j))
                moves.append(((1 - f_pd) * (1 - f_ps), i, j))
            elif j > 0:
                q = (1 - a) * f_sd if which == "sp" else a * f_sd
                moves.append((q, 0, j - 1))
                moves.append((1 - q, 0, j))
            else:
                moves.append((1.0, 0, 0))
            for p, ii, jj in moves:
                for xp, pp in ((1, lambda_p), (0, 1 - lambda_p)):
                    if which == "sp":
                        add(i, j, ii + xp, jj, p * pp)
                    else:
                        for xs, ps in ((1, lambda_s), (0, 1 - lambda_s)):
                            add(i, j, ii + xp, jj + xs, p * pp * ps)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(K * L, K * L))
    pi = _stationary(P).reshape(K, L)
    return {
        "mean_p": float(pi.sum(axis=1) @ np.arange(K)),
        "mean_other": float(pi.sum(axis=0) @ np.arange(L)),
        "p_empty": float(pi[0].sum()),
        "both_empty": float(pi[0, 0]),
        "tail_mass": float(pi[-1].sum() + pi[:, -1].sum()),
    }


def scan_stable_a(stable, lo=0.0, hi=1.0, n=20001):
    """Smallest and largest ``a`` on a fine grid for which ``stable(a)`` holds."""
    grid = np.linspace(lo, hi, n)[1:-1]
    ok = [a for a in grid if stable(a)]
    return (min(ok), max(ok)) if ok else None
