"""Brute-force KKT reference for the box + half-space QP.

Enumerates every active-set pattern (each coordinate at its lower bound,
free, or at its upper bound; the half-space active or not), solves the
corresponding equality-constrained system, keeps the candidates that pass
primal and dual feasibility, and returns the best objective.  Exponential
in the dimension, so only usable for small instances, but it shares no
code path with the production solver: plain dense solves over explicitly
enumerated patterns.  Combos over the fixed coordinates are batched per
free set so dimensions up to ~12 stay fast.
"""

import numpy as np

__all__ = ["enumerate_qp"]


def enumerate_qp(P, q, lower, upper, a=None, b=None, tol=1e-9):
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = len(q)
    width = float(max(np.max(np.abs(lower)), np.max(np.abs(upper)), 1.0))
    scale = max(1.0, float(np.max(np.abs(q))), float(np.max(np.abs(P))) * width)
    best_obj = np.inf
    best_z = None

    for f_bits in range(2 ** n):
        free = np.array([(f_bits >> i) & 1 for i in range(n)], dtype=bool)
        bnd = ~free
        nf = int(free.sum())
        nb = n - nf
        m = 2 ** nb
        bits = (np.arange(m)[:, None] >> np.arange(nb)) & 1      # (m, nb)
        zb = np.where(bits == 1, upper[bnd], lower[bnd])          # (m, nb)

        for cap_active in (False, True) if a is not None else (False,):
            if cap_active and nf == 0:
                continue
            Z = np.zeros((m, n))
            Z[:, bnd] = zb
            lam = np.zeros(m)
            if nf:
                Pff = P[np.ix_(free, free)]
                Pfb = P[np.ix_(free, bnd)]
                rhs = -(q[free][None, :] + zb @ Pfb.T)            # (m, nf)
                try:
                    if cap_active:
                        kkt = np.zeros((nf + 1, nf + 1))
                        kkt[:nf, :nf] = Pff
                        kkt[:nf, nf] = a[free]
                        kkt[nf, :nf] = a[free]
                        rhs2 = np.concatenate(
                            [rhs, (b - zb @ a[bnd])[:, None]], axis=1
                        )
                        sol = np.linalg.solve(kkt, rhs2.T).T
                        Z[:, free] = sol[:, :nf]
                        lam = sol[:, nf]
                    else:
                        Z[:, free] = np.linalg.solve(Pff, rhs.T).T
                except np.linalg.LinAlgError:
                    continue

            ok = np.ones(m, dtype=bool)
            if nf:
                ok &= np.all(Z[:, free] >= lower[free] - tol * width, axis=1)
                ok &= np.all(Z[:, free] <= upper[free] + tol * width, axis=1)
            if a is not None:
                if cap_active:
                    ok &= lam >= -tol * scale
                else:
                    ok &= Z @ a <= b + tol * scale
            grad = Z @ P.T + q[None, :]
            if a is not None and cap_active:
                grad = grad + np.outer(lam, a)
            if nb:
                gb = grad[:, bnd]
                dual_ok = np.where(bits == 0, gb >= -tol * scale, gb <= tol * scale)
                ok &= np.all(dual_ok, axis=1)
            if not ok.any():
                continue
            zok = Z[ok]
            objs = 0.5 * np.einsum("ij,jk,ik->i", zok, P, zok) + zok @ q
            i = int(np.argmin(objs))
            if objs[i] < best_obj:
                best_obj = float(objs[i])
                best_z = zok[i].copy()

    if best_z is None:
        raise RuntimeError("no KKT point passed the feasibility screens")
    return best_z, best_obj
