"""Polar power-flow building blocks.

Branch model (MATPOWER pi model with off-nominal tap ``tau`` and phase
shift ``phi``)::

    Yff = (ys + j b/2) / tau^2     Yft = -ys / (tau e^{-j phi})
    Ytf = -ys / (tau e^{j phi})    Ytt =  ys + j b/2

Power leaving bus ``i`` into a branch end with self admittance
``Gii + j Bii`` and transfer admittance ``Gij + j Bij``::

    P = Gii Vi^2 + Vi Vj (Gij cos t + Bij sin t)
    Q = -Bii Vi^2 + Vi Vj (Gij sin t - Bij cos t),     t = theta_i - theta_j
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..problem import SmoothFunction


def branch_admittances(case):
    """Return complex ``(Yff, Yft, Ytf, Ytt)`` arrays over all branches."""
    ys = 1.0 / (case.br_r + 1j * case.br_x)
    T = case.br_tap * np.exp(1j * case.br_shift)
    ych = 0.5j * case.br_b
    Ytt = ys + ych
    Yff = Ytt / (case.br_tap ** 2)
    Yft = -ys / np.conj(T)
    Ytf = -ys / T
    return Yff, Yft, Ytf, Ytt


def branch_flows(case, Vm, Va):
    """Complex power entering each branch at its from and to end."""
    idx = case.bus_index()
    f = np.array([idx[int(b)] for b in case.br_from])
    t = np.array([idx[int(b)] for b in case.br_to])
    V = Vm * np.exp(1j * Va)
    Yff, Yft, Ytf, Ytt = branch_admittances(case)
    Sf = V[f] * np.conj(Yff * V[f] + Yft * V[t])
    St = V[t] * np.conj(Ytf * V[f] + Ytt * V[t])
    on = case.br_status
    return np.where(on, Sf, 0.0), np.where(on, St, 0.0)


@dataclass
class FlowTerms:
    """Vectorized branch-end flow terms feeding constraint rows.

    Each term adds ``coef * P`` (``kind == 0``) or ``coef * Q``
    (``kind == 1``) of one branch end to constraint row ``row``.  ``idx``
    holds the variable indices of ``(theta_i, V_i, theta_j, V_j)``.
    """

    row: np.ndarray
    coef: np.ndarray
    kind: np.ndarray
    Gii: np.ndarray
    Bii: np.ndarray
    Gij: np.ndarray
    Bij: np.ndarray
    idx: np.ndarray

    @classmethod
    def from_list(cls, terms):
        if not terms:
            z = np.zeros(0)
            return cls(z.astype(int), z, z.astype(int), z, z, z, z, np.zeros((0, 4), dtype=int))
        cols = list(zip(*terms))
        return cls(
            row=np.array(cols[0], dtype=int), coef=np.array(cols[1], dtype=float),
            kind=np.array(cols[2], dtype=int), Gii=np.array(cols[3], dtype=float),
            Bii=np.array(cols[4], dtype=float), Gij=np.array(cols[5], dtype=float),
            Bij=np.array(cols[6], dtype=float), idx=np.array(cols[7], dtype=int).reshape(-1, 4),
        )

    def evaluate(self, x, order=2):
        """Values, gradients (m, 4) and Hessians (m, 4, 4) of every term."""
        ti, vi, tj, vj = (x[self.idx[:, k]] for k in range(4))
        t = ti - tj
        c, s = np.cos(t), np.sin(t)
        a = self.Gij * c + self.Bij * s
        b = self.Gij * s - self.Bij * c
        isP = self.kind == 0
        vv = vi * vj
        val = np.where(isP, self.Gii * vi ** 2 + vv * a, -self.Bii * vi ** 2 + vv * b)
        if order == 0:
            return val, None, None
        # P: dt -> -vv b, dVi -> 2 Gii vi + vj a, dVj -> vi a
        # Q: dt ->  vv a, dVi -> -2 Bii vi + vj b, dVj -> vi b
        dt = np.where(isP, -vv * b, vv * a)
        dvi = np.where(isP, 2 * self.Gii * vi + vj * a, -2 * self.Bii * vi + vj * b)
        dvj = np.where(isP, vi * a, vi * b)
        grad = np.stack([dt, dvi, -dt, dvj], axis=1)
        if order == 1:
            return val, grad, None
        m = val.size
        H = np.zeros((m, 4, 4))
        # second derivatives of (a, b) in t: a'' = -a, b'' = -b ; a' = -b, b' = a
        d2t = np.where(isP, -vv * a, -vv * b)
        dtdvi = np.where(isP, -vj * b, vj * a)
        dtdvj = np.where(isP, -vi * b, vi * a)
        dvivi = np.where(isP, 2 * self.Gii, -2 * self.Bii)
        dvidvj = np.where(isP, a, b)
        H[:, 0, 0] = d2t
        H[:, 2, 2] = d2t
        H[:, 0, 2] = H[:, 2, 0] = -d2t
        H[:, 0, 1] = H[:, 1, 0] = dtdvi
        H[:, 2, 1] = H[:, 1, 2] = -dtdvi
        H[:, 0, 3] = H[:, 3, 0] = dtdvj
        H[:, 2, 3] = H[:, 3, 2] = -dtdvj
        H[:, 1, 1] = dvivi
        H[:, 1, 3] = H[:, 3, 1] = dvidvj
        return val, grad, H


def power_flow_function(n, m, lin, const, quad, flows: FlowTerms, name="power_flow") -> SmoothFunction:
    """Constraint map ``lin @ x + const + sum quad + sum flow terms``.

    ``quad`` is a tuple ``(rows, var_idx, coef)`` of diagonal quadratic
    terms ``coef * x[var]**2`` (bus shunts).
    """
    lin = np.asarray(lin, dtype=float).reshape(m, n)
    const = np.asarray(const, dtype=float)
    qr, qi, qc = (np.asarray(v) for v in quad)
    qi = qi.astype(int)
    qr = qr.astype(int)

    def fun(x):
        out = lin @ x + const
        if qr.size:
            np.add.at(out, qr, qc * x[qi] ** 2)
        if flows.row.size:
            val, _, _ = flows.evaluate(x, order=0)
            np.add.at(out, flows.row, flows.coef * val)
        return out

    def jac(x):
        J = lin.copy()
        if qr.size:
            np.add.at(J, (qr, qi), 2 * qc * x[qi])
        if flows.row.size:
            _, grad, _ = flows.evaluate(x, order=1)
            for k in range(4):
                np.add.at(J, (flows.row, flows.idx[:, k]), flows.coef * grad[:, k])
        return J

    def hess(x, w):
        H = np.zeros((n, n))
        if qr.size:
            np.add.at(H, (qi, qi), 2 * qc * w[qr])
        if flows.row.size:
            _, _, Ht = flows.evaluate(x, order=2)
            scale = flows.coef * w[flows.row]
            for a in range(4):
                for b in range(4):
                    np.add.at(H, (flows.idx[:, a], flows.idx[:, b]), scale * Ht[:, a, b])
        return H

    return SmoothFunction(n, m, fun, jac, hess, name=name)
