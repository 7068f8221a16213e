"""Independent reference computations used as test oracles.

Nothing here imports the power-flow or solver code under test; the network
equations are rebuilt from the case arrays with complex arithmetic.
"""

import numpy as np


def ybus(case):
    """Bus admittance matrix in the MATPOWER convention (dense, complex)."""
    n = case.n_bus
    idx = case.bus_index()
    Y = np.zeros((n, n), dtype=complex)
    for k in range(case.n_branch):
        if not case.br_status[k]:
            continue
        f, t = idx[int(case.br_from[k])], idx[int(case.br_to[k])]
        ys = 1.0 / complex(case.br_r[k], case.br_x[k])
        bc = case.br_b[k]
        tap = case.br_tap[k] if case.br_tap[k] != 0 else 1.0
        a = tap * np.exp(1j * case.br_shift[k])
        Y[f, f] += (ys + 1j * bc / 2) / (a * np.conj(a))
        Y[t, t] += ys + 1j * bc / 2
        Y[f, t] += -ys / np.conj(a)
        Y[t, f] += -ys / a
    Y[np.arange(n), np.arange(n)] += case.Gs + 1j * case.Bs
    return Y


def gen_injection(case, Pg, Qg):
    idx = case.bus_index()
    S = np.zeros(case.n_bus, dtype=complex)
    for g in range(case.n_gen):
        if case.gen_status[g]:
            S[idx[int(case.gen_bus[g])]] += Pg[g] + 1j * Qg[g]
    return S


def mismatch(case, Vm, Va, Pg, Qg):
    """Complex bus mismatch ``S_gen - S_load - V conj(Y V)`` in p.u."""
    V = Vm * np.exp(1j * Va)
    return gen_injection(case, Pg, Qg) - (case.Pd + 1j * case.Qd) - V * np.conj(ybus(case) @ V)


def newton_power_flow(case, Vm, Va, Pg, tol=1e-12, max_iter=30):
    """Classic polar Newton power flow.

    PV buses keep ``Vm`` and the generator ``Pg``; the reference bus keeps
    ``Vm`` and ``Va``.  Returns ``(Vm, Va, S_bus)`` where ``S_bus`` is the
    net injection at each bus.
    """
    Y = ybus(case)
    idx = case.bus_index()
    n = case.n_bus
    ref = idx[case.ref_bus]
    gen_buses = {idx[int(case.gen_bus[g])] for g in range(case.n_gen) if case.gen_status[g]}
    pv = sorted(b for b in gen_buses if b != ref)
    pq = sorted(set(range(n)) - gen_buses - {ref})
    Sspec = gen_injection(case, Pg, np.zeros(case.n_gen)) - (case.Pd + 1j * case.Qd)
    V = Vm * np.exp(1j * Va)
    pvpq = pv + pq
    for _ in range(max_iter):
        I = Y @ V
        S = V * np.conj(I)
        F = np.r_[(S - Sspec).real[pvpq], (S - Sspec).imag[pq]]
        if np.max(np.abs(F), initial=0.0) < tol:
            break
        Vn = V / np.abs(V)
        dS_dVm = np.diag(V) @ np.conj(Y @ np.diag(Vn)) + np.diag(np.conj(I)) @ np.diag(Vn)
        dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(I) - Y @ np.diag(V))
        J = np.block([[dS_dVa.real[np.ix_(pvpq, pvpq)], dS_dVm.real[np.ix_(pvpq, pq)]],
                      [dS_dVa.imag[np.ix_(pq, pvpq)], dS_dVm.imag[np.ix_(pq, pq)]]])
        dx = np.linalg.solve(J, -F)
        va = np.angle(V)
        vm = np.abs(V)
        va[pvpq] += dx[:len(pvpq)]
        vm[pq] += dx[len(pvpq):]
        V = vm * np.exp(1j * va)
    else:
        raise RuntimeError("Newton power flow did not converge")
    return np.abs(V), np.angle(V), V * np.conj(Y @ V)


def separable_qp_kkt(Qs, cs, As, Es=None, es=None):
    """Minimizer and coupling multiplier of a separable equality QP.

    ``min sum 1/2 x_i'Q_i x_i + c_i'x_i`` s.t. ``sum A_i x_i = 0`` and
    ``E_i x_i = e_i``, by one dense KKT solve.
    """
    import scipy.linalg as sla
    Q = sla.block_diag(*Qs)
    c = np.concatenate(cs)
    A = np.hstack(As)
    rows = [A]
    rhs = [np.zeros(A.shape[0])]
    if Es is not None:
        E = sla.block_diag(*Es)
        rows.append(E)
        rhs.append(np.concatenate(es))
    M = np.vstack(rows)
    m = M.shape[0]
    K = np.block([[Q, M.T], [M, np.zeros((m, m))]])
    sol = np.linalg.solve(K, np.r_[-c, np.concatenate(rhs)])
    return sol[:Q.shape[0]], sol[Q.shape[0]:Q.shape[0] + A.shape[0]]


def central_jacobian(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h * max(1.0, abs(x[j]))
        J[:, j] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * e[j])
    return J


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b), initial=0.0) / max(1.0, np.max(np.abs(b), initial=0.0)))
