"""Primal-dual interior-point method for small dense NLPs.

Solves::

    min f(x)  s.t.  c_E(x) = 0,  c_I(x) <= 0,  lower <= x <= upper

with a log barrier on the bounds and on slacks ``s = -c_I(x)``, Newton
steps on the perturbed KKT conditions (inertia-corrected LDL' of the
condensed system), an l1 merit line search with one second-order
correction, and Fiacco-McCormick barrier reduction ``mu <- mu / 10``.
Variables with ``lower == upper`` are eliminated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import LDLFactor

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


@dataclass
class IPMOptions:
    tol: float = 1e-8
    max_iter: int = 200
    mu_init: float = 0.1
    mu_min: float = 1e-11
    bound_push: float = 1e-2
    tau_min: float = 0.99
    kappa_eps: float = 10.0
    kappa_sigma: float = 1e10
    mult_init_max: float = 1e3
    verbose: bool = False
    stream: Optional[Callable[[str], None]] = None


@dataclass
class NLP:
    """Callback bundle consumed by :func:`interior_point`.

    ``hess(x, obj_factor, y_eq, y_in)`` returns the Hessian of
    ``obj_factor * f + y_eq' c_E + y_in' c_I``.
    """

    n: int
    f: Callable
    grad: Callable
    hess: Callable
    c_eq: Callable
    jac_eq: Callable
    c_in: Callable
    jac_in: Callable
    lower: np.ndarray
    upper: np.ndarray
    m_eq: int = 0
    m_in: int = 0


@dataclass
class IPMResult:
    x: np.ndarray
    y_eq: np.ndarray
    y_in: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    status: str
    iterations: int
    stationarity: float
    primal: float
    complementarity: float
    objective: float
    history: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status == "optimal"


class _Reduced:
    """View of an :class:`NLP` restricted to the non-fixed variables."""

    def __init__(self, nlp: NLP):
        lo = np.asarray(nlp.lower, float)
        hi = np.asarray(nlp.upper, float)
        fixed = np.isfinite(lo) & np.isfinite(hi) & (hi - lo <= 1e-14 * np.maximum(1.0, np.abs(lo)))
        self.nlp = nlp
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        self.base = np.where(fixed, lo, 0.0)
        self.l = lo[self.free]
        self.u = hi[self.free]

    def full(self, x):
        xx = self.base.copy()
        xx[self.free] = x
        return xx

    def f(self, x):
        return float(self.nlp.f(self.full(x)))

    def grad(self, x):
        return np.asarray(self.nlp.grad(self.full(x)), float)[self.free]

    def ce(self, x):
        return np.asarray(self.nlp.c_eq(self.full(x)), float).reshape(-1)

    def ci(self, x):
        return np.asarray(self.nlp.c_in(self.full(x)), float).reshape(-1)

    def je(self, x):
        return np.asarray(self.nlp.jac_eq(self.full(x)), float).reshape(self.nlp.m_eq, -1)[:, self.free]

    def ji(self, x):
        return np.asarray(self.nlp.jac_in(self.full(x)), float).reshape(self.nlp.m_in, -1)[:, self.free]

    def hess(self, x, sigma, ye, yi):
        H = np.asarray(self.nlp.hess(self.full(x), sigma, ye, yi), float)
        return H[np.ix_(self.free, self.free)]


def _push_into_box(x, l, u, push):
    x = x.copy()
    hl, hu = np.isfinite(l), np.isfinite(u)
    pl = np.where(hl, push * np.maximum(1.0, np.abs(l)), 0.0)
    pu = np.where(hu, push * np.maximum(1.0, np.abs(u)), 0.0)
    both = hl & hu
    width = np.where(both, u - l, np.inf)
    pl = np.where(both, np.minimum(pl, push * width), pl)
    pu = np.where(both, np.minimum(pu, push * width), pu)
    x = np.where(hl, np.maximum(x, l + pl), x)
    x = np.where(hu, np.minimum(x, u - pu), x)
    return x


def _frac_to_boundary(v, dv, tau):
    """Largest ``a`` in (0, 1] with ``v + a dv >= (1 - tau) v`` for ``v > 0``."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


class _Solver:
    def __init__(self, nlp: NLP, opts: IPMOptions):
        self.P = _Reduced(nlp)
        self.opts = opts
        self.n = self.P.free.size
        self.me = nlp.m_eq
        self.mi = nlp.m_in
        self.hl = np.isfinite(self.P.l)
        self.hu = np.isfinite(self.P.u)
        self.delta_w_last = 0.0
        self.nu = 1.0
        self.history = []

    def emit(self, msg):
        if self.opts.stream is not None:
            self.opts.stream(msg)
        if self.opts.verbose:
            log.info(msg)

    # --- evaluation -------------------------------------------------------
    def evaluate(self, x, s):
        P = self.P
        ev = dict(f=P.f(x), g=P.grad(x))
        ev["ce"] = P.ce(x) if self.me else np.zeros(0)
        ev["je"] = P.je(x) if self.me else np.zeros((0, self.n))
        ev["ci"] = P.ci(x) if self.mi else np.zeros(0)
        ev["ji"] = P.ji(x) if self.mi else np.zeros((0, self.n))
        for k, v in ev.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite {k} in interior-point evaluation")
        return ev

    def slacks(self, x):
        dl = np.where(self.hl, x - self.P.l, 1.0)
        du = np.where(self.hu, self.P.u - x, 1.0)
        return dl, du

    def barrier_merit(self, x, s, f, ce, ci, mu):
        dl, du = self.slacks(x)
        if np.any(dl[self.hl] <= 0) or np.any(du[self.hu] <= 0) or np.any(s <= 0):
            return np.inf
        phi = f - mu * (np.sum(np.log(dl[self.hl])) + np.sum(np.log(du[self.hu])) + np.sum(np.log(s)))
        theta = np.sum(np.abs(ce)) + np.sum(np.abs(ci + s))
        return phi + self.nu * theta

    def errors(self, x, s, ev, ye, yi, zl, zu, zs, mu, H_abs):
        rx = ev["g"] + ev["je"].T @ ye + ev["ji"].T @ yi - zl + zu
        rs = yi - zs
        dl, du = self.slacks(x)
        cl = np.where(self.hl, dl * zl - mu, 0.0)
        cu = np.where(self.hu, du * zu - mu, 0.0)
        cs = s * zs - mu
        primal = max(np.max(np.abs(ev["ce"]), initial=0.0), np.max(np.abs(ev["ci"] + s), initial=0.0))
        nb = int(self.hl.sum() + self.hu.sum() + self.mi)
        mult = np.sum(np.abs(ye)) + np.sum(np.abs(yi)) + np.sum(np.abs(zl)) + np.sum(np.abs(zu)) + np.sum(np.abs(zs))
        smax = 100.0
        s_d = max(smax, mult / max(1, self.me + self.mi + nb)) / smax
        zsum = np.sum(np.abs(zl)) + np.sum(np.abs(zu)) + np.sum(np.abs(zs))
        s_c = max(smax, zsum / max(1, nb)) / smax
        # rounding floor: x is only known to ~eps |x|, so each component of rx
        # carries an irreducible error of about eps (|W| |x| + |J|'|y| + |g|)_j
        mag = np.abs(ev["g"]) + np.abs(zl) + np.abs(zu)
        if self.me:
            mag = mag + np.abs(ev["je"]).T @ np.abs(ye)
        if self.mi:
            mag = mag + np.abs(ev["ji"]).T @ np.abs(yi)
        if H_abs is not None:
            mag = mag + H_abs @ np.maximum(np.abs(x), 1.0)
        floor = 100 * EPS * mag
        stat = np.max(np.maximum(np.abs(rx) - floor, 0.0), initial=0.0) / s_d
        stat = max(stat, np.max(np.abs(rs), initial=0.0) / s_d)
        comp = max(np.max(np.abs(cl), initial=0.0), np.max(np.abs(cu), initial=0.0),
                   np.max(np.abs(cs), initial=0.0)) / s_c
        return max(stat, primal, comp), (stat, primal, comp), rx

    # --- linear algebra ---------------------------------------------------
    def factor(self, W, Sx, Ss, je, ji, mu):
        n, me, mi = self.n, self.me, self.mi
        N = n + me + mi
        K0 = np.zeros((N, N))
        K0[:n, :n] = W + np.diag(Sx)
        K0[n:n + me, :n] = je
        K0[:n, n:n + me] = je.T
        K0[n + me:, :n] = ji
        K0[:n, n + me:] = ji.T

        def build(dw, dc):
            K = K0.copy()
            idx = np.arange(n)
            K[idx, idx] += dw
            if me:
                ie = n + np.arange(me)
                K[ie, ie] -= dc
            if mi:
                ii = n + me + np.arange(mi)
                K[ii, ii] -= 1.0 / (Ss + dw) + dc
            return K

        dw, dc = 0.0, 0.0
        F = LDLFactor(build(dw, dc))
        if F.inertia[2] > 0 and (me + mi) > 0:
            dc = 1e-8 * mu ** 0.25
            F = LDLFactor(build(dw, dc))
        if F.inertia[:2] == (n, me + mi) and F.inertia[2] == 0:
            return F, dw, dc
        dw = 1e-4 if self.delta_w_last == 0 else max(1e-20, self.delta_w_last / 3)
        while dw <= 1e40:
            F = LDLFactor(build(dw, dc))
            if F.inertia[:2] == (n, me + mi) and F.inertia[2] == 0:
                self.delta_w_last = dw
                return F, dw, dc
            if F.inertia[2] > 0 and dc == 0.0 and (me + mi) > 0:
                dc = 1e-8 * mu ** 0.25
                continue
            dw *= 100 if self.delta_w_last == 0 else 8
        raise np.linalg.LinAlgError("inertia correction failed")

    # --- main loop --------------------------------------------------------
    def run(self, x0):
        o = self.opts
        P = self.P
        n, me, mi = self.n, self.me, self.mi
        x = _push_into_box(np.asarray(x0, float)[P.free], P.l, P.u, o.bound_push)
        ci0 = P.ci(x) if mi else np.zeros(0)
        s = np.maximum(-ci0, o.bound_push * np.maximum(1.0, np.abs(ci0)))
        zl = np.where(self.hl, 1.0, 0.0)
        zu = np.where(self.hu, 1.0, 0.0)
        zs = np.ones(mi)
        yi = zs.copy()
        ev = self.evaluate(x, s)
        ye = np.zeros(me)
        if me:
            rhs = -(ev["g"] + ev["ji"].T @ yi - zl + zu)
            est = np.linalg.lstsq(ev["je"].T, rhs, rcond=None)[0]
            if np.max(np.abs(est), initial=0.0) <= o.mult_init_max:
                ye = est
        mu = o.mu_init
        status = "max_iter"
        H_abs = None
        it = 0
        parts = (np.inf, np.inf, np.inf)
        for it in range(o.max_iter + 1):
            E0, parts, _ = self.errors(x, s, ev, ye, yi, zl, zu, zs, 0.0, H_abs)
            if it > 0 and E0 <= o.tol:
                status = "optimal"
                break
            if it == o.max_iter:
                break
            while True:
                Emu, _, _ = self.errors(x, s, ev, ye, yi, zl, zu, zs, mu, H_abs)
                if Emu <= o.kappa_eps * mu and mu > o.mu_min:
                    mu = max(o.mu_min, mu / 10.0)
                else:
                    break
            W = P.hess(x, 1.0, ye, yi)
            if not np.all(np.isfinite(W)):
                raise FloatingPointError("non-finite Hessian in interior-point evaluation")
            H_abs = np.abs(W)
            dl, du = self.slacks(x)
            Sx = np.where(self.hl, zl / dl, 0.0) + np.where(self.hu, zu / du, 0.0)
            Ss = zs / s if mi else np.zeros(0)
            F, dw, dc = self.factor(W, Sx, Ss, ev["je"], ev["ji"], mu)
            # right-hand side of the condensed system
            gphi = ev["g"] - np.where(self.hl, mu / dl, 0.0) + np.where(self.hu, mu / du, 0.0)
            rx = gphi + ev["je"].T @ ye + ev["ji"].T @ yi
            rs = yi - (mu / s if mi else 0.0)
            rhs = np.concatenate([-rx, -ev["ce"],
                                  -(ev["ci"] + s) + (rs / (Ss + dw) if mi else np.zeros(0))])
            sol = F.solve(rhs)
            dx, dye, dyi = sol[:n], sol[n:n + me], sol[n + me:]
            ds = (-rs - dyi) / (Ss + dw) if mi else np.zeros(0)
            dzl = np.where(self.hl, mu / dl - zl - zl / dl * dx, 0.0)
            dzu = np.where(self.hu, mu / du - zu + zu / du * dx, 0.0)
            dzs = mu / s - zs - Ss * ds if mi else np.zeros(0)

            tau = max(o.tau_min, 1.0 - mu)
            a_pri = min(_frac_to_boundary(dl[self.hl], dx[self.hl], tau),
                        _frac_to_boundary(du[self.hu], -dx[self.hu], tau),
                        _frac_to_boundary(s, ds, tau) if mi else 1.0)
            a_dual = min(_frac_to_boundary(zl[self.hl], dzl[self.hl], tau),
                         _frac_to_boundary(zu[self.hu], dzu[self.hu], tau),
                         _frac_to_boundary(zs, dzs, tau) if mi else 1.0)

            # merit penalty must dominate the new multipliers
            ymax = max(np.max(np.abs(ye + dye), initial=0.0), np.max(np.abs(yi + dyi), initial=0.0))
            if self.nu < 1.1 * ymax + 1.0:
                self.nu = 2.0 * ymax + 1.0
            theta = np.sum(np.abs(ev["ce"])) + np.sum(np.abs(ev["ci"] + s))
            phi0 = self.barrier_merit(x, s, ev["f"], ev["ce"], ev["ci"], mu)
            D = gphi @ dx - (mu / s) @ ds - self.nu * theta if mi else gphi @ dx - self.nu * theta
            accepted = None
            alpha = a_pri
            first = True
            # merit values closer than this are indistinguishable in floating point
            slack_phi = 10 * EPS * abs(phi0) if np.isfinite(phi0) else 0.0
            if theta <= 1e-3 * o.tol:
                # violation is at rounding level; its jitter times nu is noise too
                slack_phi += self.nu * max(10 * theta, 1e3 * EPS)
            if np.max(np.abs(dx) / (1.0 + np.abs(x)), initial=0.0) < 10 * EPS:
                D = 0.0
            while alpha > 1e-14:
                xt, st = x + alpha * dx, s + alpha * ds
                try:
                    evt = self.evaluate(xt, st)
                    phit = self.barrier_merit(xt, st, evt["f"], evt["ce"], evt["ci"], mu)
                except FloatingPointError:
                    evt, phit = None, np.inf
                if phit <= phi0 + 1e-4 * alpha * min(D, 0.0) + slack_phi:
                    accepted = (alpha, xt, st, evt)
                    break
                if first and evt is not None and (me + mi) > 0 and alpha == a_pri:
                    soc = self.second_order_correction(F, dw, Ss, xt, st, evt, tau, x, s)
                    if soc is not None:
                        xs_, ss_, evs = soc
                        phis = self.barrier_merit(xs_, ss_, evs["f"], evs["ce"], evs["ci"], mu)
                        if phis <= phi0 + 1e-4 * alpha * min(D, 0.0) + slack_phi:
                            accepted = (alpha, xs_, ss_, evs)
                            break
                first = False
                alpha *= 0.5
            if accepted is None:
                # merit differences below rounding: fall back to the KKT error itself
                accepted = self.error_acceptance(x, s, ev, ye, yi, zl, zu, zs, dx, ds, dye, dyi,
                                                 dzl, dzu, dzs, a_pri, a_dual, mu, H_abs)
            if accepted is None:
                if theta > o.tol:
                    rest = self.restore(x, s)
                    if rest is None:
                        status = "infeasible"
                        break
                    x, s = rest
                    ev = self.evaluate(x, s)
                    zl = np.where(self.hl, np.minimum(mu / self.slacks(x)[0], 1e3), 0.0)
                    zu = np.where(self.hu, np.minimum(mu / self.slacks(x)[1], 1e3), 0.0)
                    zs = np.minimum(mu / s, 1e3) if mi else zs
                    yi = zs.copy()
                    if me:
                        rhs = -(ev["g"] + ev["ji"].T @ yi - zl + zu)
                        ye = np.linalg.lstsq(ev["je"].T, rhs, rcond=None)[0]
                    continue
                # tiny step on a feasible iterate: take it and let mu shrink
                alpha = max(alpha, 1e-14)
                xt, st = x + alpha * dx, s + alpha * ds
                accepted = (alpha, xt, st, self.evaluate(xt, st))
            alpha, x, s, ev = accepted
            ye = ye + alpha * dye
            yi = yi + alpha * dyi
            zl = zl + a_dual * dzl
            zu = zu + a_dual * dzu
            if mi:
                zs = zs + a_dual * dzs
            # keep z within a factor kappa_sigma of mu / slack
            dl, du = self.slacks(x)
            k = o.kappa_sigma
            zl = np.where(self.hl, np.clip(zl, mu / (k * dl), k * mu / dl), 0.0)
            zu = np.where(self.hu, np.clip(zu, mu / (k * du), k * mu / du), 0.0)
            if mi:
                zs = np.clip(zs, mu / (k * s), k * mu / s)
            rec = (it, ev["f"], parts[1], parts[0], mu, alpha, dw)
            self.history.append(rec)
            self.emit("%4d  f=% .8e  inf_pr=%.2e  inf_du=%.2e  mu=%.1e  a=%.2e  dw=%.1e" % rec)
        # final multipliers in the original (signed) form
        return self.package(x, s, ev, ye, yi, zl, zu, status, it, parts)

    def error_acceptance(self, x, s, ev, ye, yi, zl, zu, zs, dx, ds, dye, dyi, dzl, dzu, dzs,
                         a_pri, a_dual, mu, H_abs):
        E0, _, _ = self.errors(x, s, ev, ye, yi, zl, zu, zs, mu, H_abs)
        xt, st = x + a_pri * dx, s + a_pri * ds
        try:
            evt = self.evaluate(xt, st)
        except FloatingPointError:
            return None
        Et, _, _ = self.errors(xt, st, evt, ye + a_pri * dye, yi + a_pri * dyi, zl + a_dual * dzl,
                               zu + a_dual * dzu, zs + a_dual * dzs if self.mi else zs, mu, H_abs)
        if Et < 0.99 * E0:
            return (a_pri, xt, st, evt)
        return None

    def second_order_correction(self, F, dw, Ss, xt, st, evt, tau, x, s):
        n, me, mi = self.n, self.me, self.mi
        rhs = np.concatenate([np.zeros(n), -evt["ce"], -(evt["ci"] + st)])
        sol = F.solve(rhs)
        px = sol[:n]
        pyi = sol[n + me:]
        ps = (-pyi) / (Ss + dw) if mi else np.zeros(0)
        xs_, ss_ = xt + px, st + ps
        dl, du = self.slacks(x)
        ok = (np.all((xs_ - self.P.l)[self.hl] >= (1 - tau) * dl[self.hl])
              and np.all((self.P.u - xs_)[self.hu] >= (1 - tau) * du[self.hu])
              and (not mi or np.all(ss_ >= (1 - tau) * s)))
        if not ok:
            return None
        try:
            return xs_, ss_, self.evaluate(xs_, ss_)
        except FloatingPointError:
            return None

    def restore(self, x, s):
        """Gauss-Newton steps on the constraint violation.

        Returns a point with at least 10% less violation, or None when the
        violation cannot be reduced (local infeasibility).
        """
        P = self.P
        me, mi = self.me, self.mi
        tau = 0.99

        def viol(x_, s_):
            ce = P.ce(x_) if me else np.zeros(0)
            ci = P.ci(x_) if mi else np.zeros(0)
            return np.concatenate([ce, ci + s_])

        r = viol(x, s)
        th0 = np.linalg.norm(r)
        lam = 1e-4
        for _ in range(50):
            J = np.hstack([
                np.vstack([P.je(x) if me else np.zeros((0, self.n)), P.ji(x) if mi else np.zeros((0, self.n))]),
                np.vstack([np.zeros((me, mi)), np.eye(mi)]),
            ])
            dl, du = self.slacks(x)
            D = np.concatenate([np.where(self.hl, 1 / dl ** 2, 0) + np.where(self.hu, 1 / du ** 2, 0) + 1.0,
                                1 / s ** 2 + 1.0 if mi else np.zeros(0)])
            M = J @ (J.T / D[:, None]) + lam * np.eye(J.shape[0])
            d = -(J.T @ np.linalg.solve(M, r)) / D
            dx, ds = d[:self.n], d[self.n:]
            a = min(_frac_to_boundary(dl[self.hl], dx[self.hl], tau),
                    _frac_to_boundary(du[self.hu], -dx[self.hu], tau),
                    _frac_to_boundary(s, ds, tau) if mi else 1.0)
            improved = False
            while a > 1e-8:
                xt, st = x + a * dx, s + a * ds
                try:
                    rt = viol(xt, st)
                except FloatingPointError:
                    rt = None
                if rt is not None and np.all(np.isfinite(rt)) and np.linalg.norm(rt) < np.linalg.norm(r):
                    x, s, r = xt, st, rt
                    improved = True
                    break
                a *= 0.5
            if np.linalg.norm(r) <= 0.9 * th0 or np.linalg.norm(r) <= self.opts.tol:
                return x, s
            if not improved:
                lam *= 10
                if lam > 1e8:
                    return None
        return None

    def package(self, x, s, ev, ye, yi, zl, zu, status, it, parts):
        P = self.P
        nfull = P.nlp.n
        xf = P.full(x)
        zlf = np.zeros(nfull)
        zuf = np.zeros(nfull)
        zlf[P.free] = zl
        zuf[P.free] = zu
        if np.any(P.fixed):
            g = np.asarray(P.nlp.grad(xf), float)
            r = g.copy()
            if self.me:
                r += np.asarray(P.nlp.jac_eq(xf), float).reshape(self.me, -1).T @ ye
            if self.mi:
                r += np.asarray(P.nlp.jac_in(xf), float).reshape(self.mi, -1).T @ yi
            fx = P.fixed
            zlf[fx] = np.maximum(r[fx], 0.0)
            zuf[fx] = np.maximum(-r[fx], 0.0)
        return IPMResult(
            x=xf, y_eq=ye, y_in=np.maximum(yi, 0.0), z_lower=zlf, z_upper=zuf,
            status=status, iterations=it, stationarity=float(parts[0]), primal=float(parts[1]),
            complementarity=float(parts[2]), objective=float(ev["f"]), history=self.history,
        )


def interior_point(nlp: NLP, x0, options: Optional[IPMOptions] = None) -> IPMResult:
    """Run the interior-point method from ``x0``.

    Returns an :class:`IPMResult`; ``status`` is ``"optimal"``,
    ``"max_iter"`` or ``"infeasible"``.
    """
    opts = options or IPMOptions()
    solver = _Solver(nlp, opts)
    if solver.n == 0:
        # everything fixed: report the point with bound multipliers only
        s = np.zeros(nlp.m_in)
        ev = solver.evaluate(np.zeros(0), s)
        return solver.package(np.zeros(0), s, ev, np.zeros(nlp.m_eq), np.zeros(nlp.m_in),
                              np.zeros(0), np.zeros(0),
                              "optimal" if max(np.max(np.abs(ev["ce"]), initial=0.0),
                                               np.max(ev["ci"], initial=0.0)) <= opts.tol else "infeasible",
                              0, (0.0, 0.0, 0.0))
    return solver.run(x0)
