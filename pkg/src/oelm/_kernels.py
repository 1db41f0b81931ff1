"""Compiled inner loops (numba).

Everything here is deliberately free of Python objects: plain arrays in,
plain arrays out.  Randomness is pre-drawn by callers so results are
reproducible and independent of the compilation path.  Batch functions loop
samples in row-major order; per-sample arithmetic is identical to the
single-trajectory variants, which the test suite checks bit-for-bit.

Time integration conventions: records are sampled on a uniform grid of step
``dt``; ``a_fine`` interleaves grid and midpoint values (step ``dt/2``) so
Runge-Kutta stages use exact forcing values rather than interpolation.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_NEWTON_FAIL = 2

_BLOWUP = 1e12


# ----------------------------------------------------------------------
# cubic / linear-term SDOF oscillator:  z'' + c z' + k3 z^3 + kl z = -a(t)
# ----------------------------------------------------------------------


@njit(cache=True)
def cubic_step(z, v, a0, am, a1, dt, c, k3, kl):
    k1z = v
    k1v = -c * v - k3 * z * z * z - kl * z - a0
    z2 = z + 0.5 * dt * k1z
    v2 = v + 0.5 * dt * k1v
    k2z = v2
    k2v = -c * v2 - k3 * z2 * z2 * z2 - kl * z2 - am
    z3 = z + 0.5 * dt * k2z
    v3 = v + 0.5 * dt * k2v
    k3z = v3
    k3v = -c * v3 - k3 * z3 * z3 * z3 - kl * z3 - am
    z4 = z + dt * k3z
    v4 = v + dt * k3v
    k4z = v4
    k4v = -c * v4 - k3 * z4 * z4 * z4 - kl * z4 - a1
    zn = z + dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    vn = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return zn, vn


@njit(cache=True)
def cubic_peaks(a_fine, dt, c, k3, kl, out, status):
    nb, nf = a_fine.shape
    nstep = (nf - 1) // 2
    for s in range(nb):
        z = 0.0
        v = 0.0
        peak = 0.0
        status[s] = STATUS_OK
        for k in range(nstep):
            z, v = cubic_step(
                z, v, a_fine[s, 2 * k], a_fine[s, 2 * k + 1], a_fine[s, 2 * k + 2], dt, c, k3, kl
            )
            az = abs(z)
            if az > peak:
                peak = az
            if not (az < _BLOWUP):
                status[s] = STATUS_NONFINITE
                peak = math.nan
                break
        out[s] = peak


@njit(cache=True)
def cubic_traj(a_fine, dt, c, k3, kl, out_z, out_v):
    nf = a_fine.shape[0]
    nstep = (nf - 1) // 2
    z = 0.0
    v = 0.0
    out_z[0] = z
    out_v[0] = v
    for k in range(nstep):
        z, v = cubic_step(
            z, v, a_fine[2 * k], a_fine[2 * k + 1], a_fine[2 * k + 2], dt, c, k3, kl
        )
        out_z[k + 1] = z
        out_v[k + 1] = v
        if not (abs(z) < _BLOWUP):
            return STATUS_NONFINITE, k + 1
    return STATUS_OK, nstep


# ----------------------------------------------------------------------
# Bouc-Wen hysteretic SDOF:
#   z'' + 2 zn wn z' + wn^2 (alpha z + (1-alpha) zh) = -a(t)
#   zh'  = amp*v - gam |v| |zh|^(nexp-1) zh - eta |zh|^nexp v
# ----------------------------------------------------------------------


@njit(cache=True)
def _bw_dzh(v, zh, amp, gam, eta, nexp):
    azh = abs(zh)
    if azh == 0.0:
        p1 = 0.0 if nexp > 1.0 else 1.0
        pn = 0.0
    else:
        p1 = azh ** (nexp - 1.0)
        pn = azh**nexp
    return amp * v - gam * abs(v) * p1 * zh - eta * pn * v


# hysteretic-rate control: the zh equation has local decay rate
# lam = nexp (gam + eta) |v| max(|zh|, rail)^(nexp-1), which exceeds the
# explicit-RK4 stability limit when strong forcing drives |v| high while zh
# is railed.  Steps with dt*lam above _BW_TRIG are split into micro-steps
# targeting dt*lam <= _BW_TARGET each; _BW_TRIG sits above the rate range
# of ordinary records so those keep the plain step bit-for-bit.
_BW_TRIG = 2.0
_BW_TARGET = 0.8
_BW_MAXSUB = 4096


@njit(cache=True)
def boucwen_step(z, v, zh, a0, am, a1, dt, wn, zn, alpha, nexp, amp, gam, eta):
    w2 = wn * wn
    tc = 2.0 * zn * wn

    k1z = v
    k1v = -tc * v - w2 * (alpha * z + (1.0 - alpha) * zh) - a0
    k1h = _bw_dzh(v, zh, amp, gam, eta, nexp)

    z2 = z + 0.5 * dt * k1z
    v2 = v + 0.5 * dt * k1v
    h2 = zh + 0.5 * dt * k1h
    k2z = v2
    k2v = -tc * v2 - w2 * (alpha * z2 + (1.0 - alpha) * h2) - am
    k2h = _bw_dzh(v2, h2, amp, gam, eta, nexp)

    z3 = z + 0.5 * dt * k2z
    v3 = v + 0.5 * dt * k2v
    h3 = zh + 0.5 * dt * k2h
    k3z = v3
    k3v = -tc * v3 - w2 * (alpha * z3 + (1.0 - alpha) * h3) - am
    k3h = _bw_dzh(v3, h3, amp, gam, eta, nexp)

    z4 = z + dt * k3z
    v4 = v + dt * k3v
    h4 = zh + dt * k3h
    k4z = v4
    k4v = -tc * v4 - w2 * (alpha * z4 + (1.0 - alpha) * h4) - a1
    k4h = _bw_dzh(v4, h4, amp, gam, eta, nexp)

    znew = z + dt / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    vnew = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    hnew = zh + dt / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
    return znew, vnew, hnew


@njit(cache=True)
def boucwen_span(z, v, zh, a0, am, a1, dt, wn, zn, alpha, nexp, amp, gam, eta, rail, v_trig):
    """Advance one record step, micro-stepping when the zh rate is stiff.

    ``rail`` is the ultimate hysteretic displacement (amp/(gam+eta))^(1/nexp)
    and ``v_trig`` the precomputed velocity magnitude where dt*lam crosses
    _BW_TRIG with zh railed, so the fast path costs one compare.  Returns
    (z, v, zh, ok); ``ok`` False means the stiff rate exceeded the micro-step
    budget (divergent forcing scale).
    """
    veff = abs(v) + dt * abs(am)
    azh = abs(zh)
    if azh <= rail:
        if veff <= v_trig:
            zn_, vn_, hn_ = boucwen_step(z, v, zh, a0, am, a1, dt, wn, zn, alpha, nexp, amp, gam, eta)
            return zn_, vn_, hn_, True
        lam_dt = nexp * (gam + eta) * veff * rail ** (nexp - 1.0) * dt
    else:
        lam_dt = nexp * (gam + eta) * veff * azh ** (nexp - 1.0) * dt
        if lam_dt <= _BW_TRIG:
            zn_, vn_, hn_ = boucwen_step(z, v, zh, a0, am, a1, dt, wn, zn, alpha, nexp, amp, gam, eta)
            return zn_, vn_, hn_, True
    if not (lam_dt < _BW_TARGET * _BW_MAXSUB):
        return z, v, zh, False
    n_sub = 1 + int(lam_dt / _BW_TARGET)
    # quadratic through the step's three forcing values, exact at 0, 1/2, 1
    b_lin = -3.0 * a0 + 4.0 * am - a1
    c_quad = 2.0 * a0 - 4.0 * am + 2.0 * a1
    h = dt / n_sub
    for i in range(n_sub):
        t0 = i / n_sub
        tm = (i + 0.5) / n_sub
        t1 = (i + 1.0) / n_sub
        s0 = a0 + t0 * (b_lin + t0 * c_quad)
        sm = a0 + tm * (b_lin + tm * c_quad)
        s1 = a0 + t1 * (b_lin + t1 * c_quad)
        z, v, zh = boucwen_step(z, v, zh, s0, sm, s1, h, wn, zn, alpha, nexp, amp, gam, eta)
    return z, v, zh, True


@njit(cache=True)
def _bw_rail(amp, gam, eta, nexp):
    if gam + eta <= 0.0:
        return 0.0
    return (abs(amp) / (gam + eta)) ** (1.0 / nexp)


@njit(cache=True)
def _bw_v_trig(dt, nexp, gam, eta, rail):
    denom = nexp * (gam + eta) * rail ** (nexp - 1.0) * dt
    if denom <= 0.0:
        return math.inf
    return _BW_TRIG / denom


@njit(cache=True)
def boucwen_peaks(a_fine, dt, wn, zn, alpha, nexp, amp, gam, eta, out, status):
    nb, nf = a_fine.shape
    nstep = (nf - 1) // 2
    rail = _bw_rail(amp, gam, eta, nexp)
    v_trig = _bw_v_trig(dt, nexp, gam, eta, rail)
    for s in range(nb):
        z = 0.0
        v = 0.0
        zh = 0.0
        peak = 0.0
        status[s] = STATUS_OK
        for k in range(nstep):
            z, v, zh, ok = boucwen_span(
                z,
                v,
                zh,
                a_fine[s, 2 * k],
                a_fine[s, 2 * k + 1],
                a_fine[s, 2 * k + 2],
                dt,
                wn,
                zn,
                alpha,
                nexp,
                amp,
                gam,
                eta,
                rail,
                v_trig,
            )
            az = abs(z)
            if az > peak:
                peak = az
            if not ok or not (az < _BLOWUP):
                status[s] = STATUS_NONFINITE
                peak = math.nan
                break
        out[s] = peak


@njit(cache=True)
def boucwen_traj(a_fine, dt, wn, zn, alpha, nexp, amp, gam, eta, out_z, out_v, out_h):
    nf = a_fine.shape[0]
    nstep = (nf - 1) // 2
    rail = _bw_rail(amp, gam, eta, nexp)
    v_trig = _bw_v_trig(dt, nexp, gam, eta, rail)
    z = 0.0
    v = 0.0
    zh = 0.0
    out_z[0] = z
    out_v[0] = v
    out_h[0] = zh
    for k in range(nstep):
        z, v, zh, ok = boucwen_span(
            z,
            v,
            zh,
            a_fine[2 * k],
            a_fine[2 * k + 1],
            a_fine[2 * k + 2],
            dt,
            wn,
            zn,
            alpha,
            nexp,
            amp,
            gam,
            eta,
            rail,
            v_trig,
        )
        out_z[k + 1] = z
        out_v[k + 1] = v
        out_h[k + 1] = zh
        if not ok or not (abs(z) < _BLOWUP):
            return STATUS_NONFINITE, k + 1
    return STATUS_OK, nstep


# ----------------------------------------------------------------------
# multistory shear frame, bilinear hysteretic stories, Newmark + Newton
# ----------------------------------------------------------------------


@njit(cache=True)
def _solve6(A, b, x):
    """Solve A x = b by partial-pivot elimination; A and b are clobbered."""
    n = A.shape[0]
    for col in range(n):
        piv = col
        big = abs(A[col, col])
        for r in range(col + 1, n):
            v = abs(A[r, col])
            if v > big:
                big = v
                piv = r
        if piv != col:
            for c in range(n):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        inv = 1.0 / A[col, col]
        for r in range(col + 1, n):
            f = A[r, col] * inv
            if f != 0.0:
                for c in range(col + 1, n):
                    A[r, c] -= f * A[col, c]
                b[r] -= f * b[col]
                A[r, col] = 0.0
    for r in range(n - 1, -1, -1):
        acc = b[r]
        for c in range(r + 1, n):
            acc -= A[r, c] * x[c]
        x[r] = acc / A[r, r]


@njit(cache=True)
def _building_run(
    a, dt, masses, k_el, ratio, d_yield, cmat, u0, v0, tol, max_iter, peaks, drift_out, keep_traj
):
    """Newmark (average acceleration) with per-step Newton on displacements.

    Story force: f_i = r_i k_i d_i + (1 - r_i) k_i s_i with the memory
    variable ``s_i`` clamped to the yield drift (elastoplastic component of
    the bilinear law).  Returns a status code; peak |drift| per story in
    ``peaks``; optionally the full drift history in ``drift_out``.
    """
    ns = masses.size
    nt = a.size
    b0 = 4.0 / (dt * dt)
    b1 = 2.0 / dt

    u = np.empty(ns)
    v = np.empty(ns)
    acc = np.empty(ns)
    s_mem = np.zeros(ns)
    d_com = np.zeros(ns)

    drift = np.empty(ns)
    s_tr = np.empty(ns)
    kt = np.empty(ns)
    fstory = np.empty(ns)
    fnode = np.empty(ns)
    resid = np.empty(ns)
    du = np.empty(ns)
    jac = np.empty((ns, ns))
    u_new = np.empty(ns)

    for i in range(ns):
        u[i] = u0[i]
        v[i] = v0[i]
        peaks[i] = 0.0

    # committed drifts and memory from the initial displacement state
    for i in range(ns):
        d_com[i] = u[i] - (u[i - 1] if i > 0 else 0.0)
        s = d_com[i]
        if s > d_yield[i]:
            s = d_yield[i]
        elif s < -d_yield[i]:
            s = -d_yield[i]
        s_mem[i] = s
        ad = abs(d_com[i])
        if ad > peaks[i]:
            peaks[i] = ad

    # initial acceleration from equilibrium
    for i in range(ns):
        fstory[i] = ratio[i] * k_el[i] * d_com[i] + (1.0 - ratio[i]) * k_el[i] * s_mem[i]
    for i in range(ns):
        fup = fstory[i + 1] if i + 1 < ns else 0.0
        fnode[i] = fstory[i] - fup
    for i in range(ns):
        cv = 0.0
        for j in range(ns):
            cv += cmat[i, j] * v[j]
        acc[i] = -a[0] - (cv + fnode[i]) / masses[i]

    if keep_traj:
        for i in range(ns):
            drift_out[0, i] = d_com[i]

    for k in range(nt - 1):
        a1 = a[k + 1]
        for i in range(ns):
            u_new[i] = u[i]
        converged = False
        for _ in range(max_iter):
            # state-dependent forces at the trial displacement
            for i in range(ns):
                drift[i] = u_new[i] - (u_new[i - 1] if i > 0 else 0.0)
                s = s_mem[i] + (drift[i] - d_com[i])
                elastic = True
                if s > d_yield[i]:
                    s = d_yield[i]
                    elastic = False
                elif s < -d_yield[i]:
                    s = -d_yield[i]
                    elastic = False
                s_tr[i] = s
                kt[i] = k_el[i] * (ratio[i] + (1.0 - ratio[i]) * (1.0 if elastic else 0.0))
                fstory[i] = ratio[i] * k_el[i] * drift[i] + (1.0 - ratio[i]) * k_el[i] * s
            ref = 1.0
            for i in range(ns):
                fup = fstory[i + 1] if i + 1 < ns else 0.0
                fnode[i] = fstory[i] - fup
                if abs(fnode[i]) > ref:
                    ref = abs(fnode[i])
            # residual of the Newmark-discretized equation of motion
            for i in range(ns):
                acc_n = b0 * (u_new[i] - u[i] - dt * v[i]) - acc[i]
                vel_n = b1 * (u_new[i] - u[i]) - v[i]
                cv = 0.0
                for j in range(ns):
                    cv += cmat[i, j] * (b1 * (u_new[j] - u[j]) - v[j])
                resid[i] = masses[i] * acc_n + cv + fnode[i] + masses[i] * a1
                t1 = abs(masses[i] * acc_n)
                if t1 > ref:
                    ref = t1
                t2 = abs(masses[i] * a1)
                if t2 > ref:
                    ref = t2
            rmax = 0.0
            for i in range(ns):
                if abs(resid[i]) > rmax:
                    rmax = abs(resid[i])
            if rmax <= tol * ref:
                converged = True
                break
            # tangent of residual wrt u_new
            for i in range(ns):
                for j in range(ns):
                    jac[i, j] = b1 * cmat[i, j]
                jac[i, i] += masses[i] * b0
            for i in range(ns):
                jac[i, i] += kt[i]
                if i + 1 < ns:
                    jac[i, i] += kt[i + 1]
                    jac[i, i + 1] -= kt[i + 1]
                    jac[i + 1, i] -= kt[i + 1]
            _solve6(jac, resid, du)
            for i in range(ns):
                u_new[i] -= du[i]
                if not (abs(u_new[i]) < _BLOWUP):
                    return STATUS_NONFINITE, k + 1
        if not converged:
            return STATUS_NEWTON_FAIL, k + 1
        # commit
        for i in range(ns):
            acc[i] = b0 * (u_new[i] - u[i] - dt * v[i]) - acc[i]
            v[i] = b1 * (u_new[i] - u[i]) - v[i]
            u[i] = u_new[i]
            d_new = u[i] - (u[i - 1] if i > 0 else 0.0)
            s_mem[i] = s_tr[i]
            d_com[i] = d_new
            ad = abs(d_new)
            if ad > peaks[i]:
                peaks[i] = ad
            if keep_traj:
                drift_out[k + 1, i] = d_new
    return STATUS_OK, nt - 1


@njit(cache=True)
def building_peaks(a_batch, dt, masses, k_el, ratio, d_yield, cmat, out, status):
    nb = a_batch.shape[0]
    ns = masses.size
    u0 = np.zeros(ns)
    v0 = np.zeros(ns)
    dummy = np.empty((1, ns))
    pk = np.empty(ns)
    for s in range(nb):
        st, _ = _building_run(
            a_batch[s], dt, masses, k_el, ratio, d_yield, cmat, u0, v0, 1e-10, 50, pk, dummy, False
        )
        status[s] = st
        for i in range(ns):
            out[s, i] = pk[i] if st == STATUS_OK else math.nan


# ----------------------------------------------------------------------
# component-wise Metropolis-within-Gibbs on linear-surrogate kernels
# ----------------------------------------------------------------------

MODE_NORMAL = 0
MODE_WEIGHT = 1
MODE_SMOOTH = 2


@njit(cache=True)
def _softplus(z):
    if z > 0.0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@njit(cache=True)
def _log_kernel(peak, mode, threshold, sharpness, floor):
    if mode == MODE_WEIGHT:
        if peak < floor:
            return -math.inf
        return math.log(peak)
    if mode == MODE_SMOOTH:
        return -_softplus(sharpness * (threshold - peak))
    return 0.0


@njit(cache=True)
def gibbs_linear_sweeps(
    traj_rows,
    scale,
    x,
    y,
    n_sweeps,
    mode,
    threshold,
    sharpness,
    floor,
    step_state,
    adapt,
    window_state,
    deltas,
    unifs,
    keep,
    out_x,
    out_peak,
    peak_series,
):
    """Run full coordinate sweeps of Metropolis-within-Gibbs.

    The target kernel is ``g(peak(x)) * prod_j phi(x_j)`` where ``peak(x)``
    is the surrogate peak magnitude, maintained incrementally through the
    unit-scale trajectory ``y`` (one rank-1 update per accepted move).
    ``deltas`` are U(-1,1), ``unifs`` U(0,1), both shaped (n_sweeps, n).
    Sweeps with ``keep`` set snapshot the state into ``out_x``/``out_peak``.
    Returns (number of accepted proposals, number of snapshots).
    """
    n = x.size
    nt = y.size
    peak = 0.0
    for t in range(nt):
        ay = abs(y[t])
        if ay > peak:
            peak = ay
    m_cur = scale * peak
    logk = _log_kernel(m_cur, mode, threshold, sharpness, floor)
    accepted = 0
    kept = 0
    for s in range(n_sweeps):
        for j in range(n):
            delta = step_state[0] * deltas[s, j]
            row = traj_rows[j]
            pk = 0.0
            for t in range(nt):
                val = abs(y[t] + row[t] * delta)
                if val > pk:
                    pk = val
            m_prop = scale * pk
            logk_prop = _log_kernel(m_prop, mode, threshold, sharpness, floor)
            xj = x[j]
            dlogphi = -0.5 * ((xj + delta) * (xj + delta) - xj * xj)
            log_ratio = logk_prop - logk + dlogphi
            if log_ratio >= 0.0 or math.log(unifs[s, j]) < log_ratio:
                x[j] = xj + delta
                for t in range(nt):
                    y[t] += row[t] * delta
                m_cur = m_prop
                logk = logk_prop
                accepted += 1
                acc_flag = 1
            else:
                acc_flag = 0
            if adapt:
                window_state[0] += 1
                window_state[1] += acc_flag
                if window_state[0] >= 50:
                    rate = window_state[1] / window_state[0]
                    if rate > 0.5:
                        step_state[0] *= 1.1
                    elif rate < 0.3:
                        step_state[0] *= 0.9
                    window_state[0] = 0
                    window_state[1] = 0
        peak_series[s] = m_cur
        if keep[s]:
            for j in range(n):
                out_x[kept, j] = x[j]
            out_peak[kept] = m_cur
            kept += 1
    return accepted, kept
