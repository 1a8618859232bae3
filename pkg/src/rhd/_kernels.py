"""Compiled inner loops for the trainers.

Everything here is plain float64 array code: RNG draws and bookkeeping live in
trainers.py, so the kernels stay deterministic and cacheable. q_kind encodes
the dual exponent: 0 -> q=2, 1 -> q=1 (p=inf), 2 -> q=inf (p=1), 3 -> general
finite q passed in qv. loss_kind: 0 cross-entropy, 1 hinge, 2 sigmoidal.
"""

import math

import numpy as np
from numba import njit


@njit(inline="always")
def _loss_terms(loss_kind, sigma, z):
    """(ell(z), ell'(z)). Cross-entropy evaluates log1p(e^-z) through a
    log(1+e) branch (the em < 1e-8 split keeps it within 1 ulp) because libm
    log1p costs 3x log in this loop."""
    if loss_kind == 0:
        az = abs(z)
        em = math.exp(-az)
        l1 = em if em < 1e-8 else math.log(1.0 + em)
        if z >= 0.0:
            return l1, -em / (1.0 + em)
        return l1 - z, -1.0 / (1.0 + em)
    elif loss_kind == 1:
        if z <= 1.0:
            return 1.0 - z, -1.0
        return 0.0, 0.0
    else:
        e = math.exp(-abs(z) / sigma)
        v = e if z > 0.0 else 2.0 - e
        return v, -e / sigma


@njit(inline="always")
def _norm_and_dir(w, q_kind, qv, u):
    """||w||_q, filling u with the attack direction (w.u = ||w||_q, ||u||_p = 1).

    u is zero when w is zero, which makes the delta term vanish and realizes
    the delta=0 convention at the origin."""
    d = w.size
    if q_kind == 0:
        s = 0.0
        for j in range(d):
            s += w[j] * w[j]
        nrm = math.sqrt(s)
        if nrm > 0.0:
            inv = 1.0 / nrm
            for j in range(d):
                u[j] = w[j] * inv
        else:
            for j in range(d):
                u[j] = 0.0
        return nrm
    elif q_kind == 1:
        s = 0.0
        for j in range(d):
            wj = w[j]
            s += abs(wj)
            u[j] = 1.0 if wj > 0.0 else (-1.0 if wj < 0.0 else 0.0)
        return s
    elif q_kind == 2:
        m = 0.0
        jb = -1
        for j in range(d):
            u[j] = 0.0
            a = abs(w[j])
            if a > m:
                m = a
                jb = j
        if jb >= 0:
            u[jb] = 1.0 if w[jb] > 0.0 else -1.0
        return m
    else:
        m = 0.0
        for j in range(d):
            a = abs(w[j])
            if a > m:
                m = a
        if m == 0.0:
            for j in range(d):
                u[j] = 0.0
            return 0.0
        s = 0.0
        for j in range(d):
            s += (abs(w[j]) / m) ** qv
        nrm = m * s ** (1.0 / qv)
        c = s ** (-(qv - 1.0) / qv)
        for j in range(d):
            a = (abs(w[j]) / m) ** (qv - 1.0) * c
            u[j] = a if w[j] > 0.0 else (-a if w[j] < 0.0 else 0.0)
        return nrm


@njit(cache=True, nogil=True)
def gd_loop(Xy, w, eta, r, q_kind, qv, loss_kind, sigma, steps,
            snap_iters, W_out, ref, track_ref,
            step_loss, step_err, step_gsq, step_dist):
    """Full-batch adversarial gradient descent.

    Per step: z_i = y_i w.x_i - r||w||_q (margins at the exact perturbation),
    update direction (1/n) sum ell'(z_i) y_i (x_i + delta_i), which collapses
    to (Xy^T ell')/n - (r/n)(sum ell') u. Records the robust surrogate and
    squared update norm every step, the robust error at snapshot iterations
    (elsewhere step_err holds NaN), and ||w_k - ref||^2 when track_ref.
    """
    n, d = Xy.shape
    XyT = np.ascontiguousarray(Xy.T)
    u = np.empty(d)
    lp = np.empty(n)
    sp = 0
    if track_ref:
        s = 0.0
        for j in range(d):
            dv = w[j] - ref[j]
            s += dv * dv
        step_dist[0] = s
    for k in range(steps + 1):
        snap_here = sp < snap_iters.size and snap_iters[sp] == k
        if snap_here:
            for j in range(d):
                W_out[sp, j] = w[j]
            sp += 1
        nrm = _norm_and_dir(w, q_kind, qv, u)
        rn = r * nrm
        z = np.dot(Xy, w)
        acc = 0.0
        ds_ = 0.0
        for i in range(n):
            zi = z[i] - rn
            val, lpi = _loss_terms(loss_kind, sigma, zi)
            acc += val
            ds_ += lpi
            lp[i] = lpi
        step_loss[k] = acc / n
        if snap_here:
            errs = 0
            for i in range(n):
                if z[i] - rn <= 0.0:
                    errs += 1
            step_err[k] = errs / n
        if k == steps:
            break
        g = np.dot(XyT, lp)
        cu = r * ds_ / n
        gs = 0.0
        for j in range(d):
            gj = g[j] / n - cu * u[j]
            g[j] = gj
            gs += gj * gj
        step_gsq[k] = gs
        for j in range(d):
            w[j] -= eta * g[j]
        if track_ref:
            s = 0.0
            for j in range(d):
                dv = w[j] - ref[j]
                s += dv * dv
            step_dist[k + 1] = s
    return sp


@njit(cache=True, nogil=True)
def sgd_chunk(Xy, w, eta, r, q_kind, qv, loss_kind, sigma,
              k0, snap_iters, sp, W_out,
              track_ref, ref, ref_rnorm,
              step_loss, step_ref_loss, step_gsq):
    """One chunk of online-SGD adversarial training; sample i is step k0+i.

    step_loss[k] is the robust surrogate of iterate w_k on its own sample
    (the quantity the regret bound averages); step_ref_loss[k] is the same
    sample's robust surrogate at the fixed reference vector.
    """
    m, d = Xy.shape
    u = np.empty(d)
    for i in range(m):
        k = k0 + i
        if sp < snap_iters.size and snap_iters[sp] == k:
            for j in range(d):
                W_out[sp, j] = w[j]
            sp += 1
        nrm = _norm_and_dir(w, q_kind, qv, u)
        z = 0.0
        for j in range(d):
            z += Xy[i, j] * w[j]
        z -= r * nrm
        val, lp = _loss_terms(loss_kind, sigma, z)
        step_loss[k] = val
        if track_ref:
            zr = 0.0
            for j in range(d):
                zr += Xy[i, j] * ref[j]
            zr -= ref_rnorm
            vr, _ = _loss_terms(loss_kind, sigma, zr)
            step_ref_loss[k] = vr
        gs = 0.0
        for j in range(d):
            gj = lp * (Xy[i, j] - r * u[j])
            gs += gj * gj
            w[j] -= eta * gj
        step_gsq[k] = gs
    return sp


@njit(inline="always")
def _l1_sphere_inplace(w, n1, scratch):
    """Project w (with ||w||_1 = n1 > 0) onto the unit l1 sphere in place."""
    d = w.size
    if n1 <= 1.0:
        inv = 1.0 / n1
        for j in range(d):
            w[j] *= inv
        return
    for j in range(d):
        scratch[j] = abs(w[j])
    scratch.sort()
    cum = 0.0
    tau = 0.0
    for idx in range(d):
        a = scratch[d - 1 - idx]
        cum += a
        tcand = (cum - 1.0) / (idx + 1.0)
        if a > tcand:
            tau = tcand
        else:
            break
    for j in range(d):
        aw = abs(w[j]) - tau
        if aw > 0.0:
            w[j] = aw if w[j] > 0.0 else -aw
        else:
            w[j] = 0.0


@njit(cache=True, nogil=True)
def psat_chunk(Xy, w, eta, r, sigma, q_is_one,
               k0, snap_iters, sp, W_out,
               step_loss, stats, scratch):
    """One chunk of projected stochastic adversarial training.

    Iterate indices are 1-based (w_1 is the initial point); sample i of the
    chunk is consumed by iterate k0+i. stats[0] accumulates the max deviation
    of ||w_k||_q from 1, stats[1] the min pre-projection ||w_hat||_q.
    """
    m, d = Xy.shape
    wb = np.empty(d)
    t = np.empty(d)
    max_dev = stats[0]
    min_pre = stats[1]
    for i in range(m):
        k = k0 + i
        if sp < snap_iters.size and snap_iters[sp] == k:
            for j in range(d):
                W_out[sp, j] = w[j]
            sp += 1
        if q_is_one:
            nrm = 0.0
            for j in range(d):
                wj = w[j]
                nrm += abs(wj)
                wb[j] = 1.0 if wj > 0.0 else (-1.0 if wj < 0.0 else 0.0)
        else:
            s = 0.0
            for j in range(d):
                s += w[j] * w[j]
            nrm = math.sqrt(s)
            for j in range(d):
                wb[j] = w[j]
        dev = abs(nrm - 1.0)
        if dev > max_dev:
            max_dev = dev
        z = 0.0
        for j in range(d):
            z += Xy[i, j] * w[j]
        z = z / nrm - r
        e = math.exp(-abs(z) / sigma)
        step_loss[k - 1] = e if z > 0.0 else 2.0 - e
        lp = -e / sigma
        denom1 = 1.0 if q_is_one else nrm      # ||w||_q^(q-1)
        denomq = nrm if q_is_one else nrm * nrm  # ||w||_q^q
        wt = 0.0
        for j in range(d):
            tj = Xy[i, j] - (r / denom1) * wb[j]
            t[j] = tj
            wt += w[j] * tj
        coef = wt / denomq
        sc = eta * lp / nrm
        for j in range(d):
            w[j] -= sc * (t[j] - wb[j] * coef)
        if q_is_one:
            pre = 0.0
            for j in range(d):
                pre += abs(w[j])
            if pre < min_pre:
                min_pre = pre
            _l1_sphere_inplace(w, pre, scratch)
        else:
            pre = 0.0
            for j in range(d):
                pre += w[j] * w[j]
            pre = math.sqrt(pre)
            if pre < min_pre:
                min_pre = pre
            inv = 1.0 / pre
            for j in range(d):
                w[j] *= inv
    stats[0] = max_dev
    stats[1] = min_pre
    return sp
