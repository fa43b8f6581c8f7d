"""Compiled closed-loop right-hand side, RK4 loop and per-sample diagnostics.

The closed loop is passed in structured form (see
:func:`gridsync.control.kernel_arguments`):

    theta'  = w~
    z'      = A z + B xi,                  xi = W(theta) (w~ + w0)
    M w~'   = -Dm w~ + tau~ - W^T C_e z
    tau~    = tau0 + W^T (F z + f0) + sum_k v_k^T (G z + g0)_k / w0
              - grad S_law(theta) - K_p w~
    v       = H_z z + H_xi xi

The hot functions take plain arrays; the argument tuples are unpacked once
per call from Python, which keeps per-step overhead low. Products are
written as loops so zero-size blocks (no lines, no potential) need no special
casing.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _potential(theta, amp, pa, pc, pp, shift, grad, psi, y, py, q):
    """Value of 1/2 (A Psi(theta - s) - c)^T P (.) and its gradient into ``grad``."""
    n = theta.size
    r = pa.shape[0]
    for k in range(n):
        phi = theta[k] - shift[k]
        psi[2 * k] = amp[k] * np.cos(phi)
        psi[2 * k + 1] = amp[k] * np.sin(phi)
    for i in range(r):
        s = -pc[i]
        for j in range(2 * n):
            s += pa[i, j] * psi[j]
        y[i] = s
    val = 0.0
    for i in range(r):
        s = 0.0
        for j in range(r):
            s += pp[i, j] * y[j]
        py[i] = s
        val += 0.5 * y[i] * s
    for j in range(2 * n):
        q[j] = 0.0
    for i in range(r):
        for j in range(2 * n):
            q[j] += pa[i, j] * py[i]
    for k in range(n):
        phi = theta[k] - shift[k]
        grad[k] = -amp[k] * np.sin(phi) * q[2 * k] + amp[k] * np.cos(phi) * q[2 * k + 1]
    return val


@njit(cache=True)
def _evaluate(x, amp, w0, mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi,
              use_g, use_pot, pa, pc, pp, shift, dx, tau, wx, wy, xi, grad, psi, y, py, q):
    n = amp.size
    nz = a_el.shape[0]
    off = 2 * n
    for k in range(n):
        wx[k] = -amp[k] * np.sin(x[k])
        wy[k] = amp[k] * np.cos(x[k])
        sp = x[n + k] + w0
        xi[2 * k] = wx[k] * sp
        xi[2 * k + 1] = wy[k] * sp

    for i in range(nz):
        s = 0.0
        for j in range(nz):
            s += a_el[i, j] * x[off + j]
        for j in range(2 * n):
            s += b_el[i, j] * xi[j]
        dx[off + i] = s

    for k in range(n):
        t = tau0[k]
        te = 0.0
        for c in range(2):
            i = 2 * k + c
            sc = 0.0
            sf = f0[i]
            for j in range(nz):
                zj = x[off + j]
                sc += ce[i, j] * zj
                sf += f[i, j] * zj
            wk = wx[k] if c == 0 else wy[k]
            te += wk * sc
            t += wk * sf
        if use_g:
            for c in range(2):
                i = 2 * k + c
                sv = 0.0
                sg = g0[i]
                for j in range(nz):
                    zj = x[off + j]
                    sv += hz[i, j] * zj
                    sg += g[i, j] * zj
                for j in range(2 * n):
                    sv += hxi[i, j] * xi[j]
                t += sv * sg / w0
        tau[k] = t
        dx[n + k] = -te

    if use_pot:
        _potential(x[:n], amp, pa, pc, pp, shift, grad, psi, y, py, q)
        for k in range(n):
            tau[k] -= grad[k]
    for k in range(n):
        tau[k] -= kp[k] * x[n + k]
        dx[k] = x[n + k]
        dx[n + k] = (dx[n + k] - damp[k] * x[n + k] + tau[k]) / mass[k]


@njit(cache=True)
def _energy(x, amp, w0, mass, mz, pz, ea, ec, ep, es, use_pot, grad, xh, psi, y, py, q):
    n = amp.size
    h = 0.0
    for k in range(n):
        h += 0.5 * mass[k] * x[n + k] ** 2
    nz = mz.size
    if nz:
        for k in range(n):
            xh[2 * k] = -amp[k] * np.sin(x[k]) * w0
            xh[2 * k + 1] = amp[k] * np.cos(x[k]) * w0
        for i in range(nz):
            if mz[i] == 0.0:
                continue
            s = x[2 * n + i]
            for j in range(2 * n):
                s -= pz[i, j] * xh[j]
            h += 0.5 * mz[i] * s * s
    if use_pot:
        h += _potential(x[:n], amp, ea, ec, ep, es, grad, psi, y, py, q)
    else:
        for k in range(n):
            grad[k] = 0.0
    return h


@njit(cache=True)
def _rk4_loop(x0, dt, nsteps, every, amp, w0, mass, damp, kp, tau0, a_el, b_el, ce, f, f0,
              g, g0, hz, hxi, use_g, use_pot, pa, pc, pp, shift,
              mz, pz, ea, ec, ep, es, e_pot):
    n = amp.size
    size = x0.size
    nsamp = nsteps // every + 1
    if nsteps % every != 0:
        nsamp += 1
    out = np.empty((nsamp, size))
    hs = np.empty(nsteps + 1)
    r = max(pa.shape[0], ea.shape[0])
    wx = np.empty(n)
    wy = np.empty(n)
    xi = np.empty(2 * n)
    grad = np.empty(n)
    psi = np.empty(2 * n)
    y = np.empty(r)
    py = np.empty(r)
    q = np.empty(2 * n)
    tau = np.empty(n)
    k1 = np.empty(size)
    k2 = np.empty(size)
    k3 = np.empty(size)
    k4 = np.empty(size)
    tmp = np.empty(size)
    x = x0.copy()
    out[0] = x
    hs[0] = _energy(x, amp, w0, mass, mz, pz, ea, ec, ep, es, e_pot, grad, xi, psi, y, py, q)
    j = 1
    for i in range(nsteps):
        _evaluate(x, amp, w0, mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi,
                  use_g, use_pot, pa, pc, pp, shift, k1, tau, wx, wy, xi, grad, psi, y, py, q)
        for c in range(size):
            tmp[c] = x[c] + 0.5 * dt * k1[c]
        _evaluate(tmp, amp, w0, mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi,
                  use_g, use_pot, pa, pc, pp, shift, k2, tau, wx, wy, xi, grad, psi, y, py, q)
        for c in range(size):
            tmp[c] = x[c] + 0.5 * dt * k2[c]
        _evaluate(tmp, amp, w0, mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi,
                  use_g, use_pot, pa, pc, pp, shift, k3, tau, wx, wy, xi, grad, psi, y, py, q)
        for c in range(size):
            tmp[c] = x[c] + dt * k3[c]
        _evaluate(tmp, amp, w0, mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi,
                  use_g, use_pot, pa, pc, pp, shift, k4, tau, wx, wy, xi, grad, psi, y, py, q)
        ok = True
        for c in range(size):
            x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
            if not np.isfinite(x[c]):
                ok = False
        if not ok:
            return out[:j], hs[:i + 1], i + 1
        hs[i + 1] = _energy(x, amp, w0, mass, mz, pz, ea, ec, ep, es, e_pot, grad, xi, psi, y, py, q)
        if (i + 1) % every == 0 or i + 1 == nsteps:
            out[j] = x
            j += 1
    return out, hs, -1


@njit(cache=True)
def _diagnostics(states, amp, w0, mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi,
                 use_g, use_pot, pa, pc, pp, shift, mz, pz, ea, ec, ep, es, e_pot):
    n = amp.size
    ns = states.shape[0]
    size = states.shape[1]
    r = max(pa.shape[0], ea.shape[0])
    tau_out = np.empty((ns, n))
    h = np.empty(ns)
    gn = np.empty(ns)
    dx = np.empty(size)
    wx = np.empty(n)
    wy = np.empty(n)
    xi = np.empty(2 * n)
    grad = np.empty(n)
    psi = np.empty(2 * n)
    y = np.empty(r)
    py = np.empty(r)
    q = np.empty(2 * n)
    tau = np.empty(n)
    for s in range(ns):
        x = states[s].copy()
        _evaluate(x, amp, w0, mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi,
                  use_g, use_pot, pa, pc, pp, shift, dx, tau, wx, wy, xi, grad, psi, y, py, q)
        tau_out[s] = tau
        h[s] = _energy(x, amp, w0, mass, mz, pz, ea, ec, ep, es, e_pot, grad, xi, psi, y, py, q)
        acc = 0.0
        for k in range(n):
            acc += grad[k] ** 2
        gn[s] = np.sqrt(acc)
    return tau_out, h, gn


@njit(cache=True)
def _algebraic_voltage(states, amp, w0, hz, hxi):
    n = amp.size
    ns = states.shape[0]
    nz = hz.shape[1]
    out = np.empty((ns, 2 * n))
    xi = np.empty(2 * n)
    for s in range(ns):
        x = states[s]
        for k in range(n):
            sp = x[n + k] + w0
            xi[2 * k] = -amp[k] * np.sin(x[k]) * sp
            xi[2 * k + 1] = amp[k] * np.cos(x[k]) * sp
        for i in range(2 * n):
            acc = 0.0
            for j in range(nz):
                acc += hz[i, j] * x[2 * n + j]
            for j in range(2 * n):
                acc += hxi[i, j] * xi[j]
            out[s, i] = acc
    return out


def _flat(args):
    (amp, w0a, mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi, flags,
     pa, pc, pp, shift) = args
    return (amp, float(w0a[0]), mass, damp, kp, tau0, a_el, b_el, ce, f, f0, g, g0, hz, hxi,
            bool(flags[0]), bool(flags[1]), pa, pc, pp, shift)


def _flat_energy(eargs):
    mz, pz, ea, ec, ep, es, eflags = eargs
    return mz, pz, ea, ec, ep, es, bool(eflags[0])


def rhs(x, args) -> np.ndarray:
    """Closed-loop derivative of the packed state [theta, w~, z]."""
    fa = _flat(args)
    n = fa[0].size
    r = fa[17].shape[0]
    dx = np.empty(x.size)
    _evaluate(np.asarray(x, dtype=float), *fa, dx, np.empty(n), np.empty(n), np.empty(n),
              np.empty(2 * n), np.empty(n), np.empty(2 * n), np.empty(r), np.empty(r), np.empty(2 * n))
    return dx


def integrate_rk4(x0, dt, nsteps, every, args, eargs):
    """Fixed-step RK4 of the closed loop.

    Returns:
        (samples, energy at every step, index of the first non-finite step or -1)
    """
    return _rk4_loop(np.asarray(x0, dtype=float), float(dt), int(nsteps), int(every),
                     *_flat(args), *_flat_energy(eargs))


def diagnostics(states, args, eargs):
    """Controller torque, total energy and potential-gradient norm per sample."""
    return _diagnostics(np.ascontiguousarray(states), *_flat(args), *_flat_energy(eargs))


def algebraic_voltage(states, args):
    """Bus voltages v = H_z z + H_xi xi for every sample."""
    return _algebraic_voltage(np.ascontiguousarray(states), args[0], float(args[1][0]), args[13], args[14])
