# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled perch-impact integrator; mirrors ``_kernel_py.integrate`` step for step."""

from libc.math cimport fabs


def integrate(const double[:] p, double[:, :] rec):
    cdef double m = p[0]
    cdef double g = p[1]
    cdef double k = p[2]
    cdef double c = p[3]
    cdef double travel = p[4]
    cdef double k_stop = p[5]
    cdef double f_act = p[6]
    cdef double t_close = p[7]
    cdef double window = p[8]
    cdef double lever = p[9]
    cdef double arm = p[10]
    cdef double inertia = p[11]
    cdef double y = p[12]
    cdef double vy = p[13]
    cdef double psi = p[14]
    cdef double om = p[15]
    cdef double dt = p[16]
    cdef double t_end = p[17]
    cdef double k_grip = p[18]
    cdef double c_grip = p[19]
    cdef bint stop_early = p[20] > 0.5
    cdef long every = <long>p[21]
    cdef Py_ssize_t n_rows = rec.shape[0]

    cdef int phase = 0
    cdef int status = 0
    cdef double t = 0.0
    cdef double t_contact = -1.0
    cdef double v_contact = 0.0
    cdef double t_trig = -1.0
    cdef double t_closed = -1.0
    cdef double t_unstable = -1.0
    cdef double peak = 0.0
    cdef double max_rise = 0.0
    cdef double max_up = 0.0
    cdef Py_ssize_t n_rec = 0
    cdef long step = 0
    cdef long n_steps = <long>(t_end / dt + 0.5)
    cdef double tip, force, fork, x, a, alpha, y_prev, vy_prev, frac, t_stable

    while step <= n_steps:
        force = 0.0
        fork = 0.0
        if phase != 3 and y < 0.0:
            x = -y
            fork = k * x - c * vy
            if fork < 0.0:
                fork = 0.0
            if x > travel:
                fork += k_stop * (x - travel)
        force = fork
        if phase == 2:
            force += -k_grip * y - c_grip * vy
        if fork > peak:
            peak = fork

        if every > 0 and step % every == 0 and n_rec < n_rows:
            rec[n_rec, 0] = t
            rec[n_rec, 1] = y
            rec[n_rec, 2] = vy
            rec[n_rec, 3] = force
            rec[n_rec, 4] = psi
            n_rec += 1

        if phase == 0 and fork >= f_act:
            phase = 1
            t_trig = t

        if phase == 1:
            tip = lever * fabs(psi)
            if y + tip > window:
                phase = 3
                status = 2 if y >= tip else 3
            elif t - t_trig >= t_close:
                phase = 2
                status = 1
                t_closed = t
            if phase >= 2 and stop_early:
                break

        if step == n_steps:
            break

        a = force / m - g
        if phase < 2:
            alpha = fork * arm / inertia
        else:
            alpha = 0.0
            om = 0.0
        y_prev = y
        vy_prev = vy
        vy += a * dt
        y += vy * dt
        om += alpha * dt
        psi += om * dt
        t += dt
        step += 1

        if t_contact < 0.0 and y < 0.0:
            frac = y_prev / (y_prev - y) if y_prev > y else 0.0
            t_contact = t - dt + frac * dt
            v_contact = -(vy_prev + frac * (vy - vy_prev))
        if t_contact >= 0.0 and phase != 3:
            if y > max_rise:
                max_rise = y
            if vy > max_up:
                max_up = vy
        if phase == 2 and (vy > 0.01 or vy < -0.01):
            t_unstable = t

    if phase == 2:
        t_stable = (t_unstable if t_unstable > t_closed else t_closed) - (t_contact if t_contact > 0.0 else 0.0)
    else:
        t_stable = -1.0
    return (status, n_rec, t_contact, v_contact, t_trig, t_closed, peak, max_rise, max_up, t_stable, vy, y)
