"""Pure-Python perch-impact integrator.

Reference implementation and import-time fallback for ``_kernel.pyx``; both
must stay step-for-step identical.  Parameter layout (``p``):

 0 m          mass (kg)                11 inertia     lean inertia about grip axis (kg m^2)
 1 g          effective gravity        12 y0          start height of grip axis over contact (m)
 2 k          fork stiffness           13 vy0         start vertical velocity (m/s, up +)
 3 c          fork damping             14 psi0        start lean (rad)
 4 travel     fork travel limit        15 omega0      start lean rate (rad/s)
 5 k_stop     stiffness past travel    16 dt          step (s)
 6 f_act      trigger threshold (N)    17 t_end       horizon (s)
 7 t_close    trigger-to-closed (s)    18 k_grip      closed-grip stiffness
 8 window     capture window (m)       19 c_grip      closed-grip damping
 9 lever      finger length (m)        20 stop_early  1: stop once captured or lost
10 arm        impact lean arm (m)      21 every       record every n steps

``rec`` is an (n, 5) float array receiving ``t, y, vy, force, psi`` rows, or
has zero rows.  Returns ``(status, n_rec, t_contact, v_contact, t_trig,
t_closed, peak_force, max_rise, max_up_speed, t_stable, vy_end, y_end)``
with status 0 = no trigger, 1 = captured, 2 = bounced out, 3 = toppled out
(a loss is attributed to rebound when the rise of the grip axis is at least
the finger-tip rise from lean).
Times of events that did not happen are -1.
"""

from __future__ import annotations

NO_TRIGGER, CAPTURED, BOUNCED_OUT, TOPPLED_OUT = 0, 1, 2, 3


def integrate(p, rec):
    m = p[0]
    g = p[1]
    k = p[2]
    c = p[3]
    travel = p[4]
    k_stop = p[5]
    f_act = p[6]
    t_close = p[7]
    window = p[8]
    lever = p[9]
    arm = p[10]
    inertia = p[11]
    y = p[12]
    vy = p[13]
    psi = p[14]
    om = p[15]
    dt = p[16]
    t_end = p[17]
    k_grip = p[18]
    c_grip = p[19]
    stop_early = p[20] > 0.5
    every = int(p[21])
    n_rows = rec.shape[0]

    # 0 pre-trigger, 1 closing, 2 gripped, 3 lost
    phase = 0
    status = NO_TRIGGER
    t = 0.0
    t_contact = -1.0
    v_contact = 0.0
    t_trig = -1.0
    t_closed = -1.0
    t_unstable = -1.0
    peak = 0.0
    max_rise = 0.0
    max_up = 0.0
    n_rec = 0
    step = 0
    n_steps = int(t_end / dt + 0.5)

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
            tip = lever * abs(psi)
            if y + tip > window:
                # lost; blame whichever of rebound and lean contributes more
                phase = 3
                status = BOUNCED_OUT if y >= tip else TOPPLED_OUT
            elif t - t_trig >= t_close:
                phase = 2
                status = CAPTURED
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
        t_stable = (t_unstable if t_unstable > t_closed else t_closed) - max(t_contact, 0.0)
    else:
        t_stable = -1.0
    return (status, n_rec, t_contact, v_contact, t_trig, t_closed, peak, max_rise, max_up, t_stable, vy, y)
