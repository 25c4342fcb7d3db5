# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled receiver loop; mirrors ``_pykernel.py`` statement for statement."""
import numpy as np

from libc.math cimport floor
from libc.stdlib cimport labs


cdef inline bint _wave(const unsigned char[::1] bits, const double[::1] p, long os,
                       long span, double u, double* out) noexcept nogil:
    cdef long n0 = <long>floor(u)
    cdef long nb = bits.shape[0]
    cdef double xf, w, acc
    cdef long i0, j, k
    if n0 - (span - 1) < 0 or n0 >= nb:
        return False
    xf = (u - n0) * os
    i0 = <long>xf
    w = xf - i0
    acc = 0.0
    for j in range(span):
        k = j * os + i0
        acc += (2.0 * bits[n0 - j] - 1.0) * (p[k] + w * (p[k + 1] - p[k]))
    out[0] = acc
    return True


def run(st, prm, long n_ui, long max_ticks, double stop_u, bint record):
    cdef const unsigned char[::1] bits = prm.bits
    cdef const double[::1] p = prm.pulse
    cdef const double[::1] dt = prm.drift_t
    cdef const double[::1] dp = prm.drift_ppm
    cdef const double[::1] noise = prm.noise
    cdef long nbits = bits.shape[0]
    cdef long os = prm.os, span = prm.span, steps = prm.steps
    cdef double half_rate = prm.data_rate * 0.5
    cdef double tx_s = 1.0 / prm.data_rate
    cdef double f_base = prm.f_vco
    cdef long nd = dt.shape[0], nn = noise.shape[0]
    cdef long period = prm.edge_period
    cdef double mism = prm.phi5_mismatch
    cdef bint coarse = prm.coarse, srfd_on = prm.srfd_on
    cdef bint age_pol = prm.missing_age, clear_pol = prm.clear_unresolved
    cdef long win = prm.window
    cdef bint dlf_on = prm.dlf_on
    cdef long kp = prm.kp, chunk = prm.chunk
    cdef double ki = prm.ki
    cdef bint ber_on = prm.ber_on
    cdef double center_ui = prm.center_ui

    cdef double c = st.c, pf = st.pf, f_reg = st.f_reg, monitor = st.monitor
    cdef long slot = st.slot, code = st.code, wraps = st.wraps
    cdef long chunk_sum = st.chunk_sum, chunk_n = st.chunk_n
    cdef long dm1 = st.dm1, dm2 = st.dm2, e_pend = st.e_pend
    cdef long g1v = st.g1v, g1a = st.g1a, g2v = st.g2v, g2a = st.g2a, cur = st.cur
    cdef long n_prev = st.n_prev, noise_pos = st.noise_pos
    cdef long acc = st.acc, ticks = st.ticks, tick_up = st.tick_up, tick_dn = st.tick_dn
    cdef long votes_up = st.votes_up, votes_dn = st.votes_dn
    cdef long g1_up = st.g1_up, g1_n = st.g1_n, g2_up = st.g2_up, g2_n = st.g2_n
    cdef long ber_bits = st.ber_bits, ber_errors = st.ber_errors, ui_count = st.ui_count

    cdef long nrec = n_ui if record else 0
    r_data_a = np.zeros(nrec)
    r_edge_a = np.full(nrec, np.nan)
    r_bit_a = np.zeros(nrec, dtype=np.int8)
    r_dec_a = np.zeros(nrec, dtype=np.int8)
    r_vote_a = np.zeros(nrec, dtype=np.int8)
    r_group_a = np.zeros(nrec, dtype=np.int8)
    r_tick_a = np.zeros(nrec, dtype=np.int8)
    r_code_a = np.zeros(nrec, dtype=np.int64)
    cdef double[::1] r_data = r_data_a
    cdef double[::1] r_edge = r_edge_a
    cdef signed char[::1] r_bit = r_bit_a
    cdef signed char[::1] r_dec = r_dec_a
    cdef signed char[::1] r_vote = r_vote_a
    cdef signed char[::1] r_group = r_group_a
    cdef signed char[::1] r_tick = r_tick_a
    cdef long long[::1] r_code = r_code_a

    cdef long call_ticks = 0, dj = 0, it = 0
    cdef bint bad = False
    cdef double t, ppm, f, rx, du, eu, v, ev, off
    cdef long d, vote, grp, tick, a, b, sec, s, n, whole

    with nogil:
        while it < n_ui:
            if c >= stop_u or (max_ticks > 0 and call_ticks >= max_ticks):
                break
            if nd == 0:
                f = f_base
            else:
                t = c * tx_s
                if t <= dt[0]:
                    ppm = dp[0]
                elif t >= dt[nd - 1]:
                    ppm = dp[nd - 1]
                else:
                    while dt[dj + 1] < t:
                        dj += 1
                    ppm = dp[dj] + (dp[dj + 1] - dp[dj]) * (t - dt[dj]) / (dt[dj + 1] - dt[dj])
                f = f_base * (1.0 + ppm * 1e-6)
            rx = half_rate / f
            du = c + rx * (1.0 - (<double>code) / steps)
            if not _wave(bits, p, os, span, du, &v):
                bad = True
                break
            if nn:
                v += noise[noise_pos % nn]
                noise_pos += 1
            d = 1 if v > 0.0 else 0

            if record:
                r_data[it] = du
                r_bit[it] = <signed char>d
                r_code[it] = code

            if e_pend >= 0:
                vote = 0
                grp = 0
                if dm1 != d:
                    vote = 1 if e_pend == d else -1
                    grp = 1 if dm2 == dm1 else 2
                    if vote > 0:
                        votes_up += 1
                    else:
                        votes_dn += 1
                    if grp == 1:
                        g1_n += 1
                        if vote > 0:
                            g1_up += 1
                    else:
                        g2_n += 1
                        if vote > 0:
                            g2_up += 1
                tick = 0
                if srfd_on:
                    if vote == 0:
                        if age_pol:
                            if 0 <= g1a <= win:
                                g1a += 1
                            if 0 <= g2a <= win:
                                g2a += 1
                        if clear_pol and not (0 <= g1a <= win and 0 <= g2a <= win):
                            cur = -1
                    else:
                        if grp == 1:
                            g1v = vote
                            g1a = 0
                            if 0 <= g2a <= win:
                                g2a += 1
                        else:
                            g2v = vote
                            g2a = 0
                            if 0 <= g1a <= win:
                                g1a += 1
                        if 0 <= g1a <= win and 0 <= g2a <= win:
                            a = 1 if g1v > 0 else 0
                            b = 1 if g2v > 0 else 0
                            sec = 2 * a + (a ^ b)
                            if cur >= 0:
                                s = (sec - cur) & 3
                                tick = 1 if s == 1 else (-1 if s == 3 else 0)
                            cur = sec
                        elif clear_pol:
                            cur = -1
                    acc += tick
                    ticks += 1
                    call_ticks += 1
                    if tick > 0:
                        tick_up += 1
                    elif tick < 0:
                        tick_dn += 1
                if dlf_on and vote != 0:
                    chunk_sum += vote
                    chunk_n += 1
                    if chunk_n >= chunk:
                        s = 1 if chunk_sum > 0 else (-1 if chunk_sum < 0 else 0)
                        chunk_sum = 0
                        chunk_n = 0
                        if s != 0:
                            code += kp * s
                            f_reg += ki * s
                            while code >= steps:
                                code -= steps
                                c -= rx
                                wraps += 1
                            while code < 0:
                                code += steps
                                c += rx
                                wraps -= 1
                if record:
                    r_dec[it] = 1
                    r_vote[it] = <signed char>vote
                    r_group[it] = <signed char>grp
                    r_tick[it] = <signed char>tick
                e_pend = -1

            if ber_on:
                n = <long>floor(du - center_ui + 0.5)
                if 0 <= n < nbits:
                    if d != bits[n]:
                        ber_errors += 1
                    if n_prev >= 0 and n != n_prev + 1:
                        ber_errors += labs(n - n_prev - 1)
                    ber_bits += 1
                n_prev = n

            if slot % period == 0:
                off = 0.5
                if coarse and (slot // period) % 2 == 1:
                    off += mism
                eu = du + rx * off
                if not _wave(bits, p, os, span, eu, &ev):
                    bad = True
                    break
                if nn:
                    ev += noise[noise_pos % nn]
                    noise_pos += 1
                e_pend = 1 if ev > 0.0 else 0
                if record:
                    r_edge[it] = eu

            dm2 = dm1
            dm1 = d
            slot += 1
            if dlf_on:
                pf += f_reg
                monitor += f_reg
                whole = <long>floor(pf)
                if whole != 0:
                    pf -= whole
                    code += whole
                    while code >= steps:
                        code -= steps
                        c -= rx
                        wraps += 1
                    while code < 0:
                        code += steps
                        c += rx
                        wraps -= 1
            c += rx
            ui_count += 1
            it += 1

    st.c, st.slot, st.code, st.wraps = c, slot, code, wraps
    st.pf, st.f_reg, st.chunk_sum, st.chunk_n = pf, f_reg, chunk_sum, chunk_n
    st.dm1, st.dm2, st.e_pend = dm1, dm2, e_pend
    st.g1v, st.g1a, st.g2v, st.g2a, st.cur = g1v, g1a, g2v, g2a, cur
    st.n_prev, st.noise_pos = n_prev, noise_pos
    st.acc, st.ticks, st.tick_up, st.tick_dn = acc, ticks, tick_up, tick_dn
    st.votes_up, st.votes_dn = votes_up, votes_dn
    st.g1_up, st.g1_n, st.g2_up, st.g2_n = g1_up, g1_n, g2_up, g2_n
    st.monitor, st.ber_bits, st.ber_errors, st.ui_count = monitor, ber_bits, ber_errors, ui_count
    if bad:
        raise IndexError("sample time outside the bit pattern; generate more bits")
    if record:
        return {"data_u": r_data_a[:it], "edge_u": r_edge_a[:it], "bit": r_bit_a[:it],
                "decided": r_dec_a[:it], "vote": r_vote_a[:it], "group": r_group_a[:it],
                "tick": r_tick_a[:it], "code": r_code_a[:it]}
    return None
