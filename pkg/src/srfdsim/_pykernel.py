"""Pure-Python receiver loop; the reference twin of ``_ckernel.pyx``.

Keep the arithmetic here and in the .pyx in the same order: the test suite
asserts both backends return identical floats.
"""
import math

import numpy as np

# sector index from (G1 up?, G2 up?): (DN,DN)=0 (DN,UP)=1 (UP,UP)=2 (UP,DN)=3
_ROT = (0, 1, 0, -1)


def _cached(prm):
    cache = getattr(prm, "_pycache", None)
    if cache is None or cache[0] is not prm.bits or cache[1] is not prm.pulse:
        cache = (prm.bits, prm.pulse, prm.bits.tobytes(), prm.pulse.tolist(),
                 prm.drift_t.tolist(), prm.drift_ppm.tolist(), prm.noise.tolist())
        prm._pycache = cache
    return cache[2:]


def _wave(bits, p, os, span, u):
    n0 = math.floor(u)
    if n0 - (span - 1) < 0 or n0 >= len(bits):
        return None
    xf = (u - n0) * os
    i0 = int(xf)
    w = xf - i0
    acc = 0.0
    for j in range(span):
        k = j * os + i0
        acc += (2.0 * bits[n0 - j] - 1.0) * (p[k] + w * (p[k + 1] - p[k]))
    return acc


def run(st, prm, n_ui, max_ticks, stop_u, record):
    bits, p, dt, dp, noise = _cached(prm)
    os, span, steps = prm.os, prm.span, prm.steps
    half_rate = prm.data_rate * 0.5
    tx_s = 1.0 / prm.data_rate
    f_base = prm.f_vco
    nd, nn = len(dt), len(noise)
    period, mism, coarse = prm.edge_period, prm.phi5_mismatch, prm.coarse
    srfd_on, age_pol, clear_pol, win = prm.srfd_on, prm.missing_age, prm.clear_unresolved, prm.window
    dlf_on, kp, ki, chunk = prm.dlf_on, prm.kp, prm.ki, prm.chunk
    ber_on, center_ui = prm.ber_on, prm.center_ui

    c, slot, code, wraps = st.c, st.slot, st.code, st.wraps
    pf, f_reg, chunk_sum, chunk_n = st.pf, st.f_reg, st.chunk_sum, st.chunk_n
    dm1, dm2, e_pend = st.dm1, st.dm2, st.e_pend
    g1v, g1a, g2v, g2a, cur = st.g1v, st.g1a, st.g2v, st.g2a, st.cur
    n_prev, noise_pos = st.n_prev, st.noise_pos
    acc, ticks, tick_up, tick_dn = st.acc, st.ticks, st.tick_up, st.tick_dn
    votes_up, votes_dn = st.votes_up, st.votes_dn
    g1_up, g1_n, g2_up, g2_n = st.g1_up, st.g1_n, st.g2_up, st.g2_n
    monitor, ber_bits, ber_errors, ui_count = st.monitor, st.ber_bits, st.ber_errors, st.ui_count

    if record:
        r_data = np.zeros(n_ui)
        r_edge = np.full(n_ui, np.nan)
        r_bit = np.zeros(n_ui, dtype=np.int8)
        r_dec = np.zeros(n_ui, dtype=np.int8)
        r_vote = np.zeros(n_ui, dtype=np.int8)
        r_group = np.zeros(n_ui, dtype=np.int8)
        r_tick = np.zeros(n_ui, dtype=np.int8)
        r_code = np.zeros(n_ui, dtype=np.int64)

    call_ticks = 0
    dj = 0
    it = 0
    bad = False
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
        du = c + rx * (1.0 - code / steps)
        v = _wave(bits, p, os, span, du)
        if v is None:
            bad = True
            break
        if nn:
            v += noise[noise_pos % nn]
            noise_pos += 1
        d = 1 if v > 0.0 else 0

        if record:
            r_data[it] = du
            r_bit[it] = d
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
                            tick = _ROT[(sec - cur) & 3]
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
                r_vote[it] = vote
                r_group[it] = grp
                r_tick[it] = tick
            e_pend = -1

        if ber_on:
            n = math.floor(du - center_ui + 0.5)
            if 0 <= n < len(bits):
                if d != bits[n]:
                    ber_errors += 1
                if n_prev >= 0 and n != n_prev + 1:
                    ber_errors += abs(n - n_prev - 1)
                ber_bits += 1
            n_prev = n

        if slot % period == 0:
            off = 0.5
            if coarse and (slot // period) % 2 == 1:
                off += mism
            eu = du + rx * off
            ev = _wave(bits, p, os, span, eu)
            if ev is None:
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
            whole = math.floor(pf)
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
        return {"data_u": r_data[:it], "edge_u": r_edge[:it], "bit": r_bit[:it],
                "decided": r_dec[:it], "vote": r_vote[:it], "group": r_group[:it],
                "tick": r_tick[:it], "code": r_code[:it]}
    return None
