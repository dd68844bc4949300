#!/usr/bin/env python3
"""Solve the New England 39-bus power flow and write the case file.

Network data follows the widely used 39-bus benchmark (100 MVA base,
60 Hz). Generator dynamic data (H, x'd) are the classical-model values
on the system base. Generator i is the machine at bus 29 + i.

The Newton-Raphson solution is written together with the internal EMF
magnitudes and mechanical powers implied by it, so that the shipped
operating point is an exact equilibrium of the classical model.

Usage: python3 tools/solve_case39.py > crates/core/data/case39.txt
"""
import numpy as np

BASE_MVA = 100.0
FREQ = 60.0

# id, Pd (MW), Qd (MVAr), type (1 PQ, 2 PV, 3 slack)
BUSES = [
    (1, 97.6, 44.2, 1), (2, 0, 0, 1), (3, 322, 2.4, 1), (4, 500, 184, 1),
    (5, 0, 0, 1), (6, 0, 0, 1), (7, 233.8, 84, 1), (8, 522, 176.6, 1),
    (9, 6.5, -66.6, 1), (10, 0, 0, 1), (11, 0, 0, 1), (12, 8.53, 88, 1),
    (13, 0, 0, 1), (14, 0, 0, 1), (15, 320, 153, 1), (16, 329, 32.3, 1),
    (17, 0, 0, 1), (18, 158, 30, 1), (19, 0, 0, 1), (20, 680, 103, 1),
    (21, 274, 115, 1), (22, 0, 0, 1), (23, 247.5, 84.6, 1), (24, 308.6, -92.2, 1),
    (25, 224, 47.2, 1), (26, 139, 17, 1), (27, 281, 75.5, 1), (28, 206, 27.6, 1),
    (29, 283.5, 26.9, 1), (30, 0, 0, 2), (31, 9.2, 4.6, 3), (32, 0, 0, 2),
    (33, 0, 0, 2), (34, 0, 0, 2), (35, 0, 0, 2), (36, 0, 0, 2),
    (37, 0, 0, 2), (38, 0, 0, 2), (39, 1104, 250, 2),
]

# from, to, r, x, b, tap
BRANCHES = [
    (1, 2, 0.0035, 0.0411, 0.6987, 1.0), (1, 39, 0.001, 0.025, 0.75, 1.0),
    (2, 3, 0.0013, 0.0151, 0.2572, 1.0), (2, 25, 0.007, 0.0086, 0.146, 1.0),
    (2, 30, 0.0, 0.0181, 0.0, 1.025), (3, 4, 0.0013, 0.0213, 0.2214, 1.0),
    (3, 18, 0.0011, 0.0133, 0.2138, 1.0), (4, 5, 0.0008, 0.0128, 0.1342, 1.0),
    (4, 14, 0.0008, 0.0129, 0.1382, 1.0), (5, 6, 0.0002, 0.0026, 0.0434, 1.0),
    (5, 8, 0.0008, 0.0112, 0.1476, 1.0), (6, 7, 0.0006, 0.0092, 0.113, 1.0),
    (6, 11, 0.0007, 0.0082, 0.1389, 1.0), (6, 31, 0.0, 0.025, 0.0, 1.07),
    (7, 8, 0.0004, 0.0046, 0.078, 1.0), (8, 9, 0.0023, 0.0363, 0.3804, 1.0),
    (9, 39, 0.001, 0.025, 1.2, 1.0), (10, 11, 0.0004, 0.0043, 0.0729, 1.0),
    (10, 13, 0.0004, 0.0043, 0.0729, 1.0), (10, 32, 0.0, 0.02, 0.0, 1.07),
    (12, 11, 0.0016, 0.0435, 0.0, 1.006), (12, 13, 0.0016, 0.0435, 0.0, 1.006),
    (13, 14, 0.0009, 0.0101, 0.1723, 1.0), (14, 15, 0.0018, 0.0217, 0.366, 1.0),
    (15, 16, 0.0009, 0.0094, 0.171, 1.0), (16, 17, 0.0007, 0.0089, 0.1342, 1.0),
    (16, 19, 0.0016, 0.0195, 0.304, 1.0), (16, 21, 0.0008, 0.0135, 0.2548, 1.0),
    (16, 24, 0.0003, 0.0059, 0.068, 1.0), (17, 18, 0.0007, 0.0082, 0.1319, 1.0),
    (17, 27, 0.0013, 0.0173, 0.3216, 1.0), (19, 20, 0.0007, 0.0138, 0.0, 1.06),
    (19, 33, 0.0007, 0.0142, 0.0, 1.07), (20, 34, 0.0009, 0.018, 0.0, 1.009),
    (21, 22, 0.0008, 0.014, 0.2565, 1.0), (22, 23, 0.0006, 0.0096, 0.1846, 1.0),
    (22, 35, 0.0, 0.0143, 0.0, 1.025), (23, 24, 0.0022, 0.035, 0.361, 1.0),
    (23, 36, 0.0005, 0.0272, 0.0, 1.0), (25, 26, 0.0032, 0.0323, 0.513, 1.0),
    (25, 37, 0.0006, 0.0232, 0.0, 1.025), (26, 27, 0.0014, 0.0147, 0.2396, 1.0),
    (26, 28, 0.0043, 0.0474, 0.7802, 1.0), (26, 29, 0.0057, 0.0625, 1.029, 1.0),
    (28, 29, 0.0014, 0.0151, 0.249, 1.0), (29, 38, 0.0008, 0.0156, 0.0, 1.025),
]

# bus, Pg (MW), Vg setpoint, H (s), x'd (pu)
GENS = [
    (30, 250.0, 1.0499, 42.0, 0.031),
    (31, 677.871, 0.982, 30.3, 0.0697),
    (32, 650.0, 0.9841, 35.8, 0.0531),
    (33, 632.0, 0.9972, 28.6, 0.0436),
    (34, 508.0, 1.0123, 26.0, 0.132),
    (35, 650.0, 1.0494, 34.8, 0.05),
    (36, 560.0, 1.0636, 26.4, 0.049),
    (37, 540.0, 1.0275, 24.3, 0.057),
    (38, 830.0, 1.0265, 34.5, 0.057),
    (39, 1000.0, 1.03, 500.0, 0.006),
]

# Damping per unit of inertia, in pu power per (rad/s) per second of H.
DAMPING_PER_H = 0.004


def ybus():
    n = len(BUSES)
    y = np.zeros((n, n), dtype=complex)
    for f, t, r, x, b, tap in BRANCHES:
        i, j = f - 1, t - 1
        ys = 1.0 / complex(r, x)
        y[i, i] += (ys + 0.5j * b) / tap**2
        y[j, j] += ys + 0.5j * b
        y[i, j] -= ys / tap
        y[j, i] -= ys / tap
    return y


def solve():
    n = len(BUSES)
    y = ybus()
    pd = np.array([b[1] for b in BUSES]) / BASE_MVA
    qd = np.array([b[2] for b in BUSES]) / BASE_MVA
    kind = np.array([b[3] for b in BUSES])
    pg = np.zeros(n)
    vm = np.ones(n)
    for bus, p, vg, _, _ in GENS:
        pg[bus - 1] = p / BASE_MVA
        vm[bus - 1] = vg
    va = np.zeros(n)
    pv = np.where(kind == 2)[0]
    pq = np.where(kind == 1)[0]
    pvpq = np.concatenate([pv, pq])
    psp = pg - pd
    qsp = -qd
    for _ in range(30):
        v = vm * np.exp(1j * va)
        s = v * np.conj(y @ v)
        mis = np.concatenate([(s.real - psp)[pvpq], (s.imag - qsp)[pq]])
        if np.max(np.abs(mis)) < 1e-14:
            break
        ibus = y @ v
        dsdva = 1j * np.diag(v) @ np.conj(np.diag(ibus) - y @ np.diag(v))
        dsdvm = np.diag(v) @ np.conj(y @ np.diag(v / vm)) + np.diag(np.conj(ibus) * v / vm)
        jac = np.block([
            [dsdva.real[np.ix_(pvpq, pvpq)], dsdvm.real[np.ix_(pvpq, pq)]],
            [dsdva.imag[np.ix_(pq, pvpq)], dsdvm.imag[np.ix_(pq, pq)]],
        ])
        dx = np.linalg.solve(jac, -mis)
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq):]
    v = vm * np.exp(1j * va)
    return y, v, pd, qd


def main():
    y, v, pd, qd = solve()
    s_inj = v * np.conj(y @ v)
    mis = s_inj + pd + 1j * qd
    print("# New England 39-bus system, classical machine model.")
    print("# Solved power flow (Newton-Raphson, mismatch < 1e-12 pu).")
    print("# Generated by tools/solve_case39.py; see docs/case-format.md.")
    print("version 1")
    print()
    print("[system]")
    print(f"base_mva {BASE_MVA:g}")
    print(f"frequency {FREQ:g}")
    print()
    print("[buses]")
    print("# id  p_load  q_load  v_mag  v_ang_rad")
    for k, b in enumerate(BUSES):
        print(f"{b[0]} {float(pd[k])!r} {float(qd[k])!r} {float(abs(v[k]))!r} {float(np.angle(v[k]))!r}")
    print()
    print("[branches]")
    print("# from  to  r  x  b_shunt  tap")
    for f, t, r, x, b, tap in BRANCHES:
        print(f"{f} {t} {r!r} {x!r} {b!r} {tap!r}")
    print()
    print("[generators]")
    print("# bus  h  d  xd_prime  pm  e")
    for bus, _, _, h, xd in GENS:
        k = bus - 1
        sg = mis[k]
        ig = np.conj(sg / v[k])
        e = v[k] + 1j * xd * ig
        print(f"{bus} {h!r} {round(DAMPING_PER_H * h, 12)!r} {xd!r} {float(sg.real)!r} {float(abs(e))!r}")
    # sanity: load buses balanced
    gen_buses = {g[0] - 1 for g in GENS}
    worst = max(abs(mis[k]) for k in range(len(BUSES)) if k not in gen_buses)
    assert worst < 1e-10, worst


if __name__ == "__main__":
    main()
