#!/usr/bin/env python3
"""Monte Carlo pilot for the controlled-dynamics conventions.

Runs the reversed / second-stage dynamics with *exact* Gaussian fields (no
grids, no library code) to validate sign conventions, expected values and
statistical error bars before the real implementation exists.

Setup: quadratic potential (OU), p0 = N(1,1), q = N(0,1/2), T = 0.5.
"""
import math

import numpy as np

T = 0.5
DT = 1e-3
N = 100_000
STEPS = round(T / DT)

H0, HT, H2T = 1.1534264097200273, 0.3951883179980521, 0.1395389193334328


def m_of(t):
    return math.exp(-t)


def v_of(t):
    return 0.5 + 0.5 * math.exp(-2.0 * t)


def grad_L(t, x):
    return -(x - m_of(t)) / v_of(t) + 2.0 * x


def L_of(t, x):
    m, v = m_of(t), v_of(t)
    lp = -0.5 * np.log(2 * np.pi * v) - (x - m) ** 2 / (2 * v)
    lq = -0.5 * np.log(np.pi) - x ** 2
    return lp - lq


def reversed_run(policy, rng, delta=None):
    """Simulate dXbar = (grad_L(T-s) + gamma - x) ds + dW on [0, T].

    policy: 'zero' | 'opt' | 'pert'.  Returns dict of per-particle stats.
    """
    x = rng.normal(m_of(T), math.sqrt(v_of(T)), N)
    logw = np.zeros(N)
    energy = np.zeros(N)
    gap = np.zeros(N)
    snaps = {}
    for k in range(STEPS):
        t_go = T - k * DT
        dw = rng.normal(0.0, math.sqrt(DT), N)
        s = grad_L(t_go, x)
        if policy == "zero":
            gamma = 0.0
            drift = s - x
            gap += 0.5 * s * s * DT
        elif policy == "opt":
            gamma = -s
            drift = -x
        else:
            d = delta(t_go, x)
            gamma = -s + d
            drift = d - x
            gap += 0.5 * d * d * DT
        logw += gamma * dw - 0.5 * gamma ** 2 * DT
        energy += 0.5 * gamma ** 2 * DT
        x = x + drift * DT + dw
        if k + 1 in (STEPS // 2, STEPS):
            snaps[(k + 1) * DT] = x.copy()
    return dict(x=x, logw=logw, energy=energy, gap=gap, snaps=snaps)


def second_run(policy, rng):
    """Simulate dX = (grad_Lambda(T-t) + beta - x) dt + dW with
    Lambda(s, .) = L(T+s, .), started from p(2T)."""
    x = rng.normal(m_of(2 * T), math.sqrt(v_of(2 * T)), N)
    logw = np.zeros(N)
    energy = np.zeros(N)
    for k in range(STEPS):
        t_go = T - k * DT
        dw = rng.normal(0.0, math.sqrt(DT), N)
        s = grad_L(T + t_go, x)
        if policy == "zero":
            gamma, drift = 0.0, s - x
        else:
            gamma, drift = -s, -x
        logw += gamma * dw - 0.5 * gamma ** 2 * DT
        energy += 0.5 * gamma ** 2 * DT
        x = x + drift * DT + dw
    return dict(x=x, logw=logw, energy=energy)


def report(label, vals, target=None):
    mean = vals.mean()
    se = vals.std(ddof=1) / math.sqrt(len(vals))
    line = f"{label:34s} {mean: .5f} +- {se:.5f}"
    if target is not None:
        line += f"   target {target: .5f}  ({abs(mean - target) / max(se, 1e-12):.2f} se)"
    print(line)
    return mean, se


def tv_on_grid(samples, t, nodes=128):
    """TV between an empirical histogram and the exact marginal at time t."""
    edges = np.linspace(-8, 8, nodes + 1)
    hist, _ = np.histogram(samples, bins=edges)
    emp = hist / (len(samples) * np.diff(edges))
    m, v = m_of(t), v_of(t)
    # cell-averaged exact density
    from scipy.special import ndtr
    zc = (edges - m) / math.sqrt(v)
    cell = (ndtr(zc[1:]) - ndtr(zc[:-1])) / np.diff(edges)
    return 0.5 * np.sum(np.abs(emp - cell) * np.diff(edges))


def main():
    rng = np.random.default_rng(20260814)

    print("== stage 1, zero policy ==")
    out = reversed_run("zero", rng)
    term = L_of(DT, out["x"])
    report("total (terminal only)", term, H0)
    print("max |logw|:", np.abs(out["logw"]).max())
    print("TV at s=T/2 vs p(T/2):", tv_on_grid(out["snaps"][T / 2], T / 2))

    print()
    print("== stage 1, optimal policy ==")
    out = reversed_run("opt", rng)
    term = L_of(DT, out["x"])
    total = term + out["energy"]
    report("terminal", term, -0.12719268668107078)
    report("energy", out["energy"], 0.5223810046791229)
    report("total", total, HT)
    report("mean exp(logw)", np.exp(out["logw"]), 1.0)
    print("TV at s=T/2 vs p(T+T/2):", tv_on_grid(out["snaps"][T / 2], T + T / 2))
    print("TV at s=T   vs p(2T):  ", tv_on_grid(out["snaps"][T], 2 * T))

    # entropic decomposition plug-in
    logz = out["logw"] + 2.0 * out["energy"]
    w = np.exp(-logz)
    edges = np.linspace(-8, 8, 1025)
    hu, _ = np.histogram(out["x"], bins=edges)
    hw, _ = np.histogram(out["x"], bins=edges, weights=w)
    pu = hu / hu.sum()
    pw = hw / hw.sum()
    mask = pu > 0
    kl = float(np.sum(pu[mask] * np.log(pu[mask] / pw[mask])))
    d_term = logz.mean() - kl
    print(f"mean log Z = {logz.mean():.5f} (target {0.5223810046791229:.5f})")
    print(f"endpoint KL(unweighted||reweighted) = {kl:.5f} "
          f"(target {0.5223810046791229 - 0.25564939866461933:.5f})")
    print(f"D_term = {d_term:.5f} (target 0.25565)  H_term = {total.mean() - d_term:.5f} "
          f"(target {H2T:.5f})")

    print()
    print("== stage 1, perturbed delta = 0.5 ==")
    out = reversed_run("pert", rng, delta=lambda t, x: 0.5)
    total = L_of(DT, out["x"]) + out["energy"]
    tm, tse = report("total", total, HT + 0.0625)
    print("gap_predicted:", out["gap"].mean(), "se", out["gap"].std(ddof=1) / math.sqrt(N))
    print("gap_measured :", tm - HT, "+-", tse)
    report("mean exp(logw)", np.exp(out["logw"]), 1.0)

    print()
    print("== stage 1, perturbed delta = 0.3 sin(x) ==")
    out = reversed_run("pert", rng, delta=lambda t, x: 0.3 * np.sin(x))
    total = L_of(DT, out["x"]) + out["energy"]
    tm, tse = report("total", total)
    gp = out["gap"].mean()
    gse = out["gap"].std(ddof=1) / math.sqrt(N)
    print(f"gap_predicted {gp:.5f} +- {gse:.5f}   gap_measured {tm - HT:.5f} +- {tse:.5f}")

    print()
    print("== stage 2 ==")
    out = second_run("opt", rng)
    total = L_of(T + DT, out["x"]) + out["energy"]
    report("lambda-optimal total", total, H2T)
    report("mean exp(logw)", np.exp(out["logw"]), 1.0)
    out = second_run("zero", rng)
    report("zero total", L_of(T + DT, out["x"]), HT)

    print()
    print("== backwards-martingale probe (X0 ~ q, OU forward) ==")
    for t in (0.25, 0.5):
        x = rng.normal(0.0, math.sqrt(0.5), N)
        steps = round(t / DT)
        for _ in range(steps):
            x += -x * DT + rng.normal(0, math.sqrt(DT), N)
        ell = np.exp(L_of(t, x))
        report(f"E_Q[l({t}, X)]", ell, 1.0)

    print()
    print("== occupation fraction pilots ==")
    for seed in range(6):
        r = np.random.default_rng(seed)
        npart, dt = 20, 1e-2
        steps = round(1e4 / dt / npart)
        x = r.normal(0, math.sqrt(0.5), npart)
        hits = 0
        for _ in range(steps):
            hits += int((x >= 0).sum())
            x += -x * dt + r.normal(0, math.sqrt(dt), npart)
        print(f"OU seed {seed}: occupation {hits / (steps * npart):.4f}")
    for seed in range(6):
        r = np.random.default_rng(seed)
        npart, dt = 8, 1e-2
        steps = round(1e4 / dt / npart)
        # double well: sample q by rejection around modes +-1
        x = np.where(r.random(npart) < 0.5, -1.0, 1.0) + 0.25 * r.normal(size=npart)
        hits = 0
        for _ in range(steps):
            hits += int((x >= 0).sum())
            x += -4.0 * x * (x * x - 1.0) * dt + r.normal(0, math.sqrt(dt), npart)
        print(f"DW seed {seed}: occupation {hits / (steps * npart):.4f}")


if __name__ == "__main__":
    main()
