"""Pilot run for iterate.py: traces, probes, occupation seeds."""
import time

import numpy as np

from entroflow.grid import Grid, gaussian_slice
from entroflow.iterate import ergodic_occupation, run_iteration
from entroflow.potential import builtin_potential, gibbs_measure

grid = Grid(-8.0, 8.0, 1024)
pot = builtin_potential("quadratic")
gibbs = gibbs_measure(pot, grid)


def closed_form_h(t):
    m = np.exp(-t)
    v = 0.5 + 0.5 * np.exp(-2.0 * t)
    r = v / 0.5
    return 0.5 * (r - 1.0 - np.log(r) + m * m / 0.5)


print("== OU iteration, K=6, T=0.5, probes on stages 0 and 1 ==")
p0 = gaussian_slice(grid, 1.0, 1.0)
t0 = time.perf_counter()
res = run_iteration(pot, gibbs, p0, 0.5, 6, particles=100_000, seed=11)
print(f"   wall {time.perf_counter() - t0:.1f} s")
for row in res:
    ref = closed_form_h(0.5 * row.stage)
    print(f"   k={row.stage} {row.direction:8s} H={row.entropy_at_stage:.6f} "
          f"ref={ref:.6f} relerr={abs(row.entropy_at_stage - ref) / ref:.2e} "
          f"tv={row.tv_at_stage:.4f} cost={row.cost_value:.5f} se={row.cost_se:.5f}")
print(f"   final H={res.final_entropy:.6f} ref={closed_form_h(3.0):.6f} "
      f"tv={res.final_tv:.2e} early={res.stopped_early}")
# probe targets
for k, tgt in ((0, closed_form_h(0.5)), (1, closed_form_h(1.0))):
    row = res[k]
    z = abs(row.cost_value - tgt) / row.cost_se
    print(f"   probe k={k}: cost={row.cost_value:.5f} target={tgt:.5f} z={z:.2f}")

print("== p0 = q fixed point, K=3 ==")
res_q = run_iteration(pot, gibbs, gibbs.values.copy(), 0.5, 3,
                      particles=0, verify_stages=())
for row in res_q:
    print(f"   k={row.stage} H={row.entropy_at_stage:.3e} tv={row.tv_at_stage:.3e}")
print(f"   final H={res_q.final_entropy:.3e} tv={res_q.final_tv:.3e}")

print("== stop_below opt-in ==")
res_s = run_iteration(pot, gibbs, gibbs.values.copy(), 0.5, 3, particles=0,
                      verify_stages=(), stop_below=1e-6)
print(f"   rows={len(res_s)} early={res_s.stopped_early}")

print("== double well a=1, K=5, T=1 ==")
dw = builtin_potential("double_well", [1.0])
gibbs_dw = gibbs_measure(dw, grid)
p0_dw = gaussian_slice(grid, 1.5, 0.25)
t0 = time.perf_counter()
res_dw = run_iteration(dw, gibbs_dw, p0_dw, 1.0, 5, particles=100_000, seed=29)
print(f"   wall {time.perf_counter() - t0:.1f} s")
hs = [r.entropy_at_stage for r in res_dw] + [res_dw.final_entropy]
tvs = [r.tv_at_stage for r in res_dw] + [res_dw.final_tv]
for row in res_dw:
    print(f"   k={row.stage} {row.direction:8s} H={row.entropy_at_stage:.6f} "
          f"tv={row.tv_at_stage:.4f} cost={row.cost_value:.5f} se={row.cost_se:.5f}")
print(f"   final H={res_dw.final_entropy:.6f} tv={res_dw.final_tv:.4f}")
print(f"   H strictly decreasing: {all(a > b for a, b in zip(hs, hs[1:]))}")
print(f"   tv decreasing: {all(a > b - 1e-12 for a, b in zip(tvs, tvs[1:]))}")
# probe matches H at stage end within 3 se?
for k in (0, 1):
    row = res_dw[k]
    tgt = hs[k + 1]
    z = abs(row.cost_value - tgt) / row.cost_se
    print(f"   probe k={k}: cost={row.cost_value:.5f} target={tgt:.5f} z={z:.2f}")

print("== ergodic occupation, OU A=[0, inf), horizon 1e4 ==")
for seed in (3, 7, 19):
    t0 = time.perf_counter()
    occ, qa = ergodic_occupation(pot, gibbs, (0.0, 8.0), 1.0e4, 8, seed)
    print(f"   seed={seed} occ={occ:.5f} qA={qa:.5f} "
          f"err={abs(occ - qa):.5f} wall={time.perf_counter() - t0:.1f} s")

print("== ergodic occupation, double well A = right well ==")
for seed in (3, 7, 19):
    occ, qa = ergodic_occupation(dw, gibbs_dw, (0.0, 8.0), 1.0e4, 8, seed)
    print(f"   seed={seed} occ={occ:.5f} qA={qa:.5f} err={abs(occ - qa):.5f}")
