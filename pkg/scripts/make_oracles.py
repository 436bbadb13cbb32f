#!/usr/bin/env python3
"""Compute the frozen numerical reference values used by the test suite.

Every number printed here comes from a closed form or from high-resolution
quadrature, computed without importing the library under test.  The chosen
values are copied (by hand, deliberately) into tests/oracle_values.py.
"""
import math

import mpmath as mp
import numpy as np
from scipy import integrate, special

mp.mp.dps = 40


def kl_gauss(m, v, mq, vq):
    """KL(N(m,v) || N(mq,vq)) in nats."""
    return 0.5 * (v / vq + (m - mq) ** 2 / vq - 1.0 + math.log(vq / v))


def fisher_gauss(m, v, mq, vq):
    """E_p |d/dx log(p/q)|^2 for p = N(m,v), q = N(mq,vq).

    d/dx log(p/q) = -(x-m)/v + (x-mq)/vq = a x + b with
    a = 1/vq - 1/v, b = m/v - mq/vq;  E[(aX+b)^2] = a^2 v + (a m + b)^2.
    """
    a = 1.0 / vq - 1.0 / v
    b = m / v - mq / vq
    return a * a * v + (a * m + b) ** 2


def ou_moments(t, m0=1.0, v0=1.0):
    return m0 * math.exp(-t), 0.5 + (v0 - 0.5) * math.exp(-2.0 * t)


print("== Gaussian / OU closed forms (q = N(0, 1/2)) ==")
for t in (0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0):
    m, v = ou_moments(t)
    print(f"t={t:4}: m={m:.17g} v={v:.17g} H={kl_gauss(m, v, 0, .5):.17g} "
          f"I={fisher_gauss(m, v, 0, .5):.17g}")

m5, v5 = ou_moments(0.5)
print("score at x=0, t=0.5 (m/v):", repr(m5 / v5))
print("H(0)*exp(-1):", repr(kl_gauss(1, 1, 0, .5) * math.exp(-1.0)))
print("fisher N(1,1):", fisher_gauss(1, 1, 0, .5), " N(0,1):", fisher_gauss(0, 1, 0, .5))
print("shifted-gibbs KL m=0.5:", kl_gauss(0.5, 0.5, 0, 0.5))

print()
print("== double-well normalizing constant on [-3, 3], a = 1 ==")
f = lambda x: mp.e ** (-2 * (x * x - 1) ** 2)
z_mp = mp.quad(f, [-3, -1, 0, 1, 3])
print("mpmath          :", mp.nstr(z_mp, 25))
zq, err = integrate.quad(lambda x: math.exp(-2 * (x * x - 1) ** 2), -3, 3,
                         limit=200, epsabs=1e-14, epsrel=1e-14)
print("scipy.quad      :", repr(zq), "err", err)
for n in (1024, 4096, 65536):
    x = np.linspace(-3.0, 3.0, n + 1)
    z_tr = np.trapezoid(np.exp(-2.0 * (x * x - 1.0) ** 2), x)
    print(f"trapezoid n={n:6d}: {z_tr!r}   rel dev {abs(z_tr - float(z_mp)) / float(z_mp):.3e}")

print()
print("== total variation N(0,1/2) vs N(0.5,1/2) ==")
tv_exact = mp.erf(mp.mpf(1) / 4)
print("erf(1/4)        :", mp.nstr(tv_exact, 25))


def tv_trapz(n, lo=-8.0, hi=8.0):
    x = np.linspace(lo, hi, n)
    pa = np.exp(-(x ** 2)) / math.sqrt(math.pi)
    pb = np.exp(-((x - 0.5) ** 2)) / math.sqrt(math.pi)
    return 0.5 * np.trapezoid(np.abs(pa - pb), x)


for n in (1024, 4096, 65536):
    v = tv_trapz(n)
    print(f"trapezoid n={n:6d}: {v!r}   dev {abs(v - float(tv_exact)):.3e}")

print()
print("== quadratic potential normalization on [-8, 8] ==")
x = np.linspace(-8.0, 8.0, 4096)
z_quad = np.trapezoid(np.exp(-(x ** 2)), x)
print("trapezoid 4096  :", repr(z_quad), " rel dev vs sqrt(pi):",
      abs(z_quad - math.sqrt(math.pi)) / math.sqrt(math.pi))
print("sqrt(pi)        :", repr(math.sqrt(math.pi)))
print("erf(8) deficit  :", mp.nstr(1 - mp.erf(8), 10))

print()
print("== expected decomposition values at the optimum (OU, T=0.5) ==")
H_T = kl_gauss(*ou_moments(0.5), 0, 0.5)
H_2T = kl_gauss(*ou_moments(1.0), 0, 0.5)
m2, v2 = ou_moments(1.0)
kl_p2T_p0 = kl_gauss(m2, v2, 1.0, 1.0)
print("H(T)   =", H_T)
print("H(2T)  =", H_2T)
print("D*     = H(T) - H(2T) =", H_T - H_2T)
print("energy* = D* + KL(p(2T)||p0) =", H_T - H_2T + kl_p2T_p0)
print("terminal* = H(2T) - KL(p(2T)||p0) =", H_2T - kl_p2T_p0)

print()
print("== occupation-time asymptotics, OU, A = [0, inf) ==")
# stationary autocovariance of 1_{X>0} under OU with correlation e^{-s}:
# Cov(s) = arcsin(e^{-s}) / (2 pi); sigma_inf^2 = 2 * integral of Cov.
sig2 = 2.0 * integrate.quad(lambda s: math.asin(math.exp(-s)) / (2 * math.pi),
                            0, 50, limit=200)[0]
print("sigma_inf^2 =", sig2, " sd at horizon 1e4:", math.sqrt(sig2 / 1e4))
