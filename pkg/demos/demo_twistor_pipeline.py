"""
From a deformed real slice back to the spray
============================================

A real slice is a curve gamma in the w-sphere plus a real function g. The
disks through it come from a conformal map onto a slit domain; from the
map we read off a(phi), the connection coefficients and F.
"""
import numpy as np

from zollkit import twistor as T

###############################################################################
# The round slice reproduces the closed-form disks.

print(f"round map error: {T.round_diskmap_error(0.8, [0.5j, 1 + 1j, -2 + 0.3j]):.1e}")

###############################################################################
# An imaginary bump in gamma moves a(phi) off the imaginary axis. The
# connection coefficients come out twice: from the quotient formulas in a
# and a', and from a cubic fit of the fiber derivative.

sl = T.RealSliceData.bumped(0.05j)
phis = np.array([0.6, 0.8, 1.0])
rec = T.reconstruct(sl, phis, with_F=False)
for i, ph in enumerate(phis):
    fit = T.p_from_diskmap(sl, ph)
    print(f"phi {ph:.1f}: a = {rec.a[i]:.6f}, Gamma1 {rec.gamma1[i]:+.6f} (fit {fit.gamma1:+.6f}), "
          f"Gamma2 {rec.gamma2[i]:.6f} (fit {fit.gamma2:.6f}), h {rec.h[i]:+.4f}")

###############################################################################
# A bump in g alone leaves the disks alone but produces a nonzero F,
# linear in the amplitude.

for amp in (0.15, 0.3):
    print(f"g amplitude {amp}: F(1.0) = {T.F_from_G(T.RealSliceData.round(g_amp=amp), 1.0):+.8f}")

###############################################################################
# Slices that come from metrics are Lagrangian for the signed form; the
# imaginary bump is not.

for name, s in (("round", T.RealSliceData.round()), ("g bump", T.RealSliceData.round(g_amp=0.3)),
                ("imaginary gamma bump", sl)):
    print(f"{name:22s} Lagrangian residual {T.lagrangian_residual(s):.1e}")
