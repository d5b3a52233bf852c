#!/usr/bin/env python3
"""Reconstructed typical transfer and output curves of the W/L = 380/35 um
p-type device (the published curves are plots only).

The functional form here is deliberately not the library's compact model:
tanh drain saturation, exponential subthreshold with a leakage floor, series
contact resistance solved by bisection, and a small deterministic
multiplicative ripple standing in for measurement noise.

    python3 tools/make_fig2_fixture.py > data/fig2_typical_p.csv
"""

import math
import random
import sys

W_UM, L_UM, LOV_UM = 380.0, 35.0, 5.0
COX_NF_CM2 = 35.0
MU = 0.255e-4          # m^2/(V s)
VTH = -0.06            # V
SS = 0.25              # V/decade
LAMBDA = 0.015         # 1/V
RC_W = 320.0           # ohm m; equals the sheet resistance of 15 um of channel at 5 V overdrive
I_LEAK = 4e-12         # A
NOISE = 0.01


def channel_current(vgs, vds):
    beta = (W_UM / L_UM) * MU * COX_NF_CM2 * 1e-5
    x = VTH - vgs                      # positive when the p-channel is on
    width = 2.0 * SS / math.log(10.0)  # vov^2 then falls one decade per SS
    vov = width * math.log1p(math.exp(x / width)) if x / width < 40 else x
    mag = abs(vds)
    ichan = 0.5 * beta * vov * vov * math.tanh(2.0 * mag / max(vov, 1e-12)) * (1.0 + LAMBDA * mag)
    return ichan


def drain_current(vgs, vds):
    half_rc = 0.5 * RC_W / (W_UM * 1e-6)
    lo, hi = 0.0, channel_current(vgs, vds)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        # p-channel: the source drop raises vgs and the total drop shrinks |vds|
        inner = channel_current(vgs + mid * half_rc, vds + 2.0 * mid * half_rc)
        if inner > mid:
            lo = mid
        else:
            hi = mid
    return -(0.5 * (lo + hi) + I_LEAK * abs(vds) / 5.0)


def main():
    rng = random.Random(20240605)
    out = sys.stdout
    out.write("device_id,kind,W_um,L_um,LOV_um,cox_nF_cm2,fixed_bias_V,v_V,id_A\n")
    geom = f"{W_UM:g},{L_UM:g},{LOV_UM:g},{COX_NF_CM2:g}"
    for i in range(121):
        vgs = 1.0 - 0.05 * i
        i_d = drain_current(vgs, -5.0) * (1.0 + NOISE * rng.gauss(0.0, 1.0))
        out.write(f"fig2,transfer,{geom},-5,{vgs:.2f},{i_d:.6e}\n")
    for vgs in (-1.0, -2.0, -3.0, -4.0, -5.0):
        for i in range(51):
            vds = -0.1 * i
            i_d = drain_current(vgs, vds) * (1.0 + NOISE * rng.gauss(0.0, 1.0))
            out.write(f"fig2,output,{geom},{vgs:g},{vds:.2f},{i_d:.6e}\n")


if __name__ == "__main__":
    main()
