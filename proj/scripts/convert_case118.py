#!/usr/bin/env python3
"""Write data/case118.m from the PYPOWER copy of the IEEE 118-bus case.

Changes against the source data:
  * units with zero scheduled output (synchronous condensers) get
    Pmax = Pmin = 0, leaving 19 units able to move active power;
  * rateA, 9900 (unlimited) in the source, is replaced by
    max(factor * |f|, floor) rounded up to 1 MW, where f is the base-case DC
    flow with the slack bus balancing the system.

Usage: convert_case118.py [--factor F] [--floor MW] [--out PATH]
Requires: pip install pypower numpy
"""

import argparse
import math

import numpy as np
from pypower.case118 import case118

NOTICE = """% IEEE 118-bus test case, converted from PYPOWER's case118.
%
% Copyright (c) 1996-2015 PSERC. All rights reserved.
% Redistribution and use in source and binary forms, with or without
% modification, are permitted under the BSD-style license distributed with
% MATPOWER and PYPOWER. The data originates from the University of
% Washington Power Systems Test Case Archive.
%
% Modified by scripts/convert_case118.py: condenser units have Pmax = Pmin = 0
% and rateA is derived from base-case DC flows (factor {factor}, floor {floor} MW).
"""


def dc_flows(bus, branch, gen, base):
    n = len(bus)
    idx = {int(b): i for i, b in enumerate(bus[:, 0])}
    slack = [i for i in range(n) if bus[i, 1] == 3][0]
    p = np.zeros(n)
    for g in gen:
        if g[7] > 0:
            p[idx[int(g[0])]] += g[1]
    p = (p - bus[:, 2]) / base
    p[slack] = -(p.sum() - p[slack])
    bmat = np.zeros((n, n))
    k = np.zeros((len(branch), n))
    for l, br in enumerate(branch):
        if br[10] == 0:
            continue
        f, t, y = idx[int(br[0])], idx[int(br[1])], 1.0 / br[3]
        bmat[f, f] += y
        bmat[t, t] += y
        bmat[f, t] -= y
        bmat[t, f] -= y
        k[l, f], k[l, t] = y, -y
    keep = [i for i in range(n) if i != slack]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(bmat[np.ix_(keep, keep)], p[keep])
    return k @ theta * base


def row(values):
    return "\t" + "\t".join(f"{v:.10g}" for v in values) + ";"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--factor", type=float, default=1.5)
    ap.add_argument("--floor", type=float, default=100.0)
    ap.add_argument("--out", default="data/case118.m")
    args = ap.parse_args()

    c = case118()
    base = c["baseMVA"]
    bus, branch, gen, gencost = c["bus"].copy(), c["branch"].copy(), c["gen"].copy(), c["gencost"].copy()
    for g in gen:
        if g[1] == 0:
            g[8] = 0.0
            g[9] = 0.0
    flows = dc_flows(bus, branch, gen, base)
    for l in range(len(branch)):
        branch[l, 5] = math.ceil(max(args.factor * abs(flows[l]), args.floor))

    out = [NOTICE.format(factor=args.factor, floor=args.floor), "function mpc = case118", "mpc.version = '2';",
           f"mpc.baseMVA = {base:g};", "",
           "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin", "mpc.bus = ["]
    out += [row(b[:13]) for b in bus]
    out += ["];", "", "%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin", "mpc.gen = ["]
    out += [row(g[:10]) for g in gen]
    out += ["];", "", "%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax", "mpc.branch = ["]
    out += [row(br[:13]) for br in branch]
    out += ["];", "", "%% model startup shutdown n c2 c1 c0", "mpc.gencost = ["]
    out += [row(gc[:7]) for gc in gencost]
    out += ["];", ""]
    with open(args.out, "w") as fh:
        fh.write("\n".join(out))


if __name__ == "__main__":
    main()
