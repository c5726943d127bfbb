#!/usr/bin/env python3
"""Generate the synthetic 24 h profiles shipped with the demo scenarios.

15-minute cadence, smooth shapes: a mild diurnal ambient swing, per-facade
solar bells, office internal-gain and plug-load schedules, two aggregate
feeder loads, and a midday PV bell. Values are deliberately tuned so the
critical cable in `dr_overload` sits a few points either side of the 55%
demand-response threshold at night and in the late afternoon while staying
below 60% without DR.
"""

import math
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "scenarios", "profiles")
DT = 900
T_END = 86400


def bell(t_h, center_h, width_h):
    return math.exp(-0.5 * ((t_h - center_h) / width_h) ** 2)


def piecewise(t_h, points):
    """Linear interpolation through (hour, value) anchors."""
    for (h0, v0), (h1, v1) in zip(points, points[1:]):
        if h0 <= t_h <= h1:
            return v0 + (v1 - v0) * (t_h - h0) / (h1 - h0)
    return points[-1][1] if t_h > points[-1][0] else points[0][1]


def t_amb(t_h):
    return 292.0 + 6.0 * math.sin(2.0 * math.pi * (t_h - 9.0) / 24.0)


def solar(t_h, facade):
    if t_h < 5.5 or t_h > 20.5:
        return 0.0
    day = math.sin(math.pi * (t_h - 5.5) / 15.0) ** 1.5
    shape = {
        "e": bell(t_h, 9.0, 2.6),
        "s": bell(t_h, 13.0, 3.6),
        "w": bell(t_h, 17.0, 2.6),
        "n": 0.18 * bell(t_h, 13.0, 4.5),
    }[facade]
    return 750.0 * day * shape


def q_ihg(t_h):
    # Watts. High equipment usage during off-hours keeps night gains up.
    return 1e3 * piecewise(
        t_h,
        [(0, 150), (5, 150), (7, 175), (9, 230), (12, 245), (15, 245), (18, 200), (20, 160), (24, 151)],
    )


def base_load(t_h):
    return piecewise(t_h, [(0, 80), (6, 80), (8, 100), (9, 120), (17, 120), (19, 95), (22, 82), (24, 80)])


def agg_a1_p(t_h):
    return piecewise(t_h, [(0, 860), (6, 840), (9, 980), (13, 1010), (17, 1000), (21, 900), (24, 862)])


def agg_a6_p(t_h):
    return piecewise(
        t_h,
        [(0, 466), (1, 478), (2.5, 503), (5, 505), (7, 448), (9, 385), (11, 368), (13, 420), (15, 455), (17, 480), (19, 478), (21, 490), (22.5, 497), (24, 466)],
    )


def pv_p(t_h):
    if t_h < 6.0 or t_h > 20.0:
        return 0.0
    return 340.0 * math.sin(math.pi * (t_h - 6.0) / 14.0) ** 2.2


def write(name, fn):
    path = os.path.join(OUT, name)
    with open(path, "w", newline="\n") as f:
        f.write("time_s,value\n")
        for t in range(0, T_END + 1, DT):
            f.write(f"{t},{fn(t / 3600.0):.6f}\n")
    print(path)


def main():
    os.makedirs(OUT, exist_ok=True)
    write("t_amb.csv", t_amb)
    for fc in "eswn":
        write(f"solar_{fc}.csv", lambda h, fc=fc: solar(h, fc))
    write("q_ihg.csv", q_ihg)
    write("base_load.csv", base_load)
    write("agg_a1_p.csv", agg_a1_p)
    write("agg_a1_q.csv", lambda h: agg_a1_p(h) * math.tan(math.acos(0.95)))
    write("agg_a6_p.csv", agg_a6_p)
    # Power factor 0.94 inductive for the second aggregate.
    write("agg_a6_q.csv", lambda h: agg_a6_p(h) * math.tan(math.acos(0.94)))
    write("pv_p.csv", pv_p)


if __name__ == "__main__":
    main()
