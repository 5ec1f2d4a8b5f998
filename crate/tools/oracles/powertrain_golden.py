"""Independent scalar re-implementation of the HEV step recurrence.

Writes the golden trace for one full NEDC episode under a constant
normalized engine power of 0.3, starting at SOC = 0.6 with the default
vehicle and the default envelope for the cycle horizon.
Columns: t,soc,velocity,action,reward,cost (state *after* the step).
"""
import csv
import math
import sys

G = 9.81
P = dict(mass=1500.0, cd=0.26, area=2.0, cr=0.01, rho=1.2, eta_dl=0.9,
         ah=6.5, volt=202.0, p_eng=56000.0, idle=0.15, eta_eng=0.36,
         lhv=43000.0, p_mot=50000.0)


def speeds(path):
    rows = [l for l in open(path) if l.strip() and not l.startswith("#")]
    return [float(r.split(",")[1]) / 3.6 for r in rows[1:]]


def demand(v, a):
    return (P["mass"] * a * v + 0.5 * P["rho"] * P["cd"] * P["area"] * v ** 3
            + P["mass"] * G * P["cr"] * v) / P["eta_dl"]


def fuel_rate(pe):
    if pe == 0.0:
        return 0.0
    return P["idle"] + pe / (P["eta_eng"] * P["lhv"])


def limits(t, ts, H=0.7, L=0.5, B=0.6):
    bl = math.ceil(0.1 * ts)
    br = math.floor(0.9 * ts)
    if t <= bl:
        return (H - B) / bl * t + B, (L - B) / bl * t + B
    if t > br:
        return (H - B) / (br - ts) * (t - ts) + B, (L - B) / (br - ts) * (t - ts) + B
    return H, L


def main(cycle_path, out_path, action=0.3, soc=0.6):
    v = speeds(cycle_path)
    ts = len(v) - 1
    fuel = 0.0
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "soc", "velocity", "action", "reward", "cost"])
        for t in range(ts):
            vbar = 0.5 * (v[t] + v[t + 1])
            acc = v[t + 1] - v[t]
            pe = action * P["p_eng"]
            pb = min(max(demand(vbar, acc) - pe, -P["p_mot"]), P["p_mot"])
            soc = min(max(soc - pb / (P["ah"] * 3600.0 * P["volt"]), 0.0), 1.0)
            r = -fuel_rate(pe)
            fuel -= r
            up, lo = limits(t + 1, ts)
            c = max(soc - up, 0.0) + max(lo - soc, 0.0)
            w.writerow([t + 1, repr(soc), repr(v[t + 1]), action, repr(r), repr(c)])
    print(f"steps={ts} fuel_g={fuel!r} final_soc={soc!r}")
    print(f"braking demand v=10 a=-2: {demand(10.0, -2.0)!r}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
