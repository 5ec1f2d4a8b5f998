"""Generate the 1 Hz NEDC speed table from the regulatory breakpoints.

ECE-15 urban segment (195 s, repeated 4x) followed by the EUDC extra-urban
segment (400 s). Breakpoints are (time_s, speed_kmh); speeds between
breakpoints are linear. Gear-change pauses are held at constant speed.
"""
import sys

ECE = [(0, 0), (11, 0), (15, 15), (23, 15), (25, 10), (28, 0), (49, 0),
       (54, 15), (56, 15), (61, 32), (85, 32), (93, 10), (96, 0), (117, 0),
       (122, 15), (124, 15), (133, 35), (135, 35), (143, 50), (155, 50),
       (163, 35), (176, 35), (185, 10), (188, 0), (195, 0)]
EUDC = [(0, 0), (20, 0), (26, 15), (28, 15), (33, 35), (35, 35), (44, 50),
        (46, 50), (61, 70), (111, 70), (119, 50), (188, 50), (201, 70),
        (251, 70), (286, 100), (316, 100), (336, 120), (346, 120),
        (362, 80), (370, 50), (380, 0), (400, 0)]


def knots():
    pts = []
    off = 0
    for _ in range(4):
        for t, v in ECE:
            if pts and pts[-1][0] == t + off:
                continue
            pts.append((t + off, v))
        off += 195
    for t, v in EUDC:
        if pts and pts[-1][0] == t + off:
            continue
        pts.append((t + off, v))
    return pts


def table():
    pts = knots()
    out = []
    for t in range(pts[-1][0] + 1):
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if t0 <= t <= t1:
                out.append((t, v0 + (v1 - v0) * (t - t0) / (t1 - t0)))
                break
    return out


if __name__ == "__main__":
    rows = table()
    if len(sys.argv) > 1 and sys.argv[1] == "--distance":
        d = sum((rows[i][1] + rows[i + 1][1]) / 2 / 3.6 for i in range(len(rows) - 1))
        print(f"steps={len(rows) - 1} distance_m={d:.6f}")
    else:
        print("# NEDC (ECE-15 x4 + EUDC), 1 Hz, linear between regulatory breakpoints")
        print("time_s,speed_kmh")
        for t, v in rows:
            print(f"{t},{v:.6g}")
