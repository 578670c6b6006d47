"""Build data/v1/diamonds.csv from the ggplot2 diamonds table.

Input: the 53,940-row diamonds table as shipped with ggplot2 (the same
file is bundled by plotnine as plotnine/data/diamonds.csv, sha256
9574730b03aba241d899c4a97511c5061b19358fab89510774fb6c24168345c4).

Output: 5000 rows (every 10th row starting at row 0) with the response
Y = log(price) and 24 predictors:
  carat, log_carat, depth, table, x, y, z            (7 numeric)
  cut.L .. cut^4                                     (4 polynomial contrasts)
  color.L .. color^6                                 (6 polynomial contrasts)
  clarity.L .. clarity^7                             (7 polynomial contrasts)
Ordered factors are encoded with R's contr.poly orthonormal contrasts.

Usage: python3 make_diamonds.py <diamonds.csv> <out.csv>
"""

import csv
import math
import sys

import numpy as np

CUT = ["Fair", "Good", "Very Good", "Premium", "Ideal"]
COLOR = ["D", "E", "F", "G", "H", "I", "J"]
CLARITY = ["I1", "SI2", "SI1", "VS2", "VS1", "VVS2", "VVS1", "IF"]


def contr_poly(n):
    x = np.arange(1, n + 1, dtype=float)
    x = x - x.mean()
    v = np.vander(x, n, increasing=True)
    q, r = np.linalg.qr(v)
    q = q * np.sign(np.diag(r))
    return q[:, 1:]


def main(src, dst):
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(fh))
    rows = rows[::10][:5000]
    cut_c, color_c, clarity_c = contr_poly(5), contr_poly(7), contr_poly(8)
    suffix = lambda k: [".L", ".Q", ".C"][k] if k < 3 else "^%d" % (k + 1)
    header = ["Y", "carat", "log_carat", "depth", "table", "x", "y", "z"]
    header += ["cut" + suffix(k) for k in range(4)]
    header += ["color" + suffix(k) for k in range(6)]
    header += ["clarity" + suffix(k) for k in range(7)]
    with open(dst, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            carat = float(r["carat"])
            out = [math.log(float(r["price"])), carat, math.log(carat)]
            out += [float(r[k]) for k in ("depth", "table", "x", "y", "z")]
            out += list(cut_c[CUT.index(r["cut"])])
            out += list(color_c[COLOR.index(r["color"])])
            out += list(clarity_c[CLARITY.index(r["clarity"])])
            w.writerow(["%.10g" % v for v in out])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
