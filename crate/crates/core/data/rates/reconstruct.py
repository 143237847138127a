"""Rebuild the bundled monthly rate fixtures.

The fixtures are reconstructions, not official releases: annual averages
(CPI-U, 3-month T-bill) and month-end closes (S&P 500) for well-known dates
are used as anchors and the months between anchors are interpolated
(geometrically for index levels, linearly for yields). Replace the CSVs with
the official FRED series (CPIAUCSL, TB3MS) and a monthly S&P 500 close series
to train on the exact historical record; the loader does not care.
"""
import csv
import math

FIRST = (1984, 1)
LAST = (2022, 12)


def idx(y, m):
    return y * 12 + (m - 1)


def months():
    for i in range(idx(*FIRST), idx(*LAST) + 1):
        yield i // 12, i % 12 + 1


def interpolate(anchors, geometric):
    pts = sorted((idx(y, m), v) for (y, m), v in anchors.items())
    out = {}
    for y, m in months():
        i = idx(y, m)
        if i <= pts[0][0]:
            (a, va), (b, vb) = pts[0], pts[1]
        elif i >= pts[-1][0]:
            (a, va), (b, vb) = pts[-2], pts[-1]
        else:
            k = next(k for k in range(len(pts) - 1) if pts[k][0] <= i <= pts[k + 1][0])
            (a, va), (b, vb) = pts[k], pts[k + 1]
        w = (i - a) / (b - a)
        if geometric:
            out[(y, m)] = va * math.exp(w * math.log(vb / va))
        else:
            out[(y, m)] = va + w * (vb - va)
    return out


CPI_ANNUAL = {
    1984: 103.9, 1985: 107.6, 1986: 109.6, 1987: 113.6, 1988: 118.3, 1989: 124.0,
    1990: 130.7, 1991: 136.2, 1992: 140.3, 1993: 144.5, 1994: 148.2, 1995: 152.4,
    1996: 156.9, 1997: 160.5, 1998: 163.0, 1999: 166.6, 2000: 172.2, 2001: 177.1,
    2002: 179.9, 2003: 184.0, 2004: 188.9, 2005: 195.3, 2006: 201.6, 2007: 207.342,
    2008: 215.303, 2009: 214.537, 2010: 218.056, 2011: 224.939, 2012: 229.594,
    2013: 232.957, 2014: 236.736, 2015: 237.017, 2016: 240.007, 2017: 245.120,
    2018: 251.107, 2019: 255.657, 2020: 258.811, 2021: 270.970, 2022: 292.655,
}
CPI_MONTHLY = {(1984, 1): 101.9, (2022, 12): 296.797}

TBILL_ANNUAL = {
    1984: 9.58, 1985: 7.48, 1986: 5.98, 1987: 5.82, 1988: 6.69, 1989: 8.12, 1990: 7.51,
    1991: 5.42, 1992: 3.45, 1993: 3.02, 1994: 4.29, 1995: 5.51, 1996: 5.02, 1997: 5.07,
    1998: 4.81, 1999: 4.66, 2000: 5.85, 2001: 3.44, 2002: 1.62, 2003: 1.01, 2004: 1.37,
    2005: 3.15, 2006: 4.73, 2007: 4.36, 2008: 1.37, 2009: 0.15, 2010: 0.14, 2011: 0.05,
    2012: 0.09, 2013: 0.06, 2014: 0.03, 2015: 0.05, 2016: 0.32, 2017: 0.93, 2018: 1.94,
    2019: 2.06, 2020: 0.37, 2021: 0.04, 2022: 2.02,
}
TBILL_MONTHLY = {
    (2001, 12): 1.72, (2007, 12): 3.07, (2008, 12): 0.03, (2015, 12): 0.23,
    (2019, 12): 1.54, (2020, 4): 0.14, (2022, 1): 0.15, (2022, 12): 4.15,
}

SP500 = {
    (1983, 12): 164.93, (1984, 12): 167.24, (1985, 12): 211.28, (1986, 12): 242.17,
    (1987, 8): 329.80, (1987, 11): 230.30, (1987, 12): 247.08, (1988, 12): 277.72,
    (1989, 12): 353.40, (1990, 6): 358.02, (1990, 10): 304.00, (1990, 12): 330.22,
    (1991, 12): 417.09, (1992, 12): 435.71, (1993, 12): 466.45, (1994, 12): 459.27,
    (1995, 12): 615.93, (1996, 12): 740.74, (1997, 12): 970.43, (1998, 7): 1120.67,
    (1998, 8): 957.28, (1998, 12): 1229.23, (1999, 12): 1469.25, (2000, 8): 1517.68,
    (2000, 12): 1320.28, (2001, 12): 1148.08, (2002, 9): 815.28, (2002, 12): 879.82,
    (2003, 12): 1111.92, (2004, 12): 1211.92, (2005, 12): 1248.29, (2006, 12): 1418.30,
    (2007, 10): 1549.38, (2007, 12): 1468.36, (2008, 12): 903.25, (2009, 2): 735.09,
    (2009, 12): 1115.10, (2010, 12): 1257.64, (2011, 4): 1363.61, (2011, 9): 1131.42,
    (2011, 12): 1257.60, (2012, 12): 1426.19, (2013, 12): 1848.36, (2014, 12): 2058.90,
    (2015, 7): 2103.84, (2015, 8): 1972.18, (2015, 12): 2043.94, (2016, 12): 2238.83,
    (2017, 12): 2673.61, (2018, 9): 2913.98, (2018, 12): 2506.85, (2019, 12): 3230.78,
    (2020, 1): 3225.52, (2020, 3): 2584.59, (2020, 12): 3756.07, (2021, 12): 4766.18,
    (2022, 9): 3585.62, (2022, 12): 3839.50,
}


def write(name, series, digits):
    with open(f"{name}.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["date", "value"])
        for (y, m), v in sorted(series.items()):
            w.writerow([f"{y:04d}-{m:02d}", f"{v:.{digits}f}"])


cpi = dict(CPI_MONTHLY)
cpi.update({(y, 6): v for y, v in CPI_ANNUAL.items()})
write("cpi", interpolate(cpi, geometric=True), 3)

tb = {(y, 6): v for y, v in TBILL_ANNUAL.items()}
tb.update(TBILL_MONTHLY)
write("tbill", interpolate(tb, geometric=False), 2)

write("sp500", interpolate(SP500, geometric=True), 2)
