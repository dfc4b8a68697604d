"""Freeze conditioned-law distances for iid geometric(1/2) from closed forms.

Independent of the package: uses mpmath only.  With P(X = x) = (1-p) p^x the
sum S_m is negative binomial, P(S_m <= k) = I_{1-p}(m, k+1), P(S_m > k) = I_p(k+1, m), and

    P(X_1 = x | S_n in I) = nu(x) P(S_{n-1} in I - x) / P(S_n in I).

The event mass at n = 25 is also recomputed by a plain pure-Python
convolution loop.  Run from the repository root to regenerate gcp_oracle.json.
"""

import json
import math
from pathlib import Path

import mpmath as mp

mp.mp.dps = 40
P = mp.mpf(1) / 2
N_LIST = [25, 50, 100, 200, 400]
X_MAX = 400
RUNS = [("above", 1.5), ("below", 0.6), ("equal-floor", 1.5)]


def cdf(m, k):
    """P(S_m <= k)."""
    if k < 0:
        return mp.mpf(0)
    if m == 0:
        return mp.mpf(1)
    return mp.betainc(m, k + 1, 0, 1 - P, regularized=True)


def sf(m, k):
    """P(S_m > k) without cancellation."""
    if k < 0:
        return mp.mpf(1)
    if m == 0:
        return mp.mpf(0)
    return mp.betainc(k + 1, m, 0, P, regularized=True)


def pmf_sum(m, k):
    if k < 0:
        return mp.mpf(0)
    if m == 0:
        return mp.mpf(1) if k == 0 else mp.mpf(0)
    return mp.binomial(m + k - 1, k) * (1 - P) ** m * P**k


def event_prob(m, mode, r, shift=0):
    """P(S_m + shift in event)."""
    if mode == "above":
        lo = math.floor(r) + 1 - shift
        return sf(m, lo - 1)
    if mode == "below":
        hi = math.ceil(r) - 1 - shift
        return cdf(m, hi)
    return pmf_sum(m, math.floor(r) - shift)


def r_star(lam, n):
    mean = mp.mpf(lam) * P / (1 - mp.mpf(lam) * P)
    v = n * mean
    return float(mp.nint(v)) if abs(v - mp.nint(v)) < 1e-20 else float(v)


def tilted(lam, x):
    q = mp.mpf(lam) * P
    return (1 - q) * q**x


def brute_event_mass(n, mode, r):
    nu = [float((1 - P) * P**x) for x in range(200)]
    law = [1.0]
    for _ in range(n):
        out = [0.0] * (len(law) + len(nu) - 1)
        for i, a in enumerate(law):
            if a < 1e-300:
                continue
            for j, b in enumerate(nu):
                out[i + j] += a * b
        law = out[:600]
    if mode == "above":
        return sum(law[math.floor(r) + 1:])
    if mode == "below":
        return sum(law[: math.ceil(r)])
    return law[math.floor(r)]


def main():
    out = {"family": "iid geometric(p=0.5)", "ell": 1, "n_list": N_LIST, "runs": []}
    for mode, lam in RUNS:
        rows = []
        for n in N_LIST:
            r = r_star(lam, n)
            mass = event_prob(n, mode, r)
            tv = mp.mpf(0)
            for x in range(X_MAX + 1):
                cond = (1 - P) * P**x * event_prob(n - 1, mode, r, shift=x) / mass
                tv += abs(cond - tilted(lam, x))
            rows.append({"n": n, "r_star": r, "event_mass": float(mass), "tv": float(tv / 2)})
        out["runs"].append({
            "mode": mode,
            "lambda_star": lam,
            "rows": rows,
            "brute_event_mass_n25": brute_event_mass(25, mode, rows[0]["r_star"]),
        })
    path = Path(__file__).with_name("gcp_oracle.json")
    path.write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
