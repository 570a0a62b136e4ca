#!/usr/bin/env python3
"""Stand-alone bootstrap duration estimate, written from the protocol alone.

Seed protocol: per-POI stream state = derive_seed(seed, [poi]); every
resampled index is splitmix64(state) % n; estimate = linear-interpolated
`level` quantile of the sorted resample means.

Usage: bootstrap_oracle.py [--expect HEX,HEX]
"""
import argparse
import math
import sys

MASK = (1 << 64) - 1


def splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return state, z ^ (z >> 31)


def derive_seed(seed, keys):
    state, out = splitmix64(seed)
    for k in keys:
        state = out ^ ((k * 0xD1B54A32D192ED03) & MASK)
        state, out = splitmix64(state)
    return out


def estimate(samples, poi, seed, resamples, level):
    n = len(samples)
    state = derive_seed(seed, [poi])
    means = []
    for _ in range(resamples):
        total = 0.0
        for _ in range(n):
            state, r = splitmix64(state)
            total += samples[r % n]
        means.append(total / n)
    means.sort()
    h = (resamples - 1) * level
    lo = math.floor(h)
    if lo + 1 >= len(means):
        return means[lo]
    return means[lo] + (h - lo) * (means[lo + 1] - means[lo])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--expect", help="comma-separated hex floats the C++ suite has frozen")
    args = ap.parse_args()
    values = [
        estimate([300.0, 600.0, 900.0], poi=1, seed=42, resamples=1000, level=0.80),
        estimate([312.5, 610.25, 905.75, 1201.0, 455.0], poi=7, seed=42, resamples=1000, level=0.80),
    ]
    for v in values:
        print(f"{v.hex()} {v!r}")
    if args.expect is not None:
        expected = [float.fromhex(x) for x in args.expect.split(",")]
        if expected != values:
            print(f"mismatch: expected {args.expect}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
