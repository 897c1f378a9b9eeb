"""Benchmark the event loop with and without JIT compilation.

Runs the same standard workload in two subprocesses, one with numba enabled
and one with ``BCPP_NO_NUMBA=1``, and reports events/second for each.  Both
runs must produce the identical field checksum; a mismatch means the two
execution paths diverged.

Usage: python -m bcpp.bench [--events N] [--L L] [--d D]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKLOAD = r"""
import json, time
import numpy as np
from bcpp import _loops
from bcpp.accel import JIT_ENABLED

L, d, lam, n_events = {L}, {d}, {lam}, {events}
n = L ** d
rng = np.random.default_rng(7)
zeta = rng.random(n) + 0.5
p_death = 1.0 / (1.0 + 2 * d * lam)
state = _loops.seed_state([11, 22, 33])

if JIT_ENABLED:  # compile outside the timed section
    _loops.run_events(zeta.copy(), L, d, p_death, 10, state.copy())

t0 = time.perf_counter()
deaths, infections, zexp = _loops.run_events(zeta, L, d, p_death, n_events, state)
elapsed = time.perf_counter() - t0
print(json.dumps({{
    "jit": bool(JIT_ENABLED),
    "events": n_events,
    "seconds": elapsed,
    "events_per_second": n_events / elapsed,
    "checksum": float(zeta.sum()),
    "deaths": int(deaths),
    "infections": int(infections),
}}))
"""


def run_mode(no_numba, L, d, lam, events):
    env = dict(os.environ)
    env["BCPP_NO_NUMBA"] = "1" if no_numba else "0"
    code = _WORKLOAD.format(L=L, d=d, lam=lam, events=events)
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--events", type=int, default=2_000_000, help="events for the JIT run")
    ap.add_argument("--fallback-events", type=int, default=200_000,
                    help="events for the interpreted run (it is much slower)")
    ap.add_argument("--L", type=int, default=32)
    ap.add_argument("--d", type=int, default=3)
    ap.add_argument("--lambda", type=float, default=0.6, dest="lam")
    args = ap.parse_args(argv)

    jit = run_mode(False, args.L, args.d, args.lam, args.events)
    py = run_mode(True, args.L, args.d, args.lam, args.fallback_events)

    small_jit = run_mode(False, args.L, args.d, args.lam, args.fallback_events)
    match = small_jit["checksum"] == py["checksum"]

    print(f"lattice: d={args.d} L={args.L} lambda={args.lam}")
    print(f"numba   : {jit['events_per_second'] / 1e6:8.2f} M events/s  ({jit['events']} events)")
    print(f"fallback: {py['events_per_second'] / 1e6:8.2f} M events/s  ({py['events']} events)")
    print(f"speedup : {jit['events_per_second'] / py['events_per_second']:.1f}x")
    print(f"identical results on the matched workload: {'yes' if match else 'NO'}")
    return 0 if match else 1


if __name__ == "__main__":
    sys.exit(main())
