"""Compare compiled and pure-Python sweep kernels.

Usage: python benchmarks/bench_kernels.py [--L 16] [--sweeps 20]

Each backend runs in its own interpreter because the choice is fixed at
import time. Both must end on the same energy, since they consume the same
random numbers in the same order.
"""

import argparse
import json
import os
import subprocess
import sys
import time

MODELS = {
    "potts": {"kind": "potts", "q": 10},
    "diluted_potts": {"kind": "diluted_potts", "q": 3},
    "diluted_xy": {"kind": "diluted_xy"},
    "o2af": {"kind": "o2af"},
    "nlvm": {"kind": "nlvm", "p": 100},
    "magnetostriction": {"kind": "magnetostriction"},
}


def worker(L: int, sweeps: int):
    from chessgap._accel import backend
    from chessgap.lattice import TorusGeometry
    from chessgap.mc import new_chain, start_names, sweep
    from chessgap.models import model_from_dict

    out = {"backend": backend(), "models": {}}
    for name, params in MODELS.items():
        m = model_from_dict(params)
        g = TorusGeometry(2, L, 1)
        st = new_chain(m, g, start_names(m)[0], seed=1)
        sweep(m, g, 1.0, st)  # compile outside the timed region
        t0 = time.perf_counter()
        for _ in range(sweeps):
            sweep(m, g, 1.0, st)
        dt = time.perf_counter() - t0
        out["models"][name] = {"per_sweep_s": dt / sweeps, "energy": st.energy}
    print(json.dumps(out))


def run(backend_off: bool, L: int, sweeps: int) -> dict:
    env = dict(os.environ)
    if backend_off:
        env["CHESSGAP_NO_NUMBA"] = "1"
    else:
        env.pop("CHESSGAP_NO_NUMBA", None)
    res = subprocess.run([sys.executable, __file__, "--worker", "--L", str(L), "--sweeps", str(sweeps)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", type=int, default=16)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.L, args.sweeps)
        return 0
    fast, slow = run(False, args.L, args.sweeps), run(True, args.L, args.sweeps)
    print(f"L={args.L}, {args.sweeps} timed sweeps per model")
    print(f"{'model':18s} {fast['backend'] + ' ms/sweep':>16s} {slow['backend'] + ' ms/sweep':>17s} {'speedup':>9s}  same")
    ok = True
    for name in MODELS:
        f, s = fast["models"][name], slow["models"][name]
        same = abs(f["energy"] - s["energy"]) <= 1e-9 * max(1.0, abs(s["energy"]))
        ok &= same
        print(f"{name:18s} {1e3 * f['per_sweep_s']:16.3f} {1e3 * s['per_sweep_s']:17.3f} "
              f"{s['per_sweep_s'] / f['per_sweep_s']:9.1f}  {same}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
