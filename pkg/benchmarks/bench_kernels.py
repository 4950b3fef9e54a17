"""Compare the compiled kernels with the numpy fallback.

Runs the per-slice exponentials and the propagator chains of both backends
on the largest coherence block of a model, then times a full GRAPE gradient
with each backend in a fresh interpreter (the backend is chosen at import).

    python benchmarks/bench_kernels.py [--tls 1|2] [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from nmcontrol import build_operators, reference_model
from nmcontrol.blocks import block_system

GRADIENT_SNIPPET = """
import time, numpy as np
from nmcontrol import PiecewiseControl, build_operators, reference_model, kernels
from nmcontrol.grape import U1, gradient
ops = build_operators(reference_model(extra_tls={extra}))
c = PiecewiseControl(40.0, np.random.default_rng(0).normal(size=400))
gradient(ops, c, U1)
t = time.perf_counter()
for _ in range({repeat}):
    gradient(ops, c, U1)
print(kernels.BACKEND, (time.perf_counter() - t) / {repeat})
"""


def _best(stmt, repeat):
    return min(timeit.repeat(stmt, number=1, repeat=repeat))


def _backends():
    from nmcontrol.kernels import _chain_py, _expm_py
    out = {"python": (_expm_py, _chain_py)}
    try:
        from nmcontrol.kernels import _chain, _expm
        out["compiled"] = (_expm, _chain)
    except ImportError:
        print("compiled kernels not built; timing the fallback only")
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tls", type=int, choices=(1, 2), default=1)
    ap.add_argument("--slices", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    extra = [] if args.tls == 1 else [(1000.0, 40.0, 200.0)]
    ops = build_operators(reference_model(extra_tls=extra))
    block = max(block_system(ops).blocks, key=lambda b: b.size)
    k = block.size
    rng = np.random.default_rng(0)
    values = rng.normal(size=args.slices)
    dt = 40.0 / args.slices
    # chains carry only the qudit columns of the block, as in the gradient
    F0 = block.inputs.astype(complex)
    C0 = block.readout.astype(complex)

    print(f"{args.tls} TLS, largest block {k}x{k} (rank {block.rank}), {args.slices} slices, "
          f"best of {args.repeat}")
    print(f"{'kernel':<28}{'python [ms]':>12}{'compiled [ms]':>15}{'speedup':>10}")
    rows = {}
    for name, (expm, chain) in _backends().items():
        G, dG = expm.expm_slices(block.L0, block.g, values, dt, True)
        rows.setdefault("expm_slices", {})[name] = _best(
            lambda: expm.expm_slices(block.L0, block.g, values, dt, False), args.repeat)
        rows.setdefault("expm_slices + derivative", {})[name] = _best(
            lambda: expm.expm_slices(block.L0, block.g, values, dt, True), args.repeat)
        F = chain.forward_chain(G, F0)
        B = chain.backward_chain(G, C0)
        rows.setdefault("forward_chain", {})[name] = _best(
            lambda: chain.forward_chain(G, F0), args.repeat)
        rows.setdefault("backward_chain", {})[name] = _best(
            lambda: chain.backward_chain(G, C0), args.repeat)
        rows.setdefault("slice_gradients", {})[name] = _best(
            lambda: chain.slice_gradients(B, dG, F), args.repeat)

    for stage in ("python", "compiled"):
        env = dict(os.environ, NMCONTROL_PURE_PYTHON="1" if stage == "python" else "0")
        code = GRADIENT_SNIPPET.format(extra=extra, repeat=args.repeat)
        out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        rows.setdefault("full gradient", {})[out[0]] = float(out[1])

    for name, t in rows.items():
        py, comp = t.get("python"), t.get("compiled")
        speed = f"{py / comp:.2f}x" if py and comp else "-"
        fmt = lambda x: f"{1e3 * x:.2f}" if x is not None else "-"  # noqa: E731
        print(f"{name:<28}{fmt(py):>12}{fmt(comp):>15}{speed:>10}")


if __name__ == "__main__":
    main()
