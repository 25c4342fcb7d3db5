"""Compare the compiled and pure-Python kernels on the same workloads.

    python benchmarks/bench_kernel.py [--ui 200000] [--repeat 3]

Each workload runs once per backend and the results are checked for
equality before timings are printed (ns per simulated UI).
"""
from __future__ import annotations

import argparse
import time

from srfdsim import kernel
from srfdsim.cdr_loop import kernel_params
from srfdsim.frontend import EdgeScheme
from srfdsim.signal import ChannelSpec, make_channel, prbs_bits


def workloads(n_ui: int):
    pulse = make_channel(ChannelSpec(10.0))
    bits = prbs_bits(int(n_ui * 1.2) + 4 * pulse.span_ui)
    yield "srfd open loop, 2 UI", kernel_params(
        bits, pulse, 10e9, 10e9 / 2.2, EdgeScheme.coarse(), srfd_on=True)
    yield "srfd open loop, 4 UI", kernel_params(
        bits, pulse, 10e9, 10e9 / 2.1, EdgeScheme.fine(), srfd_on=True)
    yield "dlf closed loop + BER", kernel_params(
        bits, pulse, 10e9, 5e9, EdgeScheme.lock(), dlf_on=True, ki=2.0 ** -12, ber_on=True)


def time_backend(name: str, prm, n_ui: int, repeat: int):
    kernel.set_backend(name)
    best = float("inf")
    st = None
    for _ in range(repeat):
        st = kernel.KernelState(c=prm.span + 0.3)
        t0 = time.perf_counter()
        kernel.run(st, prm, n_ui)
        best = min(best, time.perf_counter() - t0)
    return best, st


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ui", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = kernel.available_backends()
    print(f"backends: {', '.join(backends)}; {args.ui} UI per run, best of {args.repeat}")
    print(f"{'workload':<24}" + "".join(f"{b + ' ns/UI':>16}" for b in backends) + f"{'speedup':>10}")
    original = kernel.backend()
    try:
        for label, prm in workloads(args.ui):
            times, states = {}, {}
            for b in backends:
                n = args.ui if b != "python" else max(args.ui // 10, 1000)
                t, st = time_backend(b, prm, n, args.repeat)
                times[b] = t / n * 1e9
                states[b] = st
            if "python" in states and "cython" in states:
                # same short run on both backends must give identical state
                kernel.set_backend("python")
                ref = kernel.KernelState(c=prm.span + 0.3)
                kernel.run(ref, prm, max(args.ui // 10, 1000))
                kernel.set_backend("cython")
                chk = kernel.KernelState(c=prm.span + 0.3)
                kernel.run(chk, prm, max(args.ui // 10, 1000))
                assert ref == chk, f"backends disagree on {label}"
            row = f"{label:<24}" + "".join(f"{times[b]:>16.1f}" for b in backends)
            if len(times) == 2:
                row += f"{times['python'] / times['cython']:>9.0f}x"
            print(row)
    finally:
        kernel.set_backend(original)


if __name__ == "__main__":
    main()
