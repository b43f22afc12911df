"""Compare the compiled and pure-Python kernels on the two hot loops.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from eqprop_lif import task
from eqprop_lif.core import build_topology, init_weights
from eqprop_lif.energy import RateState, relax
from eqprop_lif.eqprop_rate import LearningRates, PhaseSchedule
from eqprop_lif.harness.config import FIG5
from eqprop_lif.kernels import BACKENDS
from eqprop_lif.lif import PopulationCode, SpikingModel, run_trial
from eqprop_lif.nonlinearity import Activation


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def rate_case(backend):
    p = init_weights(build_topology([2, 400, 2], bias=True), np.random.default_rng(0), 0.5)
    st = RateState.zeros(p.topology.n_neurons)
    st.s_hat[:2] = [0.3, 0.7]
    return lambda: relax(st, p, Activation(), duration=600.0, backend=backend)


def spiking_case(backend, per_dim, hidden, phase):
    code = PopulationCode(per_dim)
    p = init_weights(build_topology(code.layer_sizes([hidden]), bias=True), np.random.default_rng(0), 0.1)
    model = SpikingModel(FIG5, code, PhaseSchedule(phase, phase), LearningRates(5e-5), backend=backend)
    smp = task.make_sample(0.3, 0.7)
    return lambda: run_trial(p, smp, model)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--phase", type=float, default=1000.0, help="spiking phase length (ms)")
    args = ap.parse_args(argv)

    cases = {
        "rate relax 2-400-2, 600 steps": lambda b: rate_case(b),
        "spiking trial 20-100-20": lambda b: spiking_case(b, 10, 100, args.phase),
        "spiking trial 40-300-40": lambda b: spiking_case(b, 20, 300, args.phase),
    }
    names = sorted(BACKENDS)
    print(f"{'case':34s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, make in cases.items():
        t = {n: best_of(make(n), args.repeats) for n in names}
        row = f"{label:34s}" + "".join(f"{t[n] * 1e3:10.1f}ms" for n in names)
        if "cython" in t:
            row += f"{t['python'] / t['cython']:11.1f}x"
        print(row, flush=True)


if __name__ == "__main__":
    main()
