"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 divergence, 3 gradcheck threshold failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import gradcheck, lif, task
from ..core import NetworkParams, build_topology, load_checkpoint
from ..energy import DivergenceError
from ..nonlinearity import liffi
from . import config as cfgmod
from . import runner
from .runner import EXIT_DIVERGENCE, EXIT_OK, EXIT_THRESHOLD, EXIT_USAGE

log = logging.getLogger("eqprop_lif")


def _config_from_args(args) -> cfgmod.ExperimentConfig:
    if args.config:
        base = cfgmod.preset(args.preset) if args.preset else None
        cfg = cfgmod.load(args.config, base)
    elif args.preset:
        cfg = cfgmod.preset(args.preset)
    else:
        raise cfgmod.ConfigError("give --preset or --config")
    top = {}
    if args.out:
        top["output_dir"] = args.out
    if args.seed is not None:
        top["seed"] = args.seed
    if args.n_train is not None:
        top["n_train_samples"] = args.n_train
    if args.eval_every is not None:
        top["eval_every"] = args.eval_every
    return cfgmod.apply_overrides(cfg, top)


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    if args.print_config:
        sys.stdout.write(cfgmod.to_ini(cfg))
        return EXIT_OK
    if args.mkdir:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",")]
        codes = runner.sweep(cfg, seeds, args.workers, args.backend)
        for s, c in codes.items():
            print(f"seed {s}: exit {c}")
        return max(codes.values())
    try:
        res = runner.execute(cfg, args.backend)
    except DivergenceError as exc:
        log.error("%s", exc)
        return EXIT_DIVERGENCE
    print(f"initial eval error {res.initial_error:.4f}, final eval error {res.final_error:.4f}")
    return EXIT_OK


def cmd_resume(args) -> int:
    try:
        res = runner.execute_resume(args.checkpoint, args.out, args.backend)
    except DivergenceError as exc:
        log.error("%s", exc)
        return EXIT_DIVERGENCE
    print(f"final eval error {res.final_error:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, doc = load_checkpoint(args.checkpoint)
    cfg = cfgmod.from_ini(doc["config"]) if "config" in doc else cfgmod.preset(args.preset or "fig3-relu")
    samples = task.grid(args.grid)
    preds = runner.predictions(cfg, params, samples, args.backend)
    err = task.euclid_error(preds, [s.target for s in samples])
    if args.predictions:
        with open(args.predictions, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["theta", "phi", "x", "y", "x_pred", "y_pred"])
            for s, p in zip(samples, preds):
                wr.writerow([repr(s.theta), repr(s.phi), repr(s.x), repr(s.y), repr(float(p[0])), repr(float(p[1]))])
    print(json.dumps({"grid": args.grid, "eval_error": err}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    layer_sizes = tuple(int(v) for v in args.layers.split(","))
    report = gradcheck.run_suite(args.instances, args.seed, layer_sizes=layer_sizes)
    text = gradcheck.dumps(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text)
    for f in report["failures"]:
        log.error("%s", f)
    return EXIT_OK if report["passed"] else EXIT_THRESHOLD


def cmd_fi_curve(args) -> int:
    cfg = cfgmod.preset(args.preset)
    k = cfg.constants
    vs = np.linspace(args.v_min, args.v_max, args.points)
    n = len(vs)
    topo = build_topology([n, 1])
    params = NetworkParams(topo, np.zeros(topo.mask.shape))
    state = lif.SpikingState.rest(topo.n_neurons, k, record_spikes=True)
    current = np.zeros(topo.n_neurons)
    current[:n] = np.clip((vs - k.u_rest) / k.R, 0.0, None)
    lif.simulate(state, params, k, current, int(round(args.duration / args.dt)), args.dt, backend=args.backend)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    wr = csv.writer(out)
    wr.writerow(["v", "liffi_per_ms", "simulated_per_ms"])
    for v, sp in zip(vs, state.spikes[:n]):
        sim = (len(sp) - 1) / (sp[-1] - sp[0]) if len(sp) > 1 else 0.0
        wr.writerow([repr(float(v)), repr(float(liffi(v, k))), repr(float(sim))])
    if out is not sys.stdout:
        out.close()
    return EXIT_OK


def cmd_task_dump(args) -> int:
    if args.uniform:
        samples = task.sample_uniform(np.random.default_rng(args.seed), args.uniform)
    else:
        samples = task.grid(args.grid)
    task.write_csv(samples, args.output or "/dev/stdout")
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = cfgmod.preset(args.preset)
    if args.checkpoint:
        params, doc = load_checkpoint(args.checkpoint)
        if "config" in doc:
            cfg = cfgmod.from_ini(doc["config"])
    else:
        params = runner.initial_params(cfg)
    if cfg.model != "spiking":
        raise cfgmod.ConfigError("probe needs a spiking configuration")
    sch = replace(cfg.schedule, t_forward=args.phase or cfg.schedule.t_forward,
                  t_backward=args.phase or cfg.schedule.t_backward)
    model = runner.spiking_model(replace(cfg, schedule=sch), args.backend)
    topo = params.topology
    neuron = args.neuron if args.neuron is not None else int(topo.output_set[0])
    sample = task.make_sample(args.theta, args.phi)
    state = model.new_state(topo, record_spikes=bool(args.raster))
    _, metrics, state, trace = lif.run_trial(params, sample, model, state, probe=neuron)
    lif.write_probe(trace, args.output or "/dev/stdout")
    if args.raster:
        lif.write_raster(state, args.raster)
    log.info("probe neuron %d, subtract at %.0f ms, add at %.0f ms", neuron, metrics.t_subtract, metrics.t_add)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eqprop-lif", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--backend", choices=["python", "cython"], default=None,
                   help="kernel backend (default: compiled when available)")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a network from a preset or config file")
    t.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
    t.add_argument("--config", help="INI config file (applied on top of --preset if both given)")
    t.add_argument("--out", help="output directory")
    t.add_argument("--mkdir", action="store_true", help="create the output directory if missing")
    t.add_argument("--seed", type=int)
    t.add_argument("--n-train", type=int)
    t.add_argument("--eval-every", type=int)
    t.add_argument("--seeds", help="comma-separated seeds; runs a sweep into <out>/seed_<n>")
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("resume", help="continue training from a checkpoint")
    r.add_argument("checkpoint")
    r.add_argument("--out")
    r.set_defaults(func=cmd_resume)

    e = sub.add_parser("eval", help="evaluate a checkpoint on the k x k grid")
    e.add_argument("checkpoint")
    e.add_argument("--grid", type=int, default=16)
    e.add_argument("--preset", choices=sorted(cfgmod.PRESETS), help="config for checkpoints without one")
    e.add_argument("--predictions", help="write per-point predictions CSV")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="contrastive estimate vs brute-force gradient, JSON report")
    g.add_argument("--instances", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--layers", default="2,3,2")
    g.add_argument("--output")
    g.set_defaults(func=cmd_gradcheck)

    f = sub.add_parser("fi-curve", help="closed-form and simulated LIF rates as CSV")
    f.add_argument("--preset", default="fig3-relu", choices=sorted(cfgmod.PRESETS))
    f.add_argument("--v-min", type=float, default=20.0)
    f.add_argument("--v-max", type=float, default=60.0)
    f.add_argument("--points", type=int, default=41)
    f.add_argument("--dt", type=float, default=0.01)
    f.add_argument("--duration", type=float, default=10_000.0)
    f.add_argument("--output")
    f.set_defaults(func=cmd_fi_curve)

    d = sub.add_parser("task-dump", help="export the regression dataset as CSV")
    d.add_argument("--grid", type=int, default=16)
    d.add_argument("--uniform", type=int, help="draw this many uniform samples instead of the grid")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--output")
    d.set_defaults(func=cmd_task_dump)

    q = sub.add_parser("probe", help="trace one neuron through a spiking trial")
    q.add_argument("--preset", default="fig5-spiking", choices=sorted(cfgmod.PRESETS))
    q.add_argument("--checkpoint")
    q.add_argument("--neuron", type=int, help="neuron index (default: first output neuron)")
    q.add_argument("--theta", type=float, default=0.5)
    q.add_argument("--phi", type=float, default=0.5)
    q.add_argument("--phase", type=float, help="override both phase durations (ms)")
    q.add_argument("--raster", help="also write the spike raster CSV here")
    q.add_argument("--output")
    q.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
