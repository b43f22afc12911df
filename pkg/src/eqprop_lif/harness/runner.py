"""Training runs: metrics CSV, weight checkpoints, resume and seed sweeps."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import lif, task
from ..core import STREAM_INIT, STREAM_TRAIN, NetworkParams, RngSpec, build_topology, init_weights, load_checkpoint, save_checkpoint
from ..energy import DivergenceError
from ..eqprop_rate import evaluate, train_step
from .config import ExperimentConfig, from_ini, to_ini

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DIVERGENCE, EXIT_THRESHOLD = 0, 1, 2, 3
METRIC_COLUMNS = ["sample_index", "phase_residual_fwd", "train_error", "eval_error"]


@dataclass
class MetricsRecord:
    sample_index: int
    train_error: float | None = None
    eval_error: float | None = None
    forward_residual: float | None = None
    wall_ms: float | None = None

    def row(self) -> list[str]:
        def f(v):
            return "" if v is None else repr(float(v))
        return [str(self.sample_index), f(self.forward_residual), f(self.train_error), f(self.eval_error)]


@dataclass
class RunResult:
    output_dir: Path
    params: NetworkParams
    eval_history: list[tuple[int, float]]

    @property
    def initial_error(self) -> float:
        return self.eval_history[0][1]

    @property
    def final_error(self) -> float:
        return self.eval_history[-1][1]


def initial_params(cfg: ExperimentConfig) -> NetworkParams:
    topo = build_topology(cfg.layer_sizes, bias=cfg.bias)
    return init_weights(topo, RngSpec(cfg.seed, STREAM_INIT), cfg.init_scale)


def spiking_model(cfg: ExperimentConfig, backend: str | None = None) -> lif.SpikingModel:
    return lif.SpikingModel(cfg.constants, cfg.code, cfg.schedule, cfg.learning,
                            bias_current=cfg.bias_value, carry_traces=cfg.carry_traces, backend=backend)


def evaluate_params(cfg: ExperimentConfig, params: NetworkParams, k: int | None = None,
                    backend: str | None = None) -> float:
    grid = task.grid(k or cfg.eval_grid_k)
    if cfg.model == "rate":
        return evaluate(params, grid, cfg.schedule, cfg.activation_fn(), bias_value=cfg.bias_value, backend=backend)
    return lif.evaluate_spiking(params, grid, spiking_model(cfg, backend))


def predictions(cfg: ExperimentConfig, params: NetworkParams, samples, backend: str | None = None) -> np.ndarray:
    from ..eqprop_rate import predict
    if cfg.model == "rate":
        return predict(params, samples, cfg.schedule, cfg.activation_fn(), bias_value=cfg.bias_value, backend=backend)
    return lif.predict_spiking(params, samples, spiking_model(cfg, backend))


class _Trainer:
    def __init__(self, cfg: ExperimentConfig, out: Path, backend: str | None):
        self.cfg = cfg
        self.out = out
        self.backend = backend
        self.act = cfg.activation_fn()
        self.model = spiking_model(cfg, backend) if cfg.model == "spiking" else None

    def evaluate(self, params, k: int) -> float:
        try:
            return evaluate_params(self.cfg, params, backend=self.backend)
        except DivergenceError as exc:
            log.error("divergence while evaluating after sample %d: %s", k, exc)
            raise

    def checkpoint(self, path: Path, params, k, rng, sstate):
        extra = {"config": to_ini(self.cfg), "sample_index": k, "rng_state": rng.bit_generator.state}
        if sstate is not None and self.cfg.carry_traces:
            extra["spiking_state"] = sstate.to_dict()
        save_checkpoint(path, params, extra)

    def train(self, params, rng, start: int, sstate=None, write_initial=True) -> RunResult:
        cfg, out = self.cfg, self.out
        ckdir = out / "checkpoints"
        ckdir.mkdir(exist_ok=True)
        metrics_path = out / "metrics.csv"
        history = []
        if write_initial:
            fh = open(metrics_path, "w", newline="")
            wr = csv.writer(fh)
            wr.writerow(METRIC_COLUMNS)
            e0 = self.evaluate(params, 0)
            history.append((0, e0))
            wr.writerow(MetricsRecord(0, eval_error=e0).row())
            self.checkpoint(ckdir / f"ckpt_{0:06d}.json", params, 0, rng, sstate)
        else:
            fh = open(metrics_path, "a", newline="")
            wr = csv.writer(fh)
        timing = open(out / "timing.csv", "a" if not write_initial else "w") if cfg.record_wall_time else None
        if self.model is not None and sstate is None:
            sstate = self.model.new_state(params.topology)
        try:
            for k in range(start + 1, cfg.n_train_samples + 1):
                t0 = time.perf_counter()
                sample = task.sample_uniform(rng, 1)[0]
                try:
                    if self.model is None:
                        params, m = train_step(params, sample, cfg.schedule, self.act, cfg.learning, cfg.update_mode,
                                               sample_index=k, bias_value=cfg.bias_value, backend=self.backend)
                        rec = MetricsRecord(k, m.train_error, forward_residual=m.forward_residual)
                    else:
                        params, tm, sstate, _ = lif.run_trial(params, sample, self.model, sstate)
                        rec = MetricsRecord(k, tm.train_error)
                except DivergenceError as exc:
                    log.error("divergence at sample %d: %s", k, exc)
                    raise
                at_eval = k % cfg.eval_every == 0 or k == cfg.n_train_samples
                if at_eval:
                    rec.eval_error = self.evaluate(params, k)
                    history.append((k, rec.eval_error))
                    log.info("sample %d: eval error %.4f", k, rec.eval_error)
                rec.wall_ms = 1000 * (time.perf_counter() - t0)
                wr.writerow(rec.row())
                fh.flush()
                if timing is not None:
                    timing.write(f"{k},{rec.wall_ms:.3f}\n")
                if at_eval:
                    self.checkpoint(ckdir / f"ckpt_{k:06d}.json", params, k, rng, sstate)
        finally:
            fh.close()
            if timing is not None:
                timing.close()
        self.checkpoint(out / "checkpoint.json", params, cfg.n_train_samples, rng, sstate)
        return RunResult(out, params, history)


def _output_dir(path) -> Path:
    out = Path(path)
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} does not exist")
    return out


def execute(cfg: ExperimentConfig, backend: str | None = None) -> RunResult:
    """Train from scratch according to ``cfg``; raises on I/O errors or divergence."""
    out = _output_dir(cfg.output_dir)
    (out / "config.ini").write_text(to_ini(cfg))
    params = initial_params(cfg)
    rng = RngSpec(cfg.seed, STREAM_TRAIN).generator()
    return _Trainer(cfg, out, backend).train(params, rng, 0)


def execute_resume(checkpoint: str | Path, output_dir: str | Path | None = None,
                   backend: str | None = None) -> RunResult:
    """Continue a run from a checkpoint written by :func:`execute`.

    Rows of an existing ``metrics.csv`` past the checkpoint are dropped first,
    so the log matches an uninterrupted run.
    """
    checkpoint = Path(checkpoint)
    params, doc = load_checkpoint(checkpoint)
    cfg = from_ini(doc["config"])
    out = _output_dir(output_dir if output_dir is not None else cfg.output_dir)
    cfg = replace(cfg, output_dir=str(out))
    k = int(doc["sample_index"])
    rng = RngSpec(cfg.seed, STREAM_TRAIN).generator()
    rng.bit_generator.state = doc["rng_state"]
    sstate = lif.SpikingState.from_dict(doc["spiking_state"]) if "spiking_state" in doc else None

    metrics_path = out / "metrics.csv"
    if metrics_path.exists():
        with open(metrics_path, newline="") as fh:
            rows = list(csv.reader(fh))
        rows = [rows[0]] + [r for r in rows[1:] if int(r[0]) <= k]
    else:
        rows = [METRIC_COLUMNS]
    with open(metrics_path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    (out / "config.ini").write_text(to_ini(cfg))
    return _Trainer(cfg, out, backend).train(params, rng, k, sstate, write_initial=False)


def run(cfg: ExperimentConfig, backend: str | None = None) -> int:
    try:
        execute(cfg, backend)
    except DivergenceError:
        return EXIT_DIVERGENCE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    return EXIT_OK


def resume(checkpoint: str | Path, output_dir: str | Path | None = None, backend: str | None = None) -> int:
    try:
        execute_resume(checkpoint, output_dir, backend)
    except DivergenceError:
        return EXIT_DIVERGENCE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    return EXIT_OK


def _sweep_one(args):
    cfg, backend = args
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    return cfg.seed, run(cfg, backend)


def sweep(cfg: ExperimentConfig, seeds, workers: int = 1, backend: str | None = None) -> dict[int, int]:
    """Independent runs per seed, each in ``<output_dir>/seed_<n>``."""
    base = _output_dir(cfg.output_dir)
    jobs = [(replace(cfg, seed=s, output_dir=str(base / f"seed_{s}")), backend) for s in seeds]
    if workers <= 1:
        return dict(map(_sweep_one, jobs))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return dict(pool.map(_sweep_one, jobs))
