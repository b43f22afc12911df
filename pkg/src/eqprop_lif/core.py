"""Network topology, parameters, seeded RNG streams and weight checkpoints.

Neurons are numbered layer by layer (input, hidden..., output), followed by
an optional bias unit.  ``w[i, j]`` is the weight from presynaptic neuron
``j`` onto postsynaptic neuron ``i``; row ``i`` of the mask therefore lists
the inputs of neuron ``i`` and its length is the neuron's indegree.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class TopologyError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    layer_sizes: tuple[int, ...]
    mask: np.ndarray
    bias_units: frozenset[int]
    input_set: np.ndarray
    output_set: np.ndarray
    has_bias: bool = False
    # CSR view of the mask, consumed by the compiled kernels
    indptr: np.ndarray = field(repr=False, default=None)
    indices: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        counts = mask.sum(axis=1)
        indptr = np.zeros(mask.shape[0] + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.nonzero(mask)[1].astype(np.int64)
        for arr in (indptr, indices):
            arr.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)

    @property
    def n_neurons(self) -> int:
        return self.mask.shape[0]

    @property
    def indegree(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    @property
    def bias_index(self) -> int | None:
        return next(iter(self.bias_units)) if self.bias_units else None

    def layer_slices(self) -> list[slice]:
        out, start = [], 0
        for n in self.layer_sizes:
            out.append(slice(start, start + n))
            start += n
        return out

    def hidden_set(self) -> np.ndarray:
        sl = self.layer_slices()[1:-1]
        if not sl:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.arange(s.start, s.stop) for s in sl])

    def kinds(self) -> np.ndarray:
        """0 for ordinary neurons, 1 for input neurons, 2 for bias units."""
        k = np.zeros(self.n_neurons, dtype=np.int8)
        k[self.input_set] = 1
        for b in self.bias_units:
            k[b] = 2
        return k

    def mask_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.mask.shape, dtype=np.int64).tobytes())
        h.update(np.packbits(self.mask).tobytes())
        return h.hexdigest()


def build_topology(layer_sizes: Sequence[int], bias: bool = False) -> NetworkTopology:
    """Layered network: input -> first hidden feedforward, every later pair of
    adjacent layers connected all-to-all in both directions.

    The bias unit (if any) projects onto all hidden and output neurons.
    """
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2:
        raise TopologyError("need at least an input and an output layer")
    if any(n < 1 for n in sizes):
        raise TopologyError(f"all layer sizes must be >= 1, got {list(sizes)}")

    n_core = sum(sizes)
    n = n_core + (1 if bias else 0)
    mask = np.zeros((n, n), dtype=bool)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    sl = [slice(starts[k], starts[k + 1]) for k in range(len(sizes))]

    mask[sl[1], sl[0]] = True
    for k in range(1, len(sizes) - 1):
        mask[sl[k + 1], sl[k]] = True
        mask[sl[k], sl[k + 1]] = True
    if bias:
        mask[sizes[0]:n_core, n_core] = True

    return NetworkTopology(
        layer_sizes=sizes,
        mask=mask,
        bias_units=frozenset({n_core} if bias else ()),
        input_set=np.arange(sl[0].start, sl[0].stop),
        output_set=np.arange(sl[-1].start, sl[-1].stop),
        has_bias=bias,
    )


@dataclass(eq=False)
class NetworkParams:
    topology: NetworkTopology
    w: np.ndarray

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        if self.w.shape != self.topology.mask.shape:
            raise ValueError(f"weight shape {self.w.shape} does not match topology {self.topology.mask.shape}")

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.topology, self.w.copy())

    def respects_mask(self) -> bool:
        return not np.any(self.w[~self.topology.mask])


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))


# named streams so that adding a consumer never shifts another one
STREAM_INIT = 0
STREAM_TRAIN = 1


def init_weights(topology: NetworkTopology, rng: np.random.Generator | RngSpec, scale: float = 0.1) -> NetworkParams:
    """Uniform weights in [-scale/sqrt(indegree_i), scale/sqrt(indegree_i)] on allowed entries."""
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    if isinstance(rng, RngSpec):
        rng = rng.generator()
    n = topology.n_neurons
    indeg = topology.indegree
    half = scale / np.sqrt(np.maximum(indeg, 1))
    w = rng.uniform(-1.0, 1.0, size=(n, n)) * half[:, None]
    w[~topology.mask] = 0.0
    return NetworkParams(topology, w)


def save_checkpoint(path: str | Path, params: NetworkParams, extra: dict | None = None) -> None:
    topo = params.topology
    doc = {
        "layer_sizes": list(topo.layer_sizes),
        "weights": params.w.tolist(),
        "mask_hash": topo.mask_hash(),
        "bias": topo.has_bias,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> tuple[NetworkParams, dict]:
    doc = json.loads(Path(path).read_text())
    topo = build_topology(doc["layer_sizes"], bias=doc.get("bias", False))
    if topo.mask_hash() != doc["mask_hash"]:
        raise ValueError(f"{path}: mask hash mismatch, checkpoint does not belong to this topology")
    params = NetworkParams(topo, np.array(doc["weights"], dtype=np.float64))
    if not params.respects_mask():
        raise ValueError(f"{path}: weights outside the connectivity mask")
    return params, doc
