"""
Core value types for the diffusion model: networks, latent states and
observation matrices, plus their JSON/CSV representations.

Node indices are 0-based in memory and 1-based in every file format.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NO_PARENT = -1

REAL = "real"
COUNT = "count"


class ModelError(ValueError):
    """Raised when inputs fall outside the domain of an operation."""


@dataclass(frozen=True, eq=False)
class Network:
    """Candidate-parent structure and Gamma hyperparameters.

    ``hyper_a[i, j]`` and ``hyper_b[i, j]`` hold the shape and scale of the
    prior on the strength of link j -> i; entries for j outside the
    candidate set of i are NaN.
    """

    n_nodes: int
    candidate_parents: tuple[tuple[int, ...], ...]
    sources: tuple[int, ...]
    hyper_a: np.ndarray
    hyper_b: np.ndarray
    source_times: tuple[int, ...] = ()
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "candidate_parents",
                           tuple(tuple(int(j) for j in p) for p in self.candidate_parents))
        object.__setattr__(self, "sources", tuple(sorted(int(s) for s in self.sources)))
        times = tuple(int(x) for x in self.source_times) or (1,) * len(self.sources)
        object.__setattr__(self, "source_times", times)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        object.__setattr__(self, "hyper_a", np.asarray(self.hyper_a, dtype=float))
        object.__setattr__(self, "hyper_b", np.asarray(self.hyper_b, dtype=float))

    @property
    def non_sources(self) -> list[int]:
        src = set(self.sources)
        return [i for i in range(self.n_nodes) if i not in src]

    def is_source(self, i: int) -> bool:
        return i in self.sources

    def source_time(self, s: int) -> int:
        return self.source_times[self.sources.index(s)]

    def edges(self):
        """Yield every candidate link as (child, parent)."""
        for i, parents in enumerate(self.candidate_parents):
            for j in parents:
                yield i, j

    def mask(self) -> np.ndarray:
        m = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for i, j in self.edges():
            m[i, j] = True
        return m

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels else str(i + 1)

    def subnetwork(self, keep) -> "Network":
        """Restrict to the nodes in ``keep`` (sorted), renumbering them."""
        keep = sorted(int(k) for k in keep)
        index = {old: new for new, old in enumerate(keep)}
        parents = [tuple(index[j] for j in self.candidate_parents[i] if j in index) for i in keep]
        sources = [index[s] for s in self.sources if s in index]
        times = [self.source_time(s) for s in self.sources if s in index]
        ix = np.ix_(keep, keep)
        return Network(
            n_nodes=len(keep),
            candidate_parents=parents,
            sources=sources,
            hyper_a=self.hyper_a[ix],
            hyper_b=self.hyper_b[ix],
            source_times=times,
            labels=[self.labels[k] for k in keep] if self.labels else [str(k + 1) for k in keep],
        )

    def to_dict(self) -> dict:
        nodes = []
        for i, parents in enumerate(self.candidate_parents):
            nodes.append({
                "id": i + 1,
                "parents": [j + 1 for j in parents],
                "a": [float(self.hyper_a[i, j]) for j in parents],
                "b": [float(self.hyper_b[i, j]) for j in parents],
            })
        out = {
            "n_nodes": self.n_nodes,
            "sources": [s + 1 for s in self.sources],
            "source_times": list(self.source_times),
            "nodes": nodes,
        }
        if self.labels:
            out["labels"] = list(self.labels)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        n = int(data["n_nodes"])
        a = np.full((n, n), np.nan)
        b = np.full((n, n), np.nan)
        parents: list[tuple[int, ...]] = [()] * n
        for node in data["nodes"]:
            i = int(node["id"]) - 1
            ps = [int(j) - 1 for j in node["parents"]]
            parents[i] = tuple(ps)
            for j, aij, bij in zip(ps, node["a"], node["b"]):
                a[i, j] = aij
                b[i, j] = bij
        return cls(
            n_nodes=n,
            candidate_parents=parents,
            sources=[int(s) - 1 for s in data["sources"]],
            hyper_a=a,
            hyper_b=b,
            source_times=data.get("source_times", ()),
            labels=data.get("labels", ()),
        )


def validate_network(net: Network) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    n = net.n_nodes
    if n < 2:
        problems.append(f"network needs at least 2 nodes, got {n}")
    if len(net.candidate_parents) != n:
        problems.append("candidate_parents length differs from n_nodes")
        return problems
    if not net.sources:
        problems.append("no source node")
    if len(net.source_times) != len(net.sources):
        problems.append("source_times length differs from sources")
    if net.hyper_a.shape != (n, n) or net.hyper_b.shape != (n, n):
        problems.append("hyperparameter matrices must be N x N")
        return problems
    for s in net.sources:
        if not 0 <= s < n:
            problems.append(f"source {s + 1} out of range")
    for i, parents in enumerate(net.candidate_parents):
        src = i in net.sources
        if src and parents:
            problems.append(f"source {i + 1} has candidate parents")
        if not src and not parents:
            problems.append(f"empty candidate set at {i + 1}")
        if len(set(parents)) != len(parents):
            problems.append(f"duplicate candidate at {i + 1}")
        for j in parents:
            if j == i:
                problems.append(f"self-parent at {i + 1}")
            elif not 0 <= j < n:
                problems.append(f"candidate {j + 1} of node {i + 1} out of range")
        cand = set(parents)
        for j in range(n):
            a, b = net.hyper_a[i, j], net.hyper_b[i, j]
            if j in cand and j != i:
                if not (math.isfinite(a) and a > 0):
                    problems.append(f"nonpositive shape at ({i + 1},{j + 1})")
                if not (math.isfinite(b) and b > 0):
                    problems.append(f"nonpositive scale at ({i + 1},{j + 1})")
            elif not (math.isnan(a) and math.isnan(b)):
                problems.append(f"hyperparameter set for non-candidate ({i + 1},{j + 1})")
    return problems


@dataclass(frozen=True, eq=False)
class LatentState:
    """One joint configuration: parents ``z``, infection times ``t``, strengths ``alpha``.

    ``z[i]`` is ``NO_PARENT`` for sources; ``alpha`` is a dense N x N matrix that
    is zero outside the candidate sets.
    """

    z: np.ndarray
    t: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=np.int64))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.int64))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))

    @property
    def n_nodes(self) -> int:
        return len(self.t)

    def children(self, i: int) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.z == i)]

    def to_dict(self, net: Network) -> dict:
        return {
            "z": [int(p) + 1 if p >= 0 else None for p in self.z],
            "t": [int(x) for x in self.t],
            "alpha": [[i + 1, j + 1, float(self.alpha[i, j])] for i, j in net.edges()],
        }

    @classmethod
    def from_dict(cls, data: dict, n_nodes: int | None = None) -> "LatentState":
        n = n_nodes or len(data["t"])
        alpha = np.zeros((n, n))
        for i, j, v in data.get("alpha", []):
            alpha[int(i) - 1, int(j) - 1] = v
        z = [int(p) - 1 if p is not None else NO_PARENT for p in data["z"]]
        return cls(z=z, t=data["t"], alpha=alpha)

    def same_as(self, other: "LatentState") -> bool:
        return (np.array_equal(self.z, other.z) and np.array_equal(self.t, other.t)
                and np.array_equal(self.alpha, other.alpha))


def state_violations(state: LatentState, net: Network, horizon: int | None = None) -> list[str]:
    """Check parent membership, strict time ordering and positivity of strengths."""
    problems = []
    for i in range(net.n_nodes):
        ti = int(state.t[i])
        if horizon is not None and not 1 <= ti <= horizon:
            problems.append(f"time of {i + 1} outside [1, {horizon}]")
        if net.is_source(i):
            if state.z[i] != NO_PARENT:
                problems.append(f"source {i + 1} has a parent")
            continue
        p = int(state.z[i])
        if p not in net.candidate_parents[i]:
            problems.append(f"parent of {i + 1} not a candidate")
        elif state.t[p] >= ti:
            problems.append(f"time order broken on {p + 1}->{i + 1}")
    for i, j in net.edges():
        if not state.alpha[i, j] > 0:
            problems.append(f"nonpositive strength at ({i + 1},{j + 1})")
    return problems


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """N observed series of common length T."""

    data: np.ndarray
    kind: str = REAL
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float)
        if arr.ndim != 2:
            raise ModelError("observation data must be a 2-D array (nodes x steps)")
        if arr.shape[1] < 2:
            raise ModelError("series must have length T >= 2")
        if self.kind not in (REAL, COUNT):
            raise ModelError(f"unknown observation kind {self.kind!r}")
        if self.kind == COUNT and (np.any(arr < 0) or np.any(arr != np.round(arr))):
            raise ModelError("count-valued observations must be nonnegative integers")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_nodes(self) -> int:
        return self.data.shape[0]

    @property
    def horizon(self) -> int:
        return self.data.shape[1]

    def subset(self, keep) -> "ObservationMatrix":
        keep = sorted(keep)
        labels = [self.labels[k] for k in keep] if self.labels else ()
        return ObservationMatrix(self.data[keep], self.kind, labels)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "step", "value"])
        for i in range(self.n_nodes):
            for n in range(self.horizon):
                v = self.data[i, n]
                w.writerow([i + 1, n + 1, int(v) if self.kind == COUNT else repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, kind: str | None = None) -> "ObservationMatrix":
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and set(rows[0]) != {"node", "step", "value"}:
            raise ModelError("observations CSV needs header node,step,value")
        if not rows:
            raise ModelError("observations CSV has no rows")
        nodes = [int(r["node"]) for r in rows]
        steps = [int(r["step"]) for r in rows]
        n, T = max(nodes), max(steps)
        if len(rows) != n * T:
            raise ModelError(f"expected {n * T} rows for {n} nodes x {T} steps, got {len(rows)}")
        data = np.full((n, T), np.nan)
        for i, s, r in zip(nodes, steps, rows):
            data[i - 1, s - 1] = float(r["value"])
        if np.isnan(data).any():
            raise ModelError("observations CSV has missing (node, step) cells")
        if kind is None:
            kind = COUNT if all("." not in r["value"] and "e" not in r["value"].lower()
                                for r in rows) else REAL
        return cls(data, kind)


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_network(path) -> Network:
    try:
        return Network.from_dict(read_json(path))
    except KeyError as exc:
        raise ModelError(f"{path}: missing field {exc}") from None


def save_network(path, net: Network) -> None:
    write_json(path, net.to_dict())


def load_observations(path, kind: str | None = None) -> ObservationMatrix:
    return ObservationMatrix.from_csv(Path(path).read_text(), kind)


def save_observations(path, obs: ObservationMatrix) -> None:
    Path(path).write_text(obs.to_csv())
