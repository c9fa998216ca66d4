"""Dependency-driven job execution on a bounded thread pool.

A node starts as soon as its own dependencies are done, with no barrier
between job kinds. Finished nodes leave a digest record in the checkpoint
directory (``<dir>/<id>.done``) next to their payload files
(``<dir>/<id>.out/``); :func:`resume` trusts a node only when its record
verifies and every ancestor was trusted too, and reruns the rest.

Runners are callables ``runner(node, ctx)``. A runner may also define
``expand(node, ctx) -> list[JobNode]``; it is called after a node is done
(or restored) and the nodes it returns are appended to the live graph. This
is how a cascade's gate node grows the next layer.
"""
from __future__ import annotations

import graphlib
import hashlib
import json
import os
import shutil
import tempfile
import time
import traceback
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable


class Status(str, Enum):
    PENDING = "pending"
    READY = "ready"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"
    BLOCKED = "blocked"


KINDS = ("fold_prep", "train", "predict", "combine", "evaluate_gate")

_ALLOWED = {
    Status.PENDING: {Status.READY, Status.BLOCKED},
    Status.READY: {Status.RUNNING, Status.BLOCKED},
    Status.RUNNING: {Status.DONE, Status.FAILED},
}


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    pass


@dataclass
class JobNode:
    id: str
    kind: str
    params: dict = field(default_factory=dict)
    deps: tuple[str, ...] = ()
    status: Status = Status.PENDING

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GraphError(f"unknown job kind {self.kind!r} for node {self.id}")
        self.deps = tuple(self.deps)


class JobGraph:
    def __init__(self, nodes: Iterable[JobNode] = ()):
        self.nodes: dict[str, JobNode] = {}
        self.add(nodes)

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, node_id):
        return node_id in self.nodes

    def __getitem__(self, node_id) -> JobNode:
        return self.nodes[node_id]

    def add(self, nodes: Iterable[JobNode]) -> None:
        """Append nodes; their deps may point at existing or new nodes."""
        nodes = list(nodes)
        new_ids = set()
        for n in nodes:
            if n.id in self.nodes or n.id in new_ids:
                raise GraphError(f"duplicate node id {n.id}")
            new_ids.add(n.id)
        for n in nodes:
            for d in n.deps:
                if d not in self.nodes and d not in new_ids:
                    raise GraphError(f"node {n.id} depends on unknown node {d}")
        sorter = graphlib.TopologicalSorter()
        for n in list(self.nodes.values()) + nodes:
            sorter.add(n.id, *n.deps)
        try:
            sorter.prepare()
        except graphlib.CycleError as exc:
            raise CycleError(f"dependency cycle: {exc.args[1]}") from None
        for n in nodes:
            self.nodes[n.id] = n

    def dependents(self) -> dict[str, list[str]]:
        out = {i: [] for i in self.nodes}
        for n in self.nodes.values():
            for d in n.deps:
                out[d].append(n.id)
        return out

    def topological_order(self) -> list[str]:
        """Ready-first order that keeps insertion order among peers."""
        indeg = {i: len(n.deps) for i, n in self.nodes.items()}
        deps_of = self.dependents()
        order = []
        frontier = [i for i in self.nodes if indeg[i] == 0]
        while frontier:
            i = frontier.pop(0)
            order.append(i)
            for c in deps_of[i]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    frontier.append(c)
        return order

    def descendants(self, ids: Iterable[str]) -> set[str]:
        deps_of = self.dependents()
        seen: set[str] = set()
        stack = list(ids)
        while stack:
            for c in deps_of[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def ancestors(self, node_id: str) -> set[str]:
        seen: set[str] = set()
        stack = [node_id]
        while stack:
            for d in self.nodes[stack.pop()].deps:
                if d not in seen:
                    seen.add(d)
                    stack.append(d)
        return seen


def layer_node_ids(layer: int) -> dict:
    p = f"L{layer}"
    return {
        "prep": lambda f: f"{p}.prep.f{f}",
        "train": lambda j, f: f"{p}.train.j{j}.f{f}",
        "predict": lambda j, f: f"{p}.predict.j{j}.f{f}",
        "combine": f"{p}.combine",
        "gate": f"{p}.gate",
    }


def build_layer_graph(layer_index: int, k: int, l: int, upstream: str | None = None) -> JobGraph:
    """Sub-jobs of one cascade layer: per-fold preparation, K*L trainings and
    predictions, one combine and one gate. ``upstream`` (the previous gate)
    becomes a dependency of every preparation node; it must already exist
    in whatever graph the nodes are added to."""
    if k < 2:
        raise GraphError(f"k must be >= 2, got {k}")
    if l < 1:
        raise GraphError(f"l must be >= 1, got {l}")
    ids = layer_node_ids(layer_index)
    nodes = []
    for f in range(k):
        nodes.append(JobNode(ids["prep"](f), "fold_prep", {"layer": layer_index, "fold": f},
                             (upstream,) if upstream else ()))
    for j in range(l):
        for f in range(k):
            nodes.append(JobNode(ids["train"](j, f), "train",
                                 {"layer": layer_index, "learner": j, "fold": f},
                                 (ids["prep"](f),)))
    for j in range(l):
        for f in range(k):
            nodes.append(JobNode(ids["predict"](j, f), "predict",
                                 {"layer": layer_index, "learner": j, "fold": f},
                                 (ids["train"](j, f),)))
    predicts = tuple(n.id for n in nodes if n.kind == "predict")
    nodes.append(JobNode(ids["combine"], "combine", {"layer": layer_index}, predicts))
    nodes.append(JobNode(ids["gate"], "evaluate_gate", {"layer": layer_index},
                         (ids["combine"],)))
    if upstream:
        graph = JobGraph()
        graph.nodes = {n.id: n for n in nodes}
        return graph
    return JobGraph(nodes)


class Checkpoint:
    """Completion records plus payload directories, one pair per node."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def out_dir(self, node_id: str) -> Path:
        return self.directory / f"{node_id}.out"

    def record_path(self, node_id: str) -> Path:
        return self.directory / f"{node_id}.done"

    def digest(self, node_id: str) -> str:
        h = hashlib.sha256()
        root = self.out_dir(node_id)
        if root.is_dir():
            for path in sorted(p for p in root.rglob("*") if p.is_file()):
                rel = path.relative_to(root).as_posix().encode()
                h.update(len(rel).to_bytes(8, "little"))
                h.update(rel)
                data = path.read_bytes()
                h.update(len(data).to_bytes(8, "little"))
                h.update(data)
        return h.hexdigest()

    def prepare(self, node_id: str) -> Path:
        """Drop any stale record/payload and return an empty payload dir."""
        self.record_path(node_id).unlink(missing_ok=True)
        out = self.out_dir(node_id)
        if out.exists():
            shutil.rmtree(out)
        out.mkdir(parents=True)
        return out

    def commit(self, node_id: str) -> str:
        digest = self.digest(node_id)
        record = json.dumps({"id": node_id, "digest": digest}, sort_keys=True)
        tmp = self.record_path(node_id).with_suffix(".done.tmp")
        tmp.write_text(record + "\n")
        os.replace(tmp, self.record_path(node_id))
        return digest

    def is_done(self, node_id: str) -> bool:
        path = self.record_path(node_id)
        if not path.is_file():
            return False
        try:
            record = json.loads(path.read_text())
        except (OSError, ValueError):
            return False
        return record.get("id") == node_id and record.get("digest") == self.digest(node_id)


@dataclass(frozen=True)
class JobContext:
    node: JobNode
    checkpoint: Checkpoint

    @property
    def out_dir(self) -> Path:
        return self.checkpoint.out_dir(self.node.id)

    def input_dir(self, node_id: str) -> Path:
        return self.checkpoint.out_dir(node_id)


@dataclass
class Event:
    timestamp: float
    node: str
    old: Status
    new: Status

    def line(self) -> str:
        return f"{self.timestamp:.6f},{self.node},{self.old.value},{self.new.value}"


@dataclass
class RunReport:
    status: dict[str, Status]
    events: list[Event]
    executed: list[str]
    restored: list[str]
    errors: dict[str, str]

    @property
    def ok(self) -> bool:
        return all(s is Status.DONE for s in self.status.values())

    def event_lines(self) -> list[str]:
        return [e.line() for e in self.events]


class _Run:
    def __init__(self, graph: JobGraph, pool_size: int, checkpoint: Checkpoint, runner,
                 event_log):
        if pool_size < 1:
            raise ValueError(f"pool_size must be >= 1, got {pool_size}")
        self.graph = graph
        self.pool_size = pool_size
        self.checkpoint = checkpoint
        self.runner = runner
        self.expand = getattr(runner, "expand", None)
        self.event_log = event_log
        self.events: list[Event] = []
        self.executed: list[str] = []
        self.restored: list[str] = []
        self.errors: dict[str, str] = {}
        for n in graph.nodes.values():
            n.status = Status.PENDING

    def _move(self, node: JobNode, new: Status):
        if new not in _ALLOWED.get(node.status, ()):
            raise RuntimeError(f"illegal transition {node.status.value}->{new.value} for {node.id}")
        event = Event(time.monotonic(), node.id, node.status, new)
        node.status = new
        self.events.append(event)
        if self.event_log is not None:
            self.event_log.write(event.line() + "\n")

    def _grow(self, node: JobNode):
        if self.expand is None:
            return []
        new = list(self.expand(node, JobContext(node, self.checkpoint)) or [])
        for n in new:
            n.status = Status.PENDING
        self.graph.add(new)
        return new

    def restore(self):
        """Mark verified nodes done, ancestors first; expansions included."""
        examined: set[str] = set()
        trusted: set[str] = set()
        changed = True
        while changed:
            changed = False
            for node_id in self.graph.topological_order():
                if node_id in examined:
                    continue
                node = self.graph[node_id]
                if any(d not in examined for d in node.deps):
                    continue
                examined.add(node_id)
                changed = True
                if all(d in trusted for d in node.deps) and self.checkpoint.is_done(node_id):
                    trusted.add(node_id)
                    node.status = Status.DONE
                    self.restored.append(node_id)
                    if self._grow(node):
                        break

    def _promote(self, candidates, ready: list[str]):
        for node_id in candidates:
            node = self.graph[node_id]
            if node.status is Status.PENDING and all(
                    self.graph[d].status is Status.DONE for d in node.deps):
                self._move(node, Status.READY)
                ready.append(node_id)

    def _block_descendants(self, node_id: str):
        for d in sorted(self.graph.descendants([node_id]),
                        key=list(self.graph.nodes).index):
            node = self.graph[d]
            if node.status in (Status.PENDING, Status.READY):
                self._move(node, Status.BLOCKED)

    def run(self) -> RunReport:
        ready: list[str] = []
        self._promote(list(self.graph.nodes), ready)
        running = {}
        with ThreadPoolExecutor(max_workers=self.pool_size) as pool:
            while ready or running:
                while ready and len(running) < self.pool_size:
                    node = self.graph[ready.pop(0)]
                    self.checkpoint.prepare(node.id)
                    self._move(node, Status.RUNNING)
                    self.executed.append(node.id)
                    ctx = JobContext(node, self.checkpoint)
                    running[pool.submit(self.runner, node, ctx)] = node.id
                finished, _ = wait(list(running), return_when=FIRST_COMPLETED)
                for fut in sorted(finished, key=lambda f: self.executed.index(running[f])):
                    node = self.graph[running.pop(fut)]
                    exc = fut.exception()
                    if exc is None:
                        try:
                            self.checkpoint.commit(node.id)
                        except OSError as err:
                            exc = err
                    if exc is not None:
                        self.errors[node.id] = "".join(
                            traceback.format_exception_only(type(exc), exc)).strip()
                        self._move(node, Status.FAILED)
                        self._block_descendants(node.id)
                        continue
                    self._move(node, Status.DONE)
                    try:
                        new = self._grow(node)
                    except Exception as err:  # a broken expansion fails the node's subtree
                        self.errors[node.id] = f"expand: {err!r}"
                        continue
                    deps_of = self.graph.dependents()
                    self._promote(deps_of[node.id] + [n.id for n in new], ready)
        status = {i: n.status for i, n in self.graph.nodes.items()}
        return RunReport(status, self.events, self.executed, self.restored, self.errors)


def _run(graph, pool_size, checkpoint, runner, restore, event_log_path):
    tmp = None
    if checkpoint is None:
        tmp = tempfile.TemporaryDirectory(prefix="dag-ckpt-")
        checkpoint = Checkpoint(tmp.name)
    elif not isinstance(checkpoint, Checkpoint):
        checkpoint = Checkpoint(checkpoint)
    checkpoint.directory.mkdir(parents=True, exist_ok=True)
    log = open(event_log_path, "a") if event_log_path else None
    try:
        run = _Run(graph, pool_size, checkpoint, runner, log)
        if restore:
            run.restore()
        return run.run()
    finally:
        if log is not None:
            log.close()
        if tmp is not None:
            tmp.cleanup()


def execute(graph: JobGraph, pool_size: int, checkpoint, runner: Callable,
            event_log=None) -> RunReport:
    """Run every node of ``graph`` from scratch."""
    return _run(graph, pool_size, checkpoint, runner, False, event_log)


def resume(graph: JobGraph, checkpoint, pool_size: int, runner: Callable,
           event_log=None) -> RunReport:
    """Run ``graph`` reusing every node whose checkpoint record verifies.

    A missing checkpoint directory simply means a full run.
    """
    return _run(graph, pool_size, checkpoint, runner, True, event_log)
