"""Built-in task shapes.

The three generators cover the shapes used in the experiments: a linear
image-processing pipeline, a fork-join remote-sensing task (complexity 100)
and a wider fork-join fire-detection task (complexity 200). Node counts,
complexity and scaling are parameters: the shapes are representative stand-ins,
not reproductions of any specific instance.
"""

from __future__ import annotations

from swarmoffload.taskmap import Subtask, TaskDag

DEFAULT_STATE_TYPES = ("capture", "preprocess", "compress", "transmit")


def _cycle_types(state_types, count):
    return [state_types[i % len(state_types)] for i in range(count)]


def image_pipeline(
    input_bits: float = 1e6,
    complexity: float = 100.0,
    scaling: float = 0.8,
    stages: int = 4,
    state_types: tuple[str, ...] = DEFAULT_STATE_TYPES,
) -> TaskDag:
    """Linear chain of processing stages."""
    if stages < 1:
        raise ValueError("stages must be >= 1")
    types = _cycle_types(state_types, stages)
    subtasks = tuple(
        Subtask(f"stage{i + 1}", types[i], complexity, scaling) for i in range(stages)
    )
    edges = tuple((i, i + 1) for i in range(stages - 1))
    return TaskDag(subtasks, edges, input_bits)


def _fork_join(name, input_bits, complexity, scaling, branches, state_types):
    if branches < 1:
        raise ValueError("branches must be >= 1")
    types = _cycle_types(state_types, branches + 3)
    subtasks = [Subtask(f"{name}_in", types[0], complexity, scaling)]
    for b in range(branches):
        subtasks.append(Subtask(f"{name}_branch{b + 1}", types[1 + b], complexity, scaling))
    subtasks.append(Subtask(f"{name}_merge", types[branches + 1], complexity, scaling))
    subtasks.append(Subtask(f"{name}_out", types[branches + 2], complexity, scaling))
    edges = []
    merge = branches + 1
    for b in range(1, branches + 1):
        edges.append((0, b))
        edges.append((b, merge))
    edges.append((merge, merge + 1))
    return TaskDag(tuple(subtasks), tuple(edges), input_bits)


def remote_sensing(
    input_bits: float = 1e6,
    complexity: float = 100.0,
    scaling: float = 0.8,
    branches: int = 2,
    state_types: tuple[str, ...] = DEFAULT_STATE_TYPES,
) -> TaskDag:
    """Fork-join shape: split, parallel analysis branches, fuse, deliver."""
    return _fork_join("sense", input_bits, complexity, scaling, branches, state_types)


def fire_detection(
    input_bits: float = 1e6,
    complexity: float = 200.0,
    scaling: float = 0.8,
    branches: int = 3,
    state_types: tuple[str, ...] = DEFAULT_STATE_TYPES,
) -> TaskDag:
    """Wider fork-join with heavier per-bit computation."""
    return _fork_join("fire", input_bits, complexity, scaling, branches, state_types)


GENERATORS = {
    "image_pipeline": image_pipeline,
    "remote_sensing": remote_sensing,
    "fire_detection": fire_detection,
}
