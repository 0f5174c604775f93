import math

import pytest
from hypothesis import settings

from sgloop.graph import InstanceVertex, Kind, SceneGraph

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def obj(vid, label, xyz, bbox=(0.5, 0.5, 0.5), points=200, confidence=0.9):
    return InstanceVertex(vid, label, Kind.OBJECT, xyz, bbox, None, confidence, points)


def wall(vid, xyz, normal, bbox=(3.0, 0.1, 2.5)):
    n = math.sqrt(sum(c * c for c in normal))
    return InstanceVertex(vid, "wall", Kind.WALL, xyz, bbox, tuple(c / n for c in normal), 0.9, 5000)


def floor(vid=0, xyz=(0.0, 0.0, 0.0), bbox=(10.0, 10.0, 0.05)):
    return InstanceVertex(vid, "floor", Kind.FLOOR, xyz, bbox, (0.0, 0.0, 1.0), 0.9, 10000)


def graph_of(vertices, edges, session_id="session", revision=0):
    return SceneGraph.from_vertices(vertices, session_id=session_id, revision=revision, edges=edges)


@pytest.fixture
def star():
    # table at the center, chair and lamp around it, and a floor under everything
    return graph_of(
        [floor(0), obj(1, "table", (0, 0, 0.4)), obj(2, "chair", (1, 0, 0.4)), obj(3, "lamp", (0, 1, 0.4))],
        [(1, 2), (1, 3), (0, 1), (0, 2), (0, 3)],
    )
