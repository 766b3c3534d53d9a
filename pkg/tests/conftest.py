import json
from pathlib import Path

import pytest

from codemin.topology import MulticastInstance, parse_topology

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture(scope="session")
def butterfly():
    return parse_topology((FIXTURES / "butterfly_B.json").read_text())


@pytest.fixture(scope="session")
def butterfly_prime():
    return parse_topology((FIXTURES / "butterfly_Bprime.json").read_text())


@pytest.fixture(scope="session")
def butterfly_path():
    return FIXTURES / "butterfly_B.json"


@pytest.fixture(scope="session")
def butterfly_prime_path():
    return FIXTURES / "butterfly_Bprime.json"


def make_instance(link_pairs, source, sinks, rate, nodes=None):
    """Instance from (tail, head) pairs; nodes inferred in first-seen order."""
    if nodes is None:
        nodes = []
        for tail, head in link_pairs:
            for n in (tail, head):
                if n not in nodes:
                    nodes.append(n)
    links = [(i, t, h) for i, (t, h) in enumerate(link_pairs)]
    return MulticastInstance(nodes, links, source, sinks, rate)


def butterfly_doc():
    return json.loads((FIXTURES / "butterfly_B.json").read_text())
