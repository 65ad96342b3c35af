import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from p2plab.neighbors import classify_interactions  # noqa: E402
from p2plab.particles import generate  # noqa: E402
from p2plab.tree import build_adaptive_tree  # noqa: E402


@pytest.fixture(scope="session")
def small_case():
    p = generate("plummer", 600, 3, 11)
    tree = build_adaptive_tree(p, 8, periodic=True)
    pairs, stats = classify_interactions(tree, 3)
    return tree, pairs, stats


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
