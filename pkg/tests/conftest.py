import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pooldecode.model import NoiseParams, TestDesign, gen_test_matrix, simulate_outcomes


def make_instance(X, y, S=(), noise=NoiseParams()):
    """Instance with a hand-written design and outcome vector."""
    from pooldecode.model import Instance
    design = TestDesign(np.asarray(X, dtype=np.uint8), 0.5, None)
    return Instance(design, np.asarray(S, dtype=np.int64), noise, np.asarray(y, dtype=bool))


def random_instance(N, K, M, u=0.0, q=0.0, seed=0, p=None):
    rng = np.random.default_rng(seed)
    S = rng.choice(N, size=K, replace=False)
    p = 1.0 / max(K, 1) if p is None else p
    design = gen_test_matrix(M, N, min(p, 1.0), seed + 1)
    return simulate_outcomes(design, S, NoiseParams(u, q), seed + 2, seed + 3)


@pytest.fixture
def hand_instance():
    return make_instance


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
