import numpy as np
import pytest

from slimnav.world import DifficultyIndex, GridWorld, generate_world

# free-cell count of generate_world(7) with default params, recorded once and frozen
SEED7_FREE_CELLS = 2612


@pytest.fixture(scope="session")
def world7():
    return generate_world(7)


@pytest.fixture(scope="session")
def index7(world7):
    return DifficultyIndex(world7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def open_world(w, h):
    """Fully free world without a border (out-of-bounds still blocks motion)."""
    occ = np.zeros((h, w), dtype=bool)
    return GridWorld(occ, np.zeros((h, w), dtype=np.uint8))


def random_world(rng, w=32, h=32, density=0.2):
    occ = rng.random((h, w)) < density
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    return GridWorld(occ, np.where(occ, 1, 0).astype(np.uint8))


# -- small end-to-end CLI pipeline, run twice for the determinism checks ---------------------------

SMALL_CONFIG = {
    "preset": "desk",
    "seed": 3,
    "perception": {"dataset_size": 300, "training": {"max_epochs": 3}},
    "policy": {"episodes": 200, "validate_every": 100, "learn_start": 200},
    "eval": {"validation_per_bucket": 5, "test_per_bucket": 10},
}

PIPELINE = (
    ["gen-world"],
    ["collect-mde-data"],
    ["train-mde"],
    ["train-policy", "--variant", "adaptive"],
    ["train-policy", "--variant", "static-64"],
    ["eval"],
    ["analyze"],
    ["bench"],
)


def run_pipeline(out, config_path):
    from slimnav.cli import main

    for cmd in PIPELINE:
        code = main([*cmd, "--config", str(config_path), "--out", str(out)])
        assert code == 0, f"{cmd} exited with {code}"


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    import json

    root = tmp_path_factory.mktemp("pipeline")
    cfg = root / "small.json"
    cfg.write_text(json.dumps(SMALL_CONFIG))
    runs = []
    for name in ("a", "b"):
        out = root / name
        run_pipeline(out, cfg)
        runs.append(out)
    return cfg, runs[0], runs[1]


# -- acceptance summary: one line per criterion, printed after the run --------------------------------

ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((name, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p for _, p, _ in parts)
        names = parts[0][0]
        detail = "; ".join(f"{'' if p else 'FAILED '}{d}" for _, p, d in parts)
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {c:2d}. {names}: {detail}")
