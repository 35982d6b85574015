import hashlib
import math
import os
from pathlib import Path

import pytest

import unislide

FIXTURES = Path(os.environ.get("UNISLIDE_FIXTURES_DIR", Path(__file__).resolve().parents[1] / "fixtures"))


def task_path(name):
    return FIXTURES / name / "task.json"


def digest(directory):
    h = hashlib.sha256()
    for p in sorted(Path(directory).rglob("*")):
        if p.is_file():
            h.update(p.relative_to(directory).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_formulas():
    assert unislide.setting_avg([6.0] * 5, [8.0, 9.0]) == pytest.approx((30.0 + 17.0) / 7.0)
    with pytest.raises(unislide.UnislideError, match="^ArityViolation: shared"):
        unislide.setting_avg([6.0, 7.0], [8.0])
    assert unislide.weighted_state_mean([(1.0, 1.0), (3.0, 0.0)]) == pytest.approx(2.5)
    assert unislide.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert unislide.pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert unislide.icc([[1, 2, 4], [1, 2, 4], [1, 2, 4]]) == pytest.approx(1.0)
    assert math.isnan(unislide.icc([[3, 3], [3, 3]]))


def test_chunk_text_covers_input():
    text = "".join(chr(ord("a") + i % 26) for i in range(2500))
    chunks = unislide.chunk_text(text, 900, 200)
    assert chunks[0] == text[:900]
    assert text.endswith(chunks[-1])
    assert all(len(c) <= 900 for c in chunks)
    assert all(a[-200:] == b[:200] for a, b in zip(chunks, chunks[1:]))


def test_ablation_configs():
    assert unislide.ablation_configs() == list("abcdefg")


def test_load_task_and_missing_file(tmp_path):
    t = unislide.load_task(task_path("long_doc"))
    assert t["id"] == "ld-solar-microgrids"
    with pytest.raises(unislide.UnislideError):
        unislide.load_task(tmp_path / "nope.json")


def test_generate_evaluate_reproducible(tmp_path):
    task = task_path("vague_prompt")
    a = unislide.generate(task, tmp_path / "a", seed=5)
    b = unislide.generate(task, tmp_path / "b", seed=5)
    assert a["deck_hash"] == b["deck_hash"]
    assert a["slides"] > 0
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    r1 = unislide.evaluate(task, tmp_path / "a", seed=5, runs=2)
    r2 = unislide.evaluate(task, tmp_path / "b", seed=5, runs=2)
    assert r1 == r2
    assert "setting_avg" in r1


def test_aggregate_rankings():
    table = unislide.aggregate_rankings([["m1", "m2", "m3"], ["m1", "m3", "m2"]])
    assert table[0]["method"] == "m1"
    assert table[0]["rank"] == 1


def test_run_cli():
    code, out, _ = unislide.run_cli(["--help"])
    assert code == 0
    assert "generate" in out
    code, _, err = unislide.run_cli(["frobnicate"])
    assert code == 1
