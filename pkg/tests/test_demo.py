import math
import os

import pytest

from memsflow import demo, fixtures
from memsflow.demo import StageError, demo_pipeline
from memsflow.io import atomic_dir, atomic_write


def test_gyro_report(tmp_path):
    rep = demo_pipeline("gyro", tmp_path)
    assert [n for n, _ in rep.stages] == ["netlist", "solid", "layout", "triangle", "ac"]
    assert rep.stage("netlist")["instances"] == 38
    assert rep.stage("triangle") == {"ANCHOR": "equal", "STRUCT": "equal", "seconds": rep.stage("triangle")["seconds"]}
    assert rep.metrics["drive_rel_diff"] < 0.05
    for name in ("gyro.esm", "gyro.cif", "gyro_ac.csv", "report.txt"):
        assert (tmp_path / name).exists()
    assert (tmp_path / "gyro.cif").read_text() == fixtures.read_text("gyro.cif")


def test_accel_full_order_exact(tmp_path):
    rep = demo_pipeline("accel", tmp_path, q=math.inf)
    assert rep.metrics["q"] == rep.stage("mor")["N"]
    assert rep.metrics["rel_l2"] < 1e-8


def test_stage_failure_names_stage(tmp_path, monkeypatch):
    real = fixtures.load

    def broken(name):
        if name == "accel_stack":
            return real("soi")
        if name == "accel":
            raise OSError("fixture unreadable")
        return real(name)

    monkeypatch.setattr(demo.fixtures, "load", broken)
    with pytest.raises(StageError) as err:
        demo_pipeline("accel", tmp_path)
    assert err.value.stage == "layout"
    assert str(err.value).startswith("stage layout:")


def test_unknown_demo(tmp_path):
    with pytest.raises(ValueError):
        demo_pipeline("pendulum", tmp_path)


def test_atomic_write(tmp_path):
    path = tmp_path / "f.txt"
    atomic_write(path, "one\n")
    atomic_write(path, "two\n")
    assert path.read_text() == "two\n"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_atomic_dir(tmp_path):
    target = tmp_path / "bundle"
    with atomic_dir(target) as tmp:
        (open(os.path.join(tmp, "a"), "w")).write("x")
        assert not target.exists()
    assert (target / "a").read_text() == "x"
    with pytest.raises(RuntimeError):
        with atomic_dir(target) as tmp:
            raise RuntimeError("boom")
    assert (target / "a").read_text() == "x"
