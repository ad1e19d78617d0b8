from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))


@pytest.fixture(autouse=True)
def _output_dir_in_tmp(tmp_path, monkeypatch):
    # runs without --output-dir must not write into the working tree
    monkeypatch.setenv("OBLATUS_OUTPUT_DIR", str(tmp_path / "oblatus-results"))
