import json
import subprocess
import sys
from pathlib import Path

import pytest

from fiml import kernels

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")
def test_benchmark_runs_and_paths_agree(tmp_path):
    out = tmp_path / "bench.json"
    subprocess.run([sys.executable, str(BENCH), "--sizes", "64", "--repeat", "2", "--json", str(out)],
                   check=True, capture_output=True, text=True)
    (row,) = json.loads(out.read_text())
    assert row["max_rel_diff_residual"] < 1e-11
    assert row["max_rel_diff_solve"] < 1e-11
    assert row["forward_numba_ms"] > 0 and row["forward_numpy_ms"] > 0
