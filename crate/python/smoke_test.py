"""Smoke test for the transport_py extension module.

Build the module first:

    cargo build --release -p transport-py

then run:

    python3 python/smoke_test.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def locate_extension():
    candidates = [
        ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libtransport_py.so", "transport_py.so", "libtransport_py.dylib")
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("extension not found; run: cargo build --release -p transport-py")
    return max(built, key=lambda p: p.stat().st_mtime)


def main():
    lib = locate_extension()
    stage = Path(tempfile.mkdtemp(prefix="transport_py_"))
    shutil.copy(lib, stage / "transport_py.so")
    sys.path.insert(0, str(stage))
    import transport_py

    names = transport_py.catalog_names()
    assert "1d-decay" in names and "tc1" in names, names

    l2, linf = transport_py.solve_errors("1d-decay", 8)
    assert abs(l2 - 0.01664) < 1e-4, l2
    assert 0.0 < linf < 0.1, linf

    import math
    values = transport_py.solve_at("1d-decay", 32, [[0.5]], order=2)
    assert abs(values[0] - math.exp(-1.0)) < 1e-3, values

    selected, errors = transport_py.greedy_build("tc1", 8, train=9, tol=1e-3)
    assert len(selected) >= 2, selected
    assert errors[-1] <= 1e-3, errors
    assert all(0.01 <= mu <= 1.0 for mu in selected), selected

    print(f"smoke test passed: {len(names)} problems, "
          f"l2={l2:.5f}, greedy selected {len(selected)} parameters")


if __name__ == "__main__":
    main()
