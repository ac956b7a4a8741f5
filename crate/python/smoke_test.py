"""Smoke test for the symqm Python bindings.

Builds the extension with cargo unless SYMQM_PY_LIB points at a built
library, loads it and checks a handful of known values.

    python3 python/smoke_test.py
"""

import importlib.util
import math
import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_library() -> Path:
    lib = os.environ.get("SYMQM_PY_LIB")
    if lib:
        return Path(lib)
    subprocess.run(
        ["cargo", "build", "-p", "symqm-py"],
        cwd=ROOT,
        check=True,
    )
    target = Path(os.environ.get("CARGO_TARGET_DIR", ROOT / "target"))
    for name in ("libsymqm_py.so", "libsymqm_py.dylib", "symqm_py.dll"):
        path = target / "debug" / name
        if path.exists():
            return path
    sys.exit("built library not found under " + str(target / "debug"))


def load(lib: Path):
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    tmp = Path(tempfile.mkdtemp(prefix="symqm-py-"))
    dest = tmp / ("symqm_py" + suffix)
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("symqm_py", dest)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main() -> None:
    sq = load(build_library())

    c = sq.Word.commutator()
    assert str(c) == "abAB", str(c)
    assert len(sq.Word("aAb")) == 1
    assert sq.Word("ab") * sq.Word("BA") == sq.Word("")
    assert c.pow(3).count(sq.Word("ab")) == 3

    ab = sq.Kernel.library("ab")
    assert set(sq.Kernel.names()) >= {"ab", "aab", "abb", "exp-a"}
    assert ab(c) == 1.0, ab(c)
    assert sq.Kernel.library("exp-a")(sq.Word("aab")) == 2.0
    custom = sq.Kernel("mine", [("ab", 2.0)])
    assert custom(c) == 2.0
    try:
        sq.Word("abx")
    except ValueError:
        pass
    else:
        raise AssertionError("bad letter accepted")

    # Oracle: a plateau bump of mass m has Calabi invariant m.
    h = sq.Hamiltonian.bump((0.5, 0.5), 0.2, 0.01)
    assert math.isclose(h.calabi(), 0.01, rel_tol=1e-6), h.calabi()
    x = h.flow((0.5, 0.5))
    assert math.dist(x, (0.5, 0.5)) < 1e-12
    assert h.flow((0.1, 0.1)) == (0.1, 0.1)

    # Loop that winds once around the a-direction.
    w = sq.loop_word([(0.5, 0.25), (0.75, 0.25), (0.0, 0.25), (0.25, 0.25), (0.5, 0.25)])
    assert abs(w.exponent_sums()[0]) == 1, str(w)

    est = sq.gg_estimate(ab, h, 4, 2000, seed=7)
    assert est.n_samples == 2000
    assert abs(est.value - 0.02) < 0.02, est
    again = sq.gg_estimate(ab, h, 4, 2000, seed=7)
    assert again.value == est.value

    n = 33
    ones = [[1.0] * n for _ in range(n)]
    bumped = [
        [1.0 + 0.2 * math.sin(2 * math.pi * i / (n - 1)) ** 2 * math.sin(2 * math.pi * j / (n - 1)) ** 2 for i in range(n)]
        for j in range(n)
    ]
    fmap, residual = sq.moser_equalize(ones, bumped)
    assert fmap.shape == (n, n)
    assert fmap.roundtrip_error() < 1e-3, fmap.roundtrip_error()
    assert residual < 5e-2, residual

    cfg = 'experiment = "calabi-discontinuity"\nseed = 1\n[params]\ni_values = [2, 4]\n'
    assert sq.validate_config(cfg) == []
    bad = sq.validate_config('experiment = "nope"\nseed = 1\n')
    assert bad and bad[0].startswith("experiment"), bad
    out = sq.run_config(cfg)
    assert out["passed"], out["report"]
    assert out["csv"].startswith("config_hash,")

    print("symqm_py", sq.__version__, "smoke test ok")


if __name__ == "__main__":
    main()
