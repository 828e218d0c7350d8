import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from projentropy import _kernels as k

ROOT = Path(__file__).resolve().parent.parent
needs_numba = pytest.mark.skipif(not k.HAVE_NUMBA, reason="numba path unavailable")


def _cases(rng):
    n = 12
    weights = np.polynomial.legendre.leggauss(n)[1]
    mat = np.tril(np.ones((n, n))) / n
    x = np.linspace(-1.0, 1.0, 40)
    m0 = np.cumsum(1.0 + x ** 2)
    m1 = np.cumsum(x * (1.0 + x ** 2))
    return [
        (k.row_dot_numpy, k.row_dot_numba, (rng.normal(size=(50, 9)), rng.normal(size=(50, 9)))),
        (k.cumulative_segments_numpy, k.cumulative_segments_numba,
         (rng.normal(size=(7, 5, n)), mat, weights, rng.uniform(0.1, 1, size=(7, 5)))),
        (k.cross_ratio_terms_numpy, k.cross_ratio_terms_numba, tuple(rng.normal(size=(30, 2)) for _ in range(4))),
        (k.barycenter_table_numpy, k.barycenter_table_numba, (x, m0 - m0[0], m1 - m1[0])),
    ]


@needs_numba
def test_numba_matches_numpy():
    for ref, fast, args in _cases(np.random.default_rng(0)):
        a, b = ref(*args), fast(*args)
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        for u, v in zip(a, b):
            assert np.allclose(u, v, rtol=1e-13, atol=1e-14, equal_nan=True)


def test_dispatch_shapes():
    num, den = k.cross_ratio_terms([1.0, 2.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0])
    assert num.shape == den.shape == (1,)
    assert num[0] / den[0] == pytest.approx(2.0)


def _probe(env):
    code = "from projentropy import _kernels as k; print(k.HAVE_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True,
                         env={**os.environ, **env})
    return out.stdout.strip()


def test_env_flag_disables_numba():
    assert _probe({"PROJENTROPY_DISABLE_NUMBA": "1"}) == "False"


def test_fallback_report_matches():
    args = [sys.executable, "-m", "projentropy.cli", "barycenter", "--in", "problems/density_positive.json", "--quiet"]
    fast = subprocess.run(args, capture_output=True, cwd=ROOT, check=True)
    slow = subprocess.run(args, capture_output=True, cwd=ROOT, check=True,
                          env={**os.environ, "PROJENTROPY_DISABLE_NUMBA": "1"})
    assert json.loads(fast.stdout) == json.loads(slow.stdout)
