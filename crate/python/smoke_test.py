"""Smoke test for the pglmc_py extension module.

Build the module first:

    PYO3_BUILD_EXTENSION_MODULE=1 cargo build --release -p pglmc-py

then run `python3 python/smoke_test.py`. If `pglmc_py` is not importable
(not installed into the environment), the freshly built shared library under
target/release is loaded instead; PGLMC_PY_LIB overrides its location.
"""

import importlib
import json
import os
import shutil
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    try:
        return importlib.import_module("pglmc_py")
    except ImportError:
        pass
    lib = Path(os.environ.get("PGLMC_PY_LIB", ROOT / "target" / "release" / "libpglmc_py.so"))
    if not lib.exists():
        sys.exit(f"extension not found at {lib}; build it with cargo first")
    tmp = Path(tempfile.mkdtemp(prefix="pglmc_py_"))
    shutil.copy(lib, tmp / ("pglmc_py" + sysconfig.get_config_var("EXT_SUFFIX")))
    sys.path.insert(0, str(tmp))
    return importlib.import_module("pglmc_py")


def expect(exc, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc as e:
        return e
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def main():
    pg = load()
    print("pglmc_py", pg.__version__)

    x, y, w_bayes, b_bayes = pg.simulate(200, n_plus=60, n_minus=20, seed=3)
    assert len(x) == 80 and len(x[0]) == 200 and sum(v == 1 for v in y) == 60
    assert b_bayes == 0.0 and abs(sum(v * v for v in w_bayes) ** 0.5 - 2.7) < 1e-12
    assert pg.simulate(200, n_plus=60, n_minus=20, seed=3)[0] == x

    xt, yt = pg.simulate_test(200, 500, seed=3)
    assert len(xt) == 1000

    pglmc = pg.train(x, y, c0=1.0, c=4.0)
    svm = pg.train(x, y, method="svm", c0=1.0)
    assert pglmc.method == "pglmc" and svm.method == "svm"
    assert pglmc.lambda_ > 0.0 and svm.lambda_ == 0.0
    assert len(pglmc.w) == 200 and len(pglmc.alpha) == 80

    for model in (pglmc, svm):
        pred = model.predict(xt)
        scores = model.decision_function(xt)
        assert all((s >= 0) == (p == 1) for s, p in zip(scores, pred))
        ccr, mwe = pg.ccr(pred, yt), pg.mwe(pred, yt)
        assert 0.5 < ccr <= 1.0 and abs(mwe - (1 - ccr)) < 1e-12  # balanced test set
        angle = pg.direction_angle(model.w, w_bayes)
        print(f"{model.method:6s} ccr={ccr:.3f} angle={angle:.1f}")
        assert 0.0 < angle < 90.0

    assert pg.direction_angle(pglmc.w, w_bayes) < pg.direction_angle(svm.w, w_bayes)
    assert pg.direction_angle(w_bayes, w_bayes) == 0.0

    back = pg.Model.from_json(pglmc.to_json())
    assert back.w == pglmc.w and back.b == pglmc.b
    assert set(json.loads(pglmc.to_json())) >= {"w", "b", "lambda", "alpha"}

    expect(ValueError, pg.train, [[1.0], [2.0]], [1, 1])
    expect(ValueError, pg.train, [[1.0], [2.0, 3.0]], [1, -1])
    expect(ValueError, pg.train, x, y, method="lda")
    err = expect(pg.SolverError, pg.train, x, y, c=4.0, max_iter=1)
    assert isinstance(err, RuntimeError)

    small_x, small_y = x[:40] + x[60:], y[:40] + y[60:]
    a = pg.cross_validate(small_x, small_y, seed=11, method="svm", replications=2)
    b = pg.cross_validate(small_x, small_y, seed=11, method="svm", replications=2)
    assert a == b and a["failures"] == 0
    assert len(json.loads(a["results_json"])["records"]) == 10
    print(f"cv     ccr={a['mean_ccr']:.3f} mwe={a['mean_mwe']:.3f}")

    print("smoke test passed")


if __name__ == "__main__":
    main()
