"""Smoke test for the mgsmooth_py extension.

Builds the extension with cargo if needed, loads it from the target
directory, and exercises each group of bindings once.

    python3 python/smoke_test.py
"""

import importlib.util
import json
import math
import pathlib
import shutil
import subprocess
import sys
import sysconfig
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_extension():
    subprocess.run(["cargo", "build", "-p", "mgsmooth-py"], cwd=ROOT, check=True)
    built = ROOT / "target" / "debug" / "libmgsmooth_py.so"
    if not built.exists():
        sys.exit(f"extension not found at {built}")
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    target = pathlib.Path(tempfile.mkdtemp()) / f"mgsmooth_py{suffix}"
    shutil.copy(built, target)
    spec = importlib.util.spec_from_file_location("mgsmooth_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    mg = load_extension()

    game = mg.MarkovGame.two_state()
    assert game.n_states == 2 and game.gamma == 0.75, repr(game)
    pi0 = [[0.5, 0.5], [0.5, 0.5]]
    mu0 = [[0.45, 0.55], [0.45, 0.55]]
    exact = game.evaluate(pi0)
    smooth = game.evaluate(pi0, mu0, rho=1.0)
    assert close(exact[0], -7.0, 1e-6), exact
    assert close(smooth[0], -7.6243, 2e-3), smooth
    assert close(game.evaluate(pi0, mu0, rho=10.0, uniform=True)[0], -7.1385, 2e-3)

    q = game.q_matrix(exact, 0)
    eq = mg.solve_matrix_game(q)
    assert eq["is_pure"] and close(eq["value"], -7.75, 1e-6), eq

    api = game.solve("api", pi0)
    assert api["status"] == "converged" and close(api["values"][0], -8.0, 1e-6), api
    npi = game.solve("npi", [[1, 0], [1, 0]], [[1, 0], [1, 0]])
    assert npi["status"] == "cycle:2", npi
    spi = game.solve("spi", pi0, mu0, rho=20.0)
    assert spi["protagonist"][0] == [1.0, 0.0], spi

    again = mg.MarkovGame.from_json(game.to_json())
    assert again.evaluate(pi0) == exact

    assert close(mg.wlse([1.0, 3.0], [0.5, 0.5], 1e3), 3.0, 1e-3)
    try:
        mg.wlse([1.0], [0.5, 0.5], 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("mismatched weights accepted")

    files = mg.two_state_files()
    assert set(files) >= {"table1.csv", "table2.csv", "npi_cycle.json", "bounds.csv"}
    assert json.loads(files["npi_cycle.json"])["period"] == 2

    state = [0.0, 0.0, 0.0, 20.0, 0.0, 0.0]
    nxt = mg.dynamics_step(state, 0.0, 0.0, 0.0, "straight")
    assert nxt == [2.0, 0.0, 0.0, 20.0, 0.0, 0.0], nxt
    pushed = mg.dynamics_step(state, 0.0, 0.0, 0.3, "straight")
    assert close(pushed[4], 0.3, 1e-12)
    assert mg.stage_cost(state, 0.0, 0.0) == 0.0

    short = [("iterations", "40"), ("eval_interval", "20"), ("warmup", "150"),
             ("updates_per_episode", "20"), ("batch_size", "32")]
    run = mg.train("saac", seed=1, overrides=short)
    assert run["metrics_csv"].startswith("iteration,algo,")
    assert len(run["tar"]) == 3 and all(math.isfinite(t) for t in run["tar"])
    assert mg.train("saac", seed=1, overrides=short)["checkpoint"] == run["checkpoint"]
    ev = mg.evaluate(run["checkpoint"], dist=0.3)
    assert math.isfinite(ev["tar"]) and ev["tar"] <= 0.0

    csv = mg.run_gradcheck(0)
    assert csv.splitlines()[0].startswith("check,")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
