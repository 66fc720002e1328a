"""End-to-end smoke test of the Python bindings.

Marches the product model, checks the closed-form potential, runs the limit
pipeline, fits a decay rate, exercises the matrix-closeness helper, and
drives one config run through a temp directory.

Run after `pip install -e crates/py --no-build-isolation`:

    python python/smoke_test.py
"""

import json
import math
import tempfile
from pathlib import Path

import fanocollapse_py as fc


def closed_phi(t: float) -> float:
    e = math.exp(-t)
    return (1.0 - e) * math.log(1.0 + 2.0 * e)


def check(name: str, ok: bool, detail: str = "") -> bool:
    print(f"{'PASS' if ok else 'FAIL'}  {name:<44} {detail}")
    return ok


def main() -> int:
    results = []

    spec = fc.ModelSpec.product(1.0)
    results.append(check("model repr", "product" in repr(spec), repr(spec)))

    schedule = [0.5, 1.0, 2.0, 4.0, 8.0]
    slices = fc.march(spec, 64, schedule)
    worst = max(
        abs(v - closed_phi(s.t)) for s in slices for v in s.phi
    )
    results.append(
        check("marched potential matches closed form", worst <= 1e-8, f"sup error {worst:.3e}")
    )
    results.append(
        check(
            "solver converged at every slice",
            all(s.residual <= 1e-9 for s in slices),
            f"worst residual {max(s.residual for s in slices):.3e}",
        )
    )

    limit = fc.limit_data(spec, 64)
    results.append(
        check(
            "limit density is exactly 1 on the oracle",
            abs(limit.g_value - 1.0) <= 1e-9
            and abs(limit.g_pushforward - 1.0) <= 1e-9,
            repr(limit),
        )
    )
    results.append(
        check(
            "limit base metric is the round one",
            max(abs(q - 1.0) for q in limit.omega_y_q) <= 1e-9,
            f"sup |q - kappa| {max(abs(q - 1.0) for q in limit.omega_y_q):.3e}",
        )
    )

    rows = fc.diagnose(spec, 64, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0])
    series = [(r.t, r.as_dict()["c0_phi_minus_psi"]) for r in rows]
    model, rate, _, quality = fc.fit_decay_series(series)
    results.append(
        check(
            "potential gap decays exponentially at rate 1",
            model == "exponential" and abs(rate - 1.0) <= 0.05 and quality >= 0.99,
            f"{model}, rate {rate:.3f}, r2 {quality:.4f}",
        )
    )
    d = rows[-1].as_dict()
    results.append(
        check(
            "diagnostics row exposes the full ladder",
            len(d) == 20 and d["t"] == 12.0,
            f"{len(d)} fields at t = {d['t']}",
        )
    )

    s = 1e-2
    hs = fc.matrix_closeness([[1.0 + s, 0.0], [0.0, 1.0 - s]], s * s)
    results.append(
        check(
            "closeness saturates sqrt(2) sqrt(eps)",
            abs(hs - math.sqrt(2.0) * s) <= 1e-14,
            f"|A - I| = {hs:.6e}",
        )
    )
    c2 = fc.closeness_constant(samples=500)
    results.append(check("Monte Carlo constant is finite", 1.0 <= c2 <= 4.0, f"C2 = {c2:.4f}"))

    try:
        fc.ModelSpec.hirzebruch(1, 4.0, 4.0, 1.0)
        results.append(check("degenerate interval rejected", False, "no error raised"))
    except ValueError as e:
        results.append(check("degenerate interval rejected", True, str(e)[:60]))

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "config.json"
        cfg.write_text(
            json.dumps(
                {
                    "schema_version": 1,
                    "spec": {"model": "product", "kappa": 1.0},
                    "mesh": {"npoints": 48},
                    "schedule": {"explicit": [0.5, 1.0, 1.5]},
                    "solver": {"tol": 1e-10, "max_iter": 50},
                    "gauge": 4.0,
                    "outputs": {"directory": "unused", "formats": ["csv", "json"]},
                }
            )
        )
        out_dir = Path(tmp) / "run"
        directory, nrows, resumed = fc.run(str(cfg), out=str(out_dir))
        manifest = json.loads((out_dir / "manifest.json").read_text())
        results.append(
            check(
                "config run persists a complete manifest",
                nrows == 3 and resumed is None and manifest["complete"],
                f"{nrows} slices in {directory}",
            )
        )

    failed = sum(not r for r in results)
    print(f"{len(results)} checks, {failed} failed")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
