"""
Corre cada subcomando sobre las configuraciones de configs/ y resume los
resultados de los reportes JSON.

    python scripts/run_acceptance.py [--quick] [--workers N]
"""
import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.cli import main as cli_main  # noqa: E402
from src.config import CONFIGS_DIR, OUTPUT_DIR  # noqa: E402

ACCEPTANCE_DIR = OUTPUT_DIR / "acceptance"


def run_step(name, argv):
    """Ejecutar un subcomando y medir su tiempo"""
    print(f"🔍 {name}: {' '.join(argv)}")
    start = time.perf_counter()
    code = cli_main(argv)
    elapsed = time.perf_counter() - start
    print(f"{'✅' if code == 0 else '❌'} {name}: código {code} en {elapsed:.1f}s")
    return code == 0


def read_report(step, name):
    path = ACCEPTANCE_DIR / step / name
    return json.loads(path.read_text()) if path.exists() else {}


def check_free_slopes(step="free-dispersive", tolerance=0.03):
    report = read_report(step, "fit_report.json")
    ok = True
    for fit in report.get("fits", []):
        deviation = abs(fit["slope"] + fit["target_alpha"])
        passed = deviation < tolerance
        ok &= passed
        print(f"   q={fit['q']:g}: pendiente {fit['slope']:.4f} (desvío {deviation:.4f}) {'✅' if passed else '❌'}")
    return ok and bool(report)


def check_duhamel():
    report = read_report("duhamel", "duhamel_report.json")
    if not report:
        return False
    scaling = report["scaling"]
    remainder_ok = abs(scaling["remainder_exponent"] - scaling["expected_remainder_exponent"]) < 0.3
    first_ok = abs(scaling["first_order_exponent"] - 1.0) < 0.1
    isometry = report["isometry"]
    isometry_ok = report["isometry_within_3se"] and isometry["rel_error"] < 0.05
    print(f"   resto: {scaling['remainder_exponent']:.3f} {'✅' if remainder_ok else '❌'}")
    print(f"   primer orden: {scaling['first_order_exponent']:.3f} {'✅' if first_ok else '❌'}")
    print(f"   isometría de Itô: error relativo {isometry['rel_error']:.4f} {'✅' if isometry_ok else '❌'}")
    refinement = report.get("refinement_change", {})
    refinement_ok = all(change < 0.10 for change in refinement.values())
    for key, change in refinement.items():
        print(f"   refinamiento {key}: {change:.3f} {'✅' if change < 0.10 else '❌'}")
    return remainder_ok and first_ok and isometry_ok and refinement_ok and report["checks_passed"]


def check_strong_order():
    check = read_report("selftest", "selftest.json").get("checks", {}).get("strong_order")
    if not check:
        return False
    passed = check["value"] >= 0.9
    print(f"   orden fuerte: {check['value']:.3f} {'✅' if passed else '❌'}")
    return passed


def check_scatter(step, expect_decrease):
    report = read_report(step, "scatter_report.json")
    entry = report.get("summary", {}).get("rho=2")
    if not entry or "decreasing" not in entry:
        return False
    passed = entry["decreasing"] == expect_decrease and not entry["triangle_violations"]
    print(f"   {step}: cociente final {entry['final_ratio']:.3f}, decreciente={entry['decreasing']} {'✅' if passed else '❌'}")
    return passed


def check_decay(step="decay", rho=2.0, q=8.0, tolerance=0.15):
    report = read_report(step, "decay_report.json")
    fit = next((f for f in report.get("fits", []) if f["rho"] == rho and f["q"] == q), None)
    bootstrap = next((b for b in report.get("bootstrap", []) if b["rho"] == rho and b["q"] == q), None)
    if fit is None or bootstrap is None:
        return False
    deviation = abs(fit["slope"] + fit["target_alpha"])
    slope_ok = deviation < tolerance and fit["window"][0] >= 2.0 and fit["n_points"] >= 6
    print(f"   q={q:g}, rho={rho:g}: pendiente {fit['slope']:.4f} (desvío {deviation:.4f}) {'✅' if slope_ok else '❌'}")
    print(f"   cantidad bootstrap: cociente {bootstrap['ratio']:.3f} {'✅' if bootstrap['passed'] else '❌'}")
    return slope_ok and bootstrap["passed"]


def check_decay_determinism(workers):
    parallel = ACCEPTANCE_DIR / "decay" / "ensemble_stats.csv"
    pair = ACCEPTANCE_DIR / "decay_w2" / "ensemble_stats.csv"
    same = parallel.exists() and pair.exists() and parallel.read_bytes() == pair.read_bytes()
    print(f"   workers 2 vs {workers}: {'idénticos ✅' if same else 'distintos ❌'}")
    return same


def run_acceptance(quick=False, workers=8):
    """Ejecutar todas las corridas"""
    print("🧪 Iniciando corridas de aceptación...")
    print("=" * 50)

    def argv(command, config, out=None, *extra):
        return [command, "--config", str(CONFIGS_DIR / config), "--out", str(ACCEPTANCE_DIR / (out or command)), *extra]

    results = {"selftest": run_step("selftest", ["selftest", "--out", str(ACCEPTANCE_DIR / "selftest")]) and check_strong_order()}
    results["simulate"] = run_step("simulate", argv("simulate", "simulate.json"))
    results["free-dispersive"] = run_step("free-dispersive", argv("free-dispersive", "free_dispersive.json")) and check_free_slopes()
    free_3d = argv("free-dispersive", "free_dispersive_3d.json", "free_dispersive_3d")
    results["free-dispersive-3d"] = run_step("free-dispersive-3d", free_3d) and check_free_slopes("free_dispersive_3d", 0.15)
    results["duhamel"] = run_step("duhamel", argv("duhamel", "duhamel.json", None, "--calibrate")) and check_duhamel()
    if not quick:
        scatter_args = argv("scatter", "scatter.json", None, "--workers", str(workers))
        results["scatter"] = run_step("scatter", scatter_args) and check_scatter("scatter", True)
        constant_args = argv("scatter", "scatter_constant.json", "scatter_constant", "--workers", str(workers))
        results["scatter-constant"] = run_step("scatter-constant", constant_args) and check_scatter("scatter_constant", False)
        decay_ok = run_step("decay", argv("decay", "decay.json", None, "--workers", str(workers)))
        decay_ok = decay_ok and check_decay()
        decay_ok &= run_step("decay", argv("decay", "decay.json", "decay_w2", "--workers", "2"))
        results["decay"] = decay_ok and check_decay_determinism(workers)

    # Resumen
    print("=" * 50)
    print("📊 Resumen:")
    for name, ok in results.items():
        print(f"{name}: {'✅' if ok else '❌'}")

    if all(results.values()):
        print("🎉 ¡Todas las corridas pasaron!")
        return 0
    print("⚠️ Algunas corridas fallaron")
    return 1


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="omitir decay y scatter")
    parser.add_argument("--workers", type=int, default=8)
    args = parser.parse_args()
    sys.exit(run_acceptance(args.quick, args.workers))
