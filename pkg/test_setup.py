"""
Script de prueba para verificar el entorno y las configuraciones de experimentos
"""
import os
import sys
from pathlib import Path

from src.config import CONFIGS_DIR, FFT_WORKERS, LOGS_DIR, OUTPUT_DIR, config_digest, load_config
from src.errors import ConfigError


def test_environment():
    """
    Verifica el entorno de desarrollo
    """
    print("🔍 VERIFICANDO ENTORNO")
    print("=" * 50)

    print(f"🐍 Python: {sys.version}")
    print(f"📁 Directorio actual: {os.getcwd()}")
    print(f"📂 Salidas: {OUTPUT_DIR}")
    print(f"📝 Logs: {LOGS_DIR}")
    print(f"⚙️ Hilos FFT: {FFT_WORKERS}")

    # Verificar librerías clave
    libraries = ["numpy", "scipy", "pandas", "joblib", "pydantic", "dotenv", "matplotlib", "seaborn"]
    missing = []
    for lib in libraries:
        try:
            __import__(lib)
            print(f"✅ {lib} disponible")
        except ImportError:
            print(f"❌ {lib} no disponible")
            missing.append(lib)
    return not missing


def test_configs():
    """
    Valida cada configuración de experimento en configs/
    """
    print("\n🔍 VALIDANDO CONFIGURACIONES")
    print("=" * 50)

    paths = sorted(Path(CONFIGS_DIR).glob("*.json"))
    if not paths:
        print(f"❌ No hay configuraciones en {CONFIGS_DIR}")
        return False

    ok = True
    for path in paths:
        try:
            config = load_config(path)
            grid = config.grid
            print(f"✅ {path.name}: d={grid.dim}, n={grid.n}, δ={config.potential.delta}, "
                  f"M={config.noise.n_paths} (digest {config_digest(config)})")
        except ConfigError as e:
            print(f"❌ {path.name}: {e}")
            ok = False
    return ok


def main():
    """
    Función principal de pruebas
    """
    print("🚀 INICIANDO PRUEBAS DEL PROYECTO")
    print("=" * 60)

    env_ok = test_environment()
    configs_ok = test_configs()

    # Resumen
    print("\n📋 RESUMEN")
    print("=" * 50)
    print(f"{'✅' if env_ok else '❌'} Entorno: {'OK' if env_ok else 'Instalar requirements.txt'}")
    print(f"{'✅' if configs_ok else '❌'} Configuraciones: {'OK' if configs_ok else 'ERROR'}")

    if env_ok and configs_ok:
        print("\n🎉 ¡Todo listo para continuar!")
        print("📝 Próximos pasos:")
        print("   1. python -m src.cli selftest")
        print("   2. python scripts/run_acceptance.py")
    else:
        print("\n❌ Resolver problemas antes de continuar")


if __name__ == "__main__":
    main()
