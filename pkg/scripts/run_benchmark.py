import os
import sys

# Add the src directory to the Python path
# This allows running the CLI from a source checkout without installing it
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
sys.path.insert(0, os.path.join(project_root, 'src'))

from specvit_forecast.harness.cli import main  # noqa: E402

if __name__ == "__main__":
    # Defaults to the full `run` pipeline on the desk-scale synthetic preset,
    # e.g. `python scripts/run_benchmark.py eval --config configs/smoke.toml`
    sys.exit(main(sys.argv[1:] or ["run"]))
