import os
from dotenv import load_dotenv

# Load environment variables from a .env file if it exists
# Useful for local development without exporting variables in every shell
load_dotenv()

# --- Runtime Configuration ---

# Worker pool size used for rendering images and fitting baselines.
# Training always runs one variant at a time regardless of this value.
WORKERS = max(1, int(os.getenv("SPECVIT_WORKERS", "4")))

# Log level applied by the CLI (DEBUG, INFO, WARNING, ERROR)
LOG_LEVEL = os.getenv("SPECVIT_LOG_LEVEL", "INFO").upper()

# Experiment file used when --config is not given
DEFAULT_CONFIG_PATH = os.getenv("SPECVIT_CONFIG", "configs/synthetic_desk.toml")

# Root of all artifacts (report.csv, report.md, checkpoints/, plots/, logs/, data/)
DEFAULT_OUT_DIR = os.getenv("SPECVIT_OUT_DIR", "runs")

# --- Inspection Outputs ---

# Number of training tasks rendered to PNG by the `render` command
RENDER_SAMPLES = int(os.getenv("SPECVIT_RENDER_SAMPLES", "4"))

# Number of test tasks drawn as prediction overlays by the `plot` command
PLOT_TASKS = int(os.getenv("SPECVIT_PLOT_TASKS", "6"))
