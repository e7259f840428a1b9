from pathlib import Path

from environs import Env

env = Env()
env.read_env()

BASE_DIR = Path(__file__).resolve().parent.parent

PARAMS_PATH = env.path("GRIDSYN_PARAMS", BASE_DIR / "data" / "ies_params.yaml")
SCENARIO_PATH = env.path("GRIDSYN_SCENARIO", BASE_DIR / "data" / "scenarios" / "desk.yaml")
OUT_DIR = env.path("GRIDSYN_OUT", BASE_DIR / "out")
SEED = env.int("GRIDSYN_SEED", 20210701)
WORKERS = env.int("GRIDSYN_WORKERS", 1)
RECORD_RUNS = env.bool("GRIDSYN_RECORD_RUNS", False)
LOG_LEVEL = env.str("GRIDSYN_LOG_LEVEL", "INFO")
