import os

MLFLOW_UI_URL = os.environ.get("MLFLOW_TRACKING_URI", "file:./mlruns")
EXPERIMENT_NAME = "landing-flows"
MLFLOW_ACTIVE = False
