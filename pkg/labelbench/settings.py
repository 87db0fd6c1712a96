from dotenv import load_dotenv
load_dotenv()
from pathlib import Path
import os

# -------------------------
# Paths
# -------------------------
BASE_DIR = Path(__file__).resolve().parent.parent


# -------------------------
# Core
# -------------------------
# Django wants a key even without sessions; keep the real one out of git.
SECRET_KEY = os.getenv("SECRET_KEY", "dev-only-secret-key-change-me")

DEBUG = os.getenv("DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# -------------------------
# Applications
# -------------------------
INSTALLED_APPS = [
    "autolabel",
]

# No service, no database: everything lives in scene/label files.
DATABASES = {}


# -------------------------
# Pipeline
# -------------------------
AUTOLABEL = {
    # worker threads for sweeps and per-frame filtering
    "THREADS": max(1, int(os.getenv("AUTOLABEL_THREADS", "1"))),
    # config file used when a command gets no --config
    "CONFIG": os.getenv("AUTOLABEL_CONFIG", ""),
}


# -------------------------
# Logging
# -------------------------
# stderr only, so CSV/JSON written to stdout or files stays byte-identical
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
            "formatter": "plain",
        },
    },
    "loggers": {
        "autolabel": {
            "handlers": ["console"],
            "level": os.getenv("AUTOLABEL_LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}


# -------------------------
# i18n
# -------------------------
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True
