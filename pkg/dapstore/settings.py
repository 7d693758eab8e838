import os
from pathlib import Path
from dotenv import load_dotenv

# load environment vars from .env
if os.getenv("IS_PROD", "False") == "True":
    load_dotenv(".env.prod")
else:
    load_dotenv(".env.dev")

BASE_DIR = Path(__file__).resolve().parent.parent

# Secret key for Django project (no web surface, but Django requires one)
SECRET_KEY = os.getenv(
    "DJANGO_SECRET_KEY", "dapstore-local-0c5b1d9e7a2f4e63b8a1c6d40f9e2a7b")

# Debug mode
DEBUG = os.getenv("DEBUG", "False") == "True"

ALLOWED_HOSTS = []

# Installed apps
INSTALLED_APPS = [
    # Django apps
    "django.contrib.contenttypes",
    "django.contrib.auth",

    # Third-party apps
    "rest_framework",

    # Custom apps
    "dapstore.pipeline",  # CLI commands, run ledger, training and evaluation
]

# Run ledger database
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.getenv("DAP_DB_PATH", str(BASE_DIR / "db.sqlite3")),
    }
}

# Localization settings
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

# Default primary key field type
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Thread pool size for dataset generation and candidate construction
DAP_THREADS = max(1, int(os.getenv("DAP_THREADS", "1")))

# Default root for datasets, checkpoints, logs and reports (overridden by --out)
DAP_OUTPUT_ROOT = Path(os.getenv("DAP_OUTPUT_ROOT", str(BASE_DIR / "runs")))

# Held-out evaluation scenes are drawn from seed + DAP_EVAL_SEED_OFFSET
DAP_EVAL_SEED_OFFSET = 10_000

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "standard": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "standard",
        },
    },
    "root": {
        "handlers": ["console"],
        "level": "WARNING",
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": os.getenv("LOG_LEVEL", "INFO"),
            "propagate": False,
        },
        "dapstore": {
            "handlers": ["console"],
            "level": os.getenv("LOG_LEVEL", "INFO"),
            "propagate": False,
        },
    },
}
