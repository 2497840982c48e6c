from pathlib import Path
import os
from dotenv import load_dotenv

# --------------------------------------------------
# BASE
# --------------------------------------------------
BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(BASE_DIR / ".env")

SECRET_KEY = os.getenv("DNSIM_SECRET_KEY", "dnsim-insecure-dev-key")
DEBUG = os.getenv("DNSIM_DEBUG", "0") == "1"
ALLOWED_HOSTS = []

# --------------------------------------------------
# APPS
# --------------------------------------------------
INSTALLED_APPS = [
    'dnsim',
]

MIDDLEWARE = []

# --------------------------------------------------
# TEMPLATES (markdown reports)
# --------------------------------------------------
TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'autoescape': False,
            'context_processors': [],
        },
    },
]

# --------------------------------------------------
# DATABASE (unused; results are CSV files)
# --------------------------------------------------
DATABASES = {}

# --------------------------------------------------
# INTERNATIONALIZATION
# --------------------------------------------------
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# --------------------------------------------------
# SIMULATOR OUTPUT / LOGGING
# --------------------------------------------------
DNSIM_OUTPUT_DIR = Path(os.getenv("DNSIM_OUTPUT_DIR", BASE_DIR / "results"))
DNSIM_LOG_DIR = Path(os.getenv("DNSIM_LOG_DIR", BASE_DIR / "logs"))
DNSIM_LOG_LEVEL = os.getenv("DNSIM_LOG_LEVEL", "INFO").upper()

# --------------------------------------------------
# SWEEP WORKER POOL
# --------------------------------------------------
DNSIM_WORKERS = max(1, int(os.getenv("DNSIM_WORKERS", os.cpu_count() or 1)))

# --------------------------------------------------
# RESULT FILES
# --------------------------------------------------
DNSIM_SESSIONS_CSV = "sessions.csv"
DNSIM_SUMMARY_CSV = "summary.csv"
DNSIM_REDUNDANCY_CSV = "redundancy.csv"
DNSIM_FEEDBACK_CSV = "feedback.csv"
DNSIM_EVENTS_CSV = "events.csv"
DNSIM_SWEEP_CSV = "sweep.csv"
DNSIM_SWEEP_MD = "sweep.md"
