"""Runtime configuration for the Burgers laboratory."""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
ENV_FILE = Path(__file__).parent.parent / ".env"
load_dotenv(ENV_FILE)


class Config:
    """Base configuration."""

    # Output
    OUTPUT_DIR = os.getenv("OUTPUT_DIR", "runs")
    DEFAULT_EXPERIMENT_CONFIG = os.getenv("BURGERS_CONFIG", "configs/default.json")

    # Parallelism across realization batches
    THREADS = int(os.getenv("THREADS", 1))

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
    LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Report cache
    REPORT_CACHE_TTL = int(os.getenv("REPORT_CACHE_TTL", 10))  # seconds

    # App Configuration
    DEBUG = os.getenv("DEBUG", "True").lower() == "true"
    PORT = int(os.getenv("PORT", 8050))
    HOST = os.getenv("HOST", "127.0.0.1")


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = os.getenv("LOG_LEVEL", "DEBUG").upper()


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False


def get_config():
    """Get configuration based on environment."""
    env = os.getenv("BURGERS_ENV", "development").lower()
    if env == "production":
        return ProductionConfig
    return DevelopmentConfig
