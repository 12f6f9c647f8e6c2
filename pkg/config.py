import os

from dotenv import load_dotenv

load_dotenv()


class Config:
    # Logging configuration
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    BASE_LOG_LEVEL = os.getenv("BASE_LOG_LEVEL", "WARNING")

    ENV = os.getenv("ENV") or "development"
    DEBUG = (ENV == "development")

    # Worker cap for FFTs; 1 keeps every run bitwise reproducible
    THREADS = int(os.getenv("IFDM_THREADS") or 1)

    OUTPUT_DIR = os.getenv("IFDM_OUTPUT_DIR") or "output"

    # Dual solver defaults
    DEFAULT_A = 100.0
    DEFAULT_TOL = 1e-8
    DEFAULT_MAX_ITER = 500


class DevelopmentConfig(Config):
    pass


class ProductionConfig(Config):
    DEBUG = False


class TestingConfig(Config):
    LOG_LEVEL = "WARNING"
    THREADS = 1


# Map config based on environment
config_by_name = {
    "development": DevelopmentConfig,
    "production": ProductionConfig,
    "testing": TestingConfig
}
