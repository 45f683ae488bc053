import os

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Core settings
    PROJECT_NAME: str = "freeot"
    ENVIRONMENT: str = "development"
    LOG_LEVEL: str = "INFO"

    # Measures
    ATOM_MERGE_RTOL: float = 1e-12

    # Transform inverses and subordination
    INVERSE_EPS: float = 1e-9
    ROOT_XTOL: float = 1e-15
    INVARIANT_TOL: float = 1e-10
    BRACKET_SCAN_POINTS: int = 1024
    BRACKET_MAX_DOUBLINGS: int = 200

    # Sinkhorn
    SINKHORN_TOL: float = 1e-12
    SINKHORN_MAX_ITER: int = 100_000
    LOG_DOMAIN_MARGIN: float = 1e-3
    VALUE_CONSISTENCY_TOL: float = 1e-8
    MAX_TENSOR_ENTRIES: int = 1_000_000

    # Finite free probability
    PERMANENT_MAX_N: int = 22
    ENUMERATION_MAX_N: int = 8
    FINITE_FREE_MAX_N: int = 64
    FINITE_FREE_DPS: int = 60
    HAAR_MAX_N: int = 64

    # Monte Carlo
    MC_CHUNK_SIZE: int = 1000
    MC_MIN_SAMPLES: int = 100
    DEFAULT_SEED: int = 0
    THREADS: int = 1

    # Output
    JSON_SCHEMA_VERSION: int = 1
    JSON_DIGITS: int = 17

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


def get_settings() -> Settings:
    """Get settings with environment-specific configuration."""
    env = os.getenv("ENVIRONMENT", "development")

    if env == "test":
        # Use test-specific env file if it exists
        if os.path.exists(".env.test"):
            return Settings(_env_file=".env.test")
        else:
            return Settings(ENVIRONMENT="test", LOG_LEVEL="WARNING", THREADS=1)

    settings_instance = Settings()
    if env == "production":
        if settings_instance.THREADS < 1:
            raise ValueError("THREADS must be a positive integer in production")

    return settings_instance


settings = get_settings()
