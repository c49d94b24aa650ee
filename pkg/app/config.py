"""
Application Configuration
"""
import os
from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from ANISO_* environment variables"""

    model_config = SettingsConfigDict(
        env_prefix="ANISO_",
        env_file=os.getenv("ENV_FILE", ".env"),
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Run overrides
    seed: Optional[int] = None           # overrides the experiment seed
    workers: Optional[int] = None        # worker-count hint, overrides n_workers
    chunk_size: int = 256                # path indices per worker task

    # Run registry (SQLite); disabled when unset
    registry_path: Optional[str] = None

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None
    debug: bool = False

    @property
    def registry_url(self) -> Optional[str]:
        """SQLAlchemy URL of the run registry"""
        if not self.registry_path:
            return None
        return f"sqlite:///{self.registry_path}"


# Global settings instance
settings = Settings()
