from .app import create_app
from .core import DEFAULT_CRITERIA, StudyConfig, StudyService

__all__ = ["StudyService", "StudyConfig", "DEFAULT_CRITERIA", "create_app"]
