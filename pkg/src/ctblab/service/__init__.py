from .app import create_app
from .sessions import SessionError, SessionStore

__all__ = ["SessionError", "SessionStore", "create_app"]
