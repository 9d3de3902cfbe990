"""Dependency imports with a friendly error if missing."""

try:
    from scipy import integrate, interpolate, optimize, special, stats
except Exception as exc:  # pragma: no cover - import guard for missing deps
    raise RuntimeError("scipy is required. Install from requirements.txt.") from exc

__all__ = ["integrate", "interpolate", "optimize", "special", "stats"]
