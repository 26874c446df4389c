"""Shared exception types."""


class GranubotError(Exception):
    """Base class for all package errors."""


class ConfigError(GranubotError):
    """Invalid parameter or configuration value."""


class CatalogError(GranubotError):
    """Catalog file is unreadable, empty, or structurally broken."""


class NotFound(GranubotError):
    """A surface term or id could not be resolved."""


class EmptyCandidates(GranubotError):
    """Reasoning produced no candidate entities."""


class Reprompt(GranubotError):
    """An answer could not be matched to any granule; the question must be re-asked."""


class SessionEnded(GranubotError):
    """A turn was posted to a session whose dialogue already finished."""
