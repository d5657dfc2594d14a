# errors.py
"""
Hiérarchie des erreurs du pipeline.
Chaque famille porte son code de sortie CLI (voir app.py).
"""


class PipelineError(Exception):
    """Erreur de base : un code court, un message lisible et des détails."""

    exit_code = 1

    def __init__(self, code, message="", /, **details):
        super().__init__(message or code)
        self.code = code
        self.message = message or code
        self.details = details

    def to_dict(self):
        """Objet d'erreur lisible par machine (option --json-errors)."""
        return {
            'error': self.code,
            'family': type(self).__name__,
            'message': self.message,
            'exit_code': self.exit_code,
            'details': {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(value):
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple, set)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return str(value)


# === CONFIGURATION (exit 2) ===

class ConfigError(PipelineError):
    exit_code = 2


# === DONNÉES ET VALIDATION (exit 3) ===

class DataError(PipelineError):
    exit_code = 3


class SchemaError(PipelineError):
    """Sortie du modèle non conforme au contrat attendu."""
    exit_code = 3


class MalformedSyntax(SchemaError):
    def __init__(self, message="", **details):
        super().__init__('malformed_syntax', message, **details)


class SchemaViolation(SchemaError):
    def __init__(self, field, reason, message="", **details):
        super().__init__('schema_violation', message or f"{field}: {reason}",
                         field=field, reason=reason, **details)
        self.field = field
        self.reason = reason


class UnknownLogReference(SchemaError):
    def __init__(self, log_id, message="", **details):
        super().__init__('unknown_log_reference',
                         message or f"log_id inconnu dans la cohorte: {log_id}",
                         log_id=log_id, **details)
        self.log_id = log_id


class MissingHeading(SchemaError):
    def __init__(self, heading, message="", **details):
        super().__init__('missing_heading', message or f"section manquante: {heading}",
                         heading=heading, **details)
        self.heading = heading


# === FOURNISSEURS LLM (exit 4) ===

class ProviderError(PipelineError):
    exit_code = 4
    transient = False


class AuthFailure(ProviderError):
    def __init__(self, message="", **details):
        super().__init__('auth_failure', message, **details)


class RateLimited(ProviderError):
    transient = True

    def __init__(self, message="", **details):
        super().__init__('rate_limited', message, **details)


class ProviderTimeout(ProviderError):
    transient = True

    def __init__(self, message="", **details):
        super().__init__('timeout', message, **details)


class ContextOverflow(ProviderError):
    # Jamais retenté : le planificateur aurait dû découper la requête
    def __init__(self, message="", **details):
        super().__init__('context_overflow', message, **details)


class SequenceExceedsContext(ProviderError):
    def __init__(self, message="", **details):
        super().__init__('sequence_exceeds_context', message, **details)


# === TENTATIVES ÉPUISÉES (exit 5) ===

class RetriesExhausted(PipelineError):
    exit_code = 5

    def __init__(self, code='retries_exhausted', message="", last_error=None, **details):
        if last_error is not None:
            details.setdefault('last_error', getattr(last_error, 'code', repr(last_error)))
            message = message or f"{code}: {last_error}"
        super().__init__(code, message, **details)
        self.last_error = last_error
