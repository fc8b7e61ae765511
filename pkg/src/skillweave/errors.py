"""Exception hierarchy shared across the package.

Every module raises subclasses of SkillweaveError so the CLI can map any
expected failure to exit code 1 while genuine bugs still surface as
ordinary tracebacks.
"""


class SkillweaveError(Exception):
    """Base class for all expected, user-facing failures."""


class SkillBankError(SkillweaveError):
    """Skill repository is malformed or a lookup failed."""


class ParseError(SkillweaveError):
    """A model reply did not conform to its expected output format."""


class RenderError(SkillweaveError):
    """A prompt template could not be rendered from the given bindings."""


class ProviderError(SkillweaveError):
    """A chat-completion call failed."""


class AuthenticationError(ProviderError):
    """Credentials missing or rejected. Never retried."""


class ContentRefusalError(ProviderError):
    """The provider refused to answer the prompt. Never retried."""


class TransportError(ProviderError):
    """Network-level failure. Retried with backoff up to the attempt limit."""


class UnrecordedRequestError(ProviderError):
    """Replay mode received a request with no matching recording."""


class PipelineError(SkillweaveError):
    """Generation pipeline misconfiguration or contract violation."""


class ReviewError(SkillweaveError):
    """Review workflow rejected an operation (bad claim, duplicate, ...)."""


class EvaluationError(SkillweaveError):
    """Evaluation or analysis could not proceed on the given inputs."""
