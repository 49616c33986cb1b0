"""Exception types shared across the simulator."""


class SuctionSimError(Exception):
    """Base class for all simulator errors."""


class DomainError(SuctionSimError, ValueError):
    """An argument fell outside its mathematical domain."""


class ConfigError(SuctionSimError, ValueError):
    """A configuration value is structurally invalid."""


class ScenarioError(SuctionSimError, ValueError):
    """A scenario cannot be realized (e.g. overlapping pool spawn regions)."""


class SimulationFault(SuctionSimError, RuntimeError):
    """The particle state became non-finite; carries the step index."""

    def __init__(self, step_index: int, detail: str = ""):
        self.step_index = step_index
        super().__init__(f"non-finite simulation state at step {step_index} {detail}".rstrip())


class PlanExhausted(SuctionSimError):
    """No pool referenced by the active plan survives."""


class ParseError(SuctionSimError, ValueError):
    """A reasoner response could not be turned into a plan."""


class TransportError(SuctionSimError, RuntimeError):
    """Base class for chat-client transport failures."""


class RateLimited(TransportError):
    def __init__(self, retry_after: float | None = None):
        self.retry_after = retry_after
        super().__init__(f"rate limited (retry after {retry_after})")


class ReplayMiss(TransportError):
    def __init__(self, fingerprint: str):
        self.fingerprint = fingerprint
        super().__init__(f"no cassette entry for fingerprint {fingerprint}")


class CassetteError(SuctionSimError, ValueError):
    """A cassette file is malformed or inconsistent."""
