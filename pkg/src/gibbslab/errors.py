"""Exception hierarchy shared by all gibbslab modules."""


class GibbsLabError(ValueError):
    """Base class for domain errors raised by gibbslab."""

    def details(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class InvalidDistribution(GibbsLabError):
    pass


class InvalidParameter(GibbsLabError):
    pass


class InvalidInput(GibbsLabError):
    pass


class SchemaError(GibbsLabError):
    """Malformed family specification; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field

    def details(self) -> dict:
        d = super().details()
        d["field"] = self.field
        return d


class EmptyCondition(GibbsLabError):
    """The conditioning event carries zero probability."""

    def __init__(self, interval, available_mass: float):
        super().__init__(
            f"conditioning event {interval} has zero mass "
            f"(total available mass {available_mass:.6g})"
        )
        self.interval = interval
        self.available_mass = available_mass

    def details(self) -> dict:
        d = super().details()
        d["interval"] = str(self.interval)
        d["available_mass"] = self.available_mass
        return d


class InstanceTooLarge(GibbsLabError):
    pass


class TargetUnreachable(GibbsLabError):
    pass


class MonotonicityUnavailable(GibbsLabError):
    pass
