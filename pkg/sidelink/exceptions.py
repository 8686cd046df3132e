class SidelinkError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SidelinkError, ValueError):
    pass


class AllocationError(SidelinkError, ValueError):
    pass


class ContractError(SidelinkError, ValueError):
    pass


class NotCrossedError(SidelinkError):

    def __init__(self, curve, target):
        self.curve = curve
        self.target = target
        super().__init__(f'Curve "{curve}" does not cross BLER {target:g} in the swept range')


class DuplicateRecordError(SidelinkError):

    def __init__(self, key):
        self.key = key
        super().__init__(f'Decode record {key} already cached')


class TrafficProtocolError(SidelinkError):
    pass
