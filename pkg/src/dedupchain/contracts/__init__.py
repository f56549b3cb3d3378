from .dedu import (
    TRANSITIONS,
    ContractConfig,
    CrossRecord,
    CrossState,
    DeduContract,
    Quote,
    RequestRecord,
    RequestState,
    TagRow,
    water_fill,
)
from .interdedu import RegistryEntry, RootRegistry, TagFound

__all__ = [
    "TRANSITIONS", "ContractConfig", "CrossRecord", "CrossState", "DeduContract", "Quote",
    "RequestRecord", "RequestState", "TagRow", "water_fill",
    "RegistryEntry", "RootRegistry", "TagFound",
]
