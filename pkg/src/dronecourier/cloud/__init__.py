from .service import (
    CapacityError,
    CloudError,
    CloudService,
    ConflictError,
    NotFoundError,
    OrderStatus,
    UnresolvableAddressError,
    ValidationError,
)

__all__ = [
    "CapacityError", "CloudError", "CloudService", "ConflictError",
    "NotFoundError", "OrderStatus", "UnresolvableAddressError", "ValidationError",
]
