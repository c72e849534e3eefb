"""Error taxonomy shared by every layer.

Each error carries a stable ``code`` string; the gateway maps codes to
HTTP-style status numbers without inspecting messages.
"""


class RepsimError(Exception):
    code = "internal"
    http_status = 500


class NotFound(RepsimError):
    code = "not_found"
    http_status = 404


class AlreadyExists(RepsimError):
    code = "already_exists"
    http_status = 409


class InvalidArgument(RepsimError):
    code = "invalid_argument"
    http_status = 400


class Conflict(RepsimError):
    code = "conflict"
    http_status = 409


class FailedPrecondition(RepsimError):
    code = "failed_precondition"
    http_status = 412


class Unsupported(RepsimError):
    code = "unsupported"
    http_status = 422


class Unavailable(RepsimError):
    # Site marked failed; a caller error in this simulator, not a server fault.
    code = "unavailable"
    http_status = 423


class Backpressure(RepsimError):
    code = "backpressure"
    http_status = 429
