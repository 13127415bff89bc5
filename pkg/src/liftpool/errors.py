class FormatError(ValueError):
    """Malformed binary input; ``field`` names the first violated field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
