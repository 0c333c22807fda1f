from typing import Iterable, Mapping, Sequence, Union

Scalar = Union[int, float, str]


class TextReport:
    """Plain-text report helpers shared by the CLI subcommands."""

    @staticmethod
    def format_value(value: Scalar) -> str:
        """Render floats with full precision so reports are comparable byte for byte."""
        if isinstance(value, float):
            return repr(value)
        return str(value)

    @staticmethod
    def key_values(values: Mapping[str, Scalar]) -> str:
        """Return a flat `key=value` block, one entry per line, in insertion order."""
        lines = [f"{key}={TextReport.format_value(value)}" for key, value in values.items()]
        return "\n".join(lines) + "\n"

    @staticmethod
    def tsv(rows: Iterable[Sequence[Scalar]]) -> str:
        """Return tab-separated lines."""
        lines = ["\t".join(TextReport.format_value(cell) for cell in row) for row in rows]
        if not lines:
            return ""
        return "\n".join(lines) + "\n"
