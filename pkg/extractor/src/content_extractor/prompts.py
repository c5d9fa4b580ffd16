"""Item prompt rendering.

Must stay byte-identical to the consumer's composer; the golden files under
tests/data pin the contract. Fields render as `name: value` joined by
", ", with empty or missing values replaced by the literal `unknown`.
"""

MISSING_FIELD_TOKEN = "unknown"
THREE_FIELDS = ("title", "category", "brand")
SIX_FIELDS = ("title", "category", "brand", "price", "keywords", "attributes")


def render_prompt(item: dict, fields=THREE_FIELDS) -> str:
    parts = []
    for name in fields:
        value = item.get(name, "")
        parts.append(f"{name}: {value if value else MISSING_FIELD_TOKEN}")
    return ", ".join(parts)
