"""
Base model classes with common functionality.
"""

from typing import Any, Dict

from pydantic import BaseModel, ConfigDict


class StrictModel(BaseModel):
    """
    Abstract base for configuration blocks.
    Unknown keys are rejected and instances are immutable.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert model instance to a plain dictionary.

        Returns:
            Dictionary representation of the model
        """
        return self.model_dump(mode="json")

    def update(self, **kwargs: Any) -> "StrictModel":
        """
        Copy of the model with the given fields replaced and re-validated.

        Args:
            **kwargs: Attribute name-value pairs to update

        Returns:
            New validated instance
        """
        data = self.model_dump()
        data.update(kwargs)
        return type(self).model_validate(data)

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}({', '.join(f'{k}={v!r}' for k, v in self.model_dump().items())})>"
