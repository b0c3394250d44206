from pydantic import BaseModel, ConfigDict


class StrictModel(BaseModel):
    """Immutable settings model that rejects unknown keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)
