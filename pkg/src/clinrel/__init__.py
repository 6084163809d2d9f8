"""Clinical relation extraction with entity-marker transformer inputs."""

__version__ = "0.1.0"
