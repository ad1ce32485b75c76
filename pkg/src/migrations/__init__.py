"""Schema migrations for the metrics database."""
