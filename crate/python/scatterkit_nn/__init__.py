"""Training and export side of the support-extraction network."""
