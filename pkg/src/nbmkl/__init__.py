"""Multi-task multiple kernel learning with learned neighborhood matrices."""
