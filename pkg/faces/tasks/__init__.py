"""Long-running jobs: data synthesis, training, evaluation."""
