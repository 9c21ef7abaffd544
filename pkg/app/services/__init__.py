"""Pipeline services: numerics, data preparation, model, training and evaluation."""
