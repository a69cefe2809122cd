"""Dense-array reverse-mode autodiff, the three networks, sampling, and the optimizer."""
