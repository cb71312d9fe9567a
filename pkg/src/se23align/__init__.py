"""Initial alignment in an inertial frame with Lie-group error-state Kalman filters."""
