"""Energy and delay aware power control: game-theoretic and centralized solvers."""
