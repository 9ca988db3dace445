"""Contextual bandit with a hypernetwork-generated, period-dependent preference matrix."""
