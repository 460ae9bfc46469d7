"""Distributionally robust offline RL for linear MDPs with TV uncertainty."""
