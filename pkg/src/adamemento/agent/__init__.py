"""Learning agents: PPO learner with memory-reflection ensemble, and a tabular Q-learning baseline."""
