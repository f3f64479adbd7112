"""Policy networks, PPO training and RL scheduling agents."""
from .agents import lookahead_candidates, rl_la_solve, rl_mf_solve
from .nets import Adam, Mlp
from .policy import (Architecture, PolicyParams, argmax_action, enumerate_probable, log_prob,
                     log_prob_grad, policy_bit_probs, sample_action, sample_actions, value)
from .ppo import TrainConfig, TrainResult, architecture_for, ppo_train

__all__ = [
    "Adam", "Architecture", "Mlp", "PolicyParams", "TrainConfig", "TrainResult", "architecture_for",
    "argmax_action", "enumerate_probable", "log_prob", "log_prob_grad", "lookahead_candidates",
    "policy_bit_probs", "ppo_train", "rl_la_solve", "rl_mf_solve", "sample_action", "sample_actions", "value",
]
