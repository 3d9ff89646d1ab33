from .random_policy.random_policy import policy
