from .scripted_policy.scripted_policy import policy
