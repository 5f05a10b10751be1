from hypothesis import settings

# property tests draw the same examples on every run; reproducibility is part
# of the artifact's contract
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")
