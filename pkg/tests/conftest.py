from hypothesis import settings

# property tests must behave identically on every run, like everything
# else in this project
settings.register_profile("deterministic", derandomize=True, deadline=None)
settings.load_profile("deterministic")
