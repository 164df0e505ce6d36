import os

from hypothesis import settings

# derandomized so repeated runs see identical examples
settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))
