from enum import Enum


class ScenarioName(Enum):
    """
    Named initial/base states in the scenario library.
    """
    CONSTANT = "constant"
    BELTRAMI_ALFVEN = "beltrami_alfven"
    PERTURBED_ALFVEN = "perturbed_alfven"
    RANDOM_SMOOTH = "random_smooth"
    MHD_EMBED = "mhd_embed"
    FROM_FILE = "from_file"

    def __str__(self) -> str:
        return self.value


class CheckSuite(Enum):
    OPERATORS = "operators"
    ALGEBRA = "algebra"
    MAPPING = "mapping"
    DUAL = "dual"
    ALL = "all"

    def __str__(self) -> str:
        return self.value
