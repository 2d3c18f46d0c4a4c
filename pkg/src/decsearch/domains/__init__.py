from .nuclear import NuclearConfig, NuclearDomain
from .tiny import TinyOracleDomain

__all__ = ["NuclearConfig", "NuclearDomain", "TinyOracleDomain"]
from .grid import GridBenchmarkConfig, GridBenchmarkDomain  # noqa: E402

__all__ += ["GridBenchmarkConfig", "GridBenchmarkDomain"]
