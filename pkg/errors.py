"""
Exception hierarchy shared by the planner, the simulator and the front ends.
"""


class PlannerError(Exception):
    """Base class for every error raised by this package"""


class DomainError(PlannerError, ValueError):
    """A value lies outside the domain of the search space (e.g. negative time)"""


class ConfigurationError(PlannerError, ValueError):
    """Inconsistent grid, vehicle or planner configuration"""


class ObstacleHorizonError(PlannerError):
    """An obstacle was queried past the end of its prediction horizon"""


class StartInCollisionError(PlannerError):
    """The planning start state already lies inside an obstacle"""


class ReconstructionError(PlannerError):
    """The parent chain of a search node is broken"""


class StitchError(PlannerError):
    """Two trajectories disagree at the switching time"""


class ScenarioError(PlannerError, ValueError):
    """A scenario file does not validate; the message names the offending field"""


class SimulationAbort(PlannerError):
    """Ground-truth collision during a closed-loop run"""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log
