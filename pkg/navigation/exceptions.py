class NavigationError(Exception):
    """Base class for all navigation stack errors"""


class DegenerateInput(NavigationError, ValueError):
    """Input geometry does not define the requested model"""


class NoCurb(NavigationError):
    """The curb pipeline could not produce an estimate for this frame"""


class NoPath(NavigationError):
    """No path exists inside the walkable area"""


class ScenarioError(NavigationError, ValueError):
    """Scenario file or parameter override is invalid"""
