"""Deterministic 2D simulator for a small differential-drive swarm robot.

Subpackages and modules:

* :mod:`herosim.kinematics` - wheel/body kinematics and odometry integration
* :mod:`herosim.sensing` - IR ranging, quadrature encoders, battery
* :mod:`herosim.control` - PID and Kalman filtering for wheel speed and heading
* :mod:`herosim.protocol` - framed pub/sub wire protocol and bandwidth budget
* :mod:`herosim.sim` - fixed-step world simulation
* :mod:`herosim.behaviors` - coverage, flocking and occupancy-grid mapping
* :mod:`herosim.cli` - scenario runner (``herosim run|budget|calibrate``)
"""
from .kinematics import Pose2D, RobotGeometry, Twist

__version__ = "0.1.0"

__all__ = ["Pose2D", "RobotGeometry", "Twist", "__version__"]
